//! TREC run (`qid Q0 pid rank score tag`) and qrels (`qid 0 pid rel`) files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::retrieval::{Qrels, RunList, ScoredDoc};

pub fn format_run(run: &RunList, tag: &str) -> String {
    let mut out = String::new();
    for (qid, docs) in run.iter() {
        for (i, d) in docs.iter().enumerate() {
            let _ = writeln!(out, "{qid} Q0 {} {} {} {tag}", d.pid, i + 1, d.score);
        }
    }
    out
}

pub fn write_run(run: &RunList, tag: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_run(run, tag)).map_err(|e| Error::io(path, e))
}

/// Parse a run. Lines may be tab or space separated; per-query order follows
/// the rank column and is then put into canonical (score, pid) order.
pub fn parse_run(text: &str, origin: &Path) -> Result<RunList> {
    let mut grouped: IndexMap<String, Vec<(usize, ScoredDoc)>> = IndexMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::format(
                origin,
                format!("line {}: expected 6 fields, found {}", idx + 1, fields.len()),
            ));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| Error::format(origin, format!("line {}: bad rank", idx + 1)))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::format(origin, format!("line {}: bad score", idx + 1)))?;
        grouped
            .entry(fields[0].to_string())
            .or_default()
            .push((rank, ScoredDoc::new(fields[2], score)));
    }
    let mut run = RunList::new();
    for (qid, mut docs) in grouped {
        docs.sort_by_key(|(rank, _)| *rank);
        run.insert(qid, docs.into_iter().map(|(_, d)| d).collect())
            .map_err(|e| e.context(origin.display().to_string()))?;
    }
    Ok(run)
}

pub fn read_run(path: impl AsRef<Path>) -> Result<RunList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

pub fn format_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (qid, docs) in qrels.iter() {
        for (pid, rel) in docs {
            let _ = writeln!(out, "{qid} 0 {pid} {rel}");
        }
    }
    out
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_qrels(qrels)).map_err(|e| Error::io(path, e))
}

pub fn parse_qrels(text: &str, origin: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::format(
                origin,
                format!("line {}: expected 4 fields, found {}", idx + 1, fields.len()),
            ));
        }
        let rel: i32 = fields[3]
            .parse()
            .map_err(|_| Error::format(origin, format!("line {}: bad relevance", idx + 1)))?;
        qrels.insert(fields[0], fields[2], rel);
    }
    Ok(qrels)
}

pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_round_trip_keeps_scores_exact() {
        let mut run = RunList::new();
        run.insert(
            "q_1",
            vec![ScoredDoc::new("d_1", 0.1 + 0.2), ScoredDoc::new("d_2", -1e-17)],
        )
        .unwrap();
        run.insert("q_0", vec![ScoredDoc::new("d_9", 3.0)]).unwrap();
        let text = format_run(&run, "dense");
        assert!(text.starts_with("q_1 Q0 d_1 1 0.30000000000000004 dense\n"));
        let back = parse_run(&text, Path::new("mem")).unwrap();
        assert_eq!(back, run);
    }

    #[test]
    fn tab_separated_runs_parse() {
        let run = parse_run("q1\tQ0\td2\t2\t0.4\tx\nq1\tQ0\td1\t1\t0.5\tx\n", Path::new("m")).unwrap();
        assert_eq!(run.rank_of("q1", "d1"), Some(1));
        assert_eq!(run.rank_of("q1", "d2"), Some(2));
    }

    #[test]
    fn qrels_parse() {
        let q = parse_qrels("q_1 0 d_1 1\nq_1 0 d_2 0\nq_1 0 d_3 2\nq_2 0 d_2 2\n", Path::new("m")).unwrap();
        assert_eq!(q.grade("q_1", "d_3"), 2);
        assert_eq!(q.relevant("q_2"), ["d_2"]);
        assert_eq!(parse_qrels(&format_qrels(&q), Path::new("m")).unwrap(), q);
    }

    #[test]
    fn short_line_reports_line_number() {
        let err = parse_qrels("q 0 d 1\nq 0 d\n", Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
