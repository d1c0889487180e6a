use serde::Serialize;

use super::run::{HitJudge, Qrels, RunList};
use crate::error::{Error, Result};

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// True iff some non-empty answer occurs in `passage` as a case-insensitive,
/// whitespace-normalized substring that starts and ends on word boundaries.
pub fn answer_hit(passage: &str, answers: &[String]) -> bool {
    let text = normalize(passage);
    answers.iter().any(|a| {
        let needle = normalize(a);
        if needle.is_empty() {
            return false;
        }
        text.match_indices(&needle).any(|(start, m)| {
            let end = start + m.len();
            let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c))
                || !needle.chars().next().is_some_and(is_word_char);
            let after_ok = text[end..].chars().next().is_none_or(|c| !is_word_char(c))
                || !needle.chars().next_back().is_some_and(is_word_char);
            before_ok && after_ok
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub mode: String,
    pub n_queries: usize,
    /// `(k, fraction of queries with a hit in the top k)`.
    pub values: Vec<(usize, f64)>,
}

/// Fraction of run queries with at least one hit among the first `k`
/// results, for each `k` in the grid.
pub fn topk_accuracy(run: &RunList, judge: &dyn HitJudge, k_grid: &[usize]) -> Result<AccuracyReport> {
    if run.is_empty() {
        return Err(Error::Empty("run has no queries".into()));
    }
    if k_grid.contains(&0) {
        return Err(Error::validation("cutoffs must be positive"));
    }
    let unjudged: Vec<&str> = run.query_ids().filter(|q| !judge.is_judged(q)).collect();
    if !unjudged.is_empty() {
        let shown: Vec<&str> = unjudged.iter().take(10).copied().collect();
        return Err(Error::validation(format!(
            "{} unjudged queries: {}",
            unjudged.len(),
            shown.join(", ")
        )));
    }
    // Rank of the first hit per query.
    let first_hit: Vec<Option<usize>> = run
        .iter()
        .map(|(qid, docs)| docs.iter().position(|d| judge.is_hit(qid, &d.pid)).map(|i| i + 1))
        .collect();
    let n = first_hit.len();
    let values = k_grid
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            (k, hits as f64 / n as f64)
        })
        .collect();
    Ok(AccuracyReport {
        mode: judge.mode().to_string(),
        n_queries: n,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdcgReport {
    pub cutoff: usize,
    pub value: f64,
    pub n_queries: usize,
    /// Run queries with no relevant passage, left out of the mean.
    pub n_excluded: usize,
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Mean nDCG at `cutoff` with linear gains equal to the relevance grade.
pub fn ndcg_at(run: &RunList, qrels: &Qrels, cutoff: usize) -> Result<NdcgReport> {
    if cutoff == 0 {
        return Err(Error::validation("cutoff must be positive"));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    let mut excluded = 0usize;
    for (qid, docs) in run.iter() {
        let mut ideal: Vec<i32> = qrels
            .for_query(qid)
            .map(|m| m.values().copied().filter(|&g| g > 0).collect())
            .unwrap_or_default();
        if ideal.is_empty() {
            excluded += 1;
            continue;
        }
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, &g)| g as f64 * discount(i + 1))
            .sum();
        let dcg: f64 = docs
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, d)| qrels.grade(qid, &d.pid).max(0) as f64 * discount(i + 1))
            .sum();
        total += dcg / idcg;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no run query has a relevant passage".into()));
    }
    Ok(NdcgReport {
        cutoff,
        value: total / n as f64,
        n_queries: n,
        n_excluded: excluded,
    })
}

pub fn ndcg_at_10(run: &RunList, qrels: &Qrels) -> Result<NdcgReport> {
    ndcg_at(run, qrels, 10)
}

/// Mean reciprocal rank of the first hit within `cutoff`.
pub fn mrr_at(run: &RunList, judge: &dyn HitJudge, cutoff: usize) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::Empty("run has no queries".into()));
    }
    let sum: f64 = run
        .iter()
        .map(|(qid, docs)| {
            docs.iter()
                .take(cutoff)
                .position(|d| judge.is_hit(qid, &d.pid))
                .map_or(0.0, |i| 1.0 / (i + 1) as f64)
        })
        .sum();
    Ok(sum / run.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::ScoredDoc;

    fn run_with_gold_at(ranks: &[Option<usize>]) -> (RunList, Qrels) {
        let mut run = RunList::new();
        let mut qrels = Qrels::new();
        for (qi, r) in ranks.iter().enumerate() {
            let qid = format!("q{qi}");
            let docs = (1..=30)
                .map(|i| {
                    let pid = if Some(i) == *r { format!("gold{qi}") } else { format!("x{qi}_{i:02}") };
                    ScoredDoc::new(pid, 100.0 - i as f64)
                })
                .collect();
            run.insert(qid.clone(), docs).unwrap();
            qrels.insert(qid, format!("gold{qi}"), 1);
        }
        (run, qrels)
    }

    #[test]
    fn accuracy_counts() {
        let (run, qrels) = run_with_gold_at(&[Some(1), Some(3), Some(25), None]);
        let r = topk_accuracy(&run, &qrels, &[5, 20, 100]).unwrap();
        assert_eq!(r.values, vec![(5, 0.5), (20, 0.5), (100, 0.75)]);
        assert_eq!(r.mode, "gold");

        let (run, qrels) = run_with_gold_at(&[Some(6)]);
        let r = topk_accuracy(&run, &qrels, &[5, 20]).unwrap();
        assert_eq!(r.values, vec![(5, 0.0), (20, 1.0)]);
    }

    #[test]
    fn unjudged_query_is_error() {
        let (run, _) = run_with_gold_at(&[Some(1)]);
        let err = topk_accuracy(&run, &Qrels::new(), &[1]).unwrap_err();
        assert!(err.to_string().contains("q0"));
    }

    #[test]
    fn ndcg_single_relevant() {
        let (run, qrels) = run_with_gold_at(&[Some(1)]);
        assert_eq!(ndcg_at_10(&run, &qrels).unwrap().value, 1.0);
        let (run, qrels) = run_with_gold_at(&[Some(2)]);
        assert!((ndcg_at_10(&run, &qrels).unwrap().value - 0.630_929_753_571_457_4).abs() < 1e-12);
        let (run, qrels) = run_with_gold_at(&[Some(11)]);
        assert_eq!(ndcg_at_10(&run, &qrels).unwrap().value, 0.0);
    }

    #[test]
    fn ndcg_excludes_queries_without_relevant_docs() {
        let (run, mut qrels) = run_with_gold_at(&[Some(1), Some(2)]);
        qrels.insert("q1", "gold1", 0);
        let r = ndcg_at_10(&run, &qrels).unwrap();
        assert_eq!((r.n_queries, r.n_excluded, r.value), (1, 1, 1.0));
    }

    #[test]
    fn mrr_values() {
        let (run, qrels) = run_with_gold_at(&[Some(1), Some(4), None]);
        let v = mrr_at(&run, &qrels, 10).unwrap();
        assert!((v - (1.0 + 0.25) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn answer_matching() {
        let answers = |a: &[&str]| a.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let passage = "... which connect to the atlantic ocean through the Saint  Lawrence\nRiver .";
        assert!(answer_hit(passage, &answers(&["the saint lawrence river"])));
        assert!(!answer_hit(passage, &answers(&[""])));
        assert!(!answer_hit(passage, &answers(&["  "])));
        assert!(!answer_hit("concatenate", &answers(&["cat"])));
        assert!(answer_hit("concatenate the cat.", &answers(&["cat"])));
        assert!(answer_hit("born in 1958", &answers(&["1958"])));
        assert!(!answer_hit("born in 19580", &answers(&["1958"])));
    }
}
