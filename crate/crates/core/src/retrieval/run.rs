use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub pid: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(pid: impl Into<String>, score: f64) -> Self {
        ScoredDoc {
            pid: pid.into(),
            score,
        }
    }
}

/// Descending score, then ascending passage id.
pub fn ranking_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.pid.cmp(&b.pid))
}

/// Ranked retrieval output per query, in query insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunList {
    queries: IndexMap<String, Vec<ScoredDoc>>,
}

impl RunList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a ranking, putting it into canonical order. Duplicate passage
    /// ids or non-finite scores are rejected.
    pub fn insert(&mut self, qid: impl Into<String>, mut docs: Vec<ScoredDoc>) -> Result<()> {
        let qid = qid.into();
        if let Some(d) = docs.iter().find(|d| !d.score.is_finite()) {
            return Err(Error::validation(format!(
                "query `{qid}`: non-finite score for `{}`",
                d.pid
            )));
        }
        docs.sort_by(ranking_order);
        let mut seen = std::collections::HashSet::with_capacity(docs.len());
        if let Some(d) = docs.iter().find(|d| !seen.insert(d.pid.as_str())) {
            return Err(Error::validation(format!(
                "query `{qid}`: passage `{}` ranked twice",
                d.pid
            )));
        }
        self.queries.insert(qid, docs);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[ScoredDoc]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        self.queries.iter().map(|(q, d)| (q.as_str(), d.as_slice()))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// 1-based rank of `pid` for `qid`, if retrieved.
    pub fn rank_of(&self, qid: &str, pid: &str) -> Option<usize> {
        self.get(qid)?
            .iter()
            .position(|d| d.pid == pid)
            .map(|i| i + 1)
    }

    /// Keep only the listed queries, in their existing order.
    pub fn restrict<'a>(&self, qids: impl IntoIterator<Item = &'a str>) -> RunList {
        let keep: std::collections::HashSet<&str> = qids.into_iter().collect();
        RunList {
            queries: self
                .queries
                .iter()
                .filter(|(q, _)| keep.contains(q.as_str()))
                .map(|(q, d)| (q.clone(), d.clone()))
                .collect(),
        }
    }
}

/// Graded relevance judgments (`qid -> pid -> grade`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judged: BTreeMap<String, BTreeMap<String, i32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, pid: impl Into<String>, grade: i32) {
        self.judged
            .entry(qid.into())
            .or_default()
            .insert(pid.into(), grade);
    }

    /// Binary judgments from each query's gold passage list.
    pub fn from_gold<'a, I, P>(gold: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, P)>,
        P: IntoIterator<Item = &'a str>,
    {
        let mut q = Qrels::new();
        for (qid, pids) in gold {
            for pid in pids {
                q.insert(qid, pid, 1);
            }
        }
        q
    }

    pub fn grade(&self, qid: &str, pid: &str) -> i32 {
        self.judged
            .get(qid)
            .and_then(|m| m.get(pid))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, qid: &str) -> Option<&BTreeMap<String, i32>> {
        self.judged.get(qid)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, i32>)> {
        self.judged.iter().map(|(q, m)| (q.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.judged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judged.is_empty()
    }

    /// Passage ids with positive grade, ascending.
    pub fn relevant(&self, qid: &str) -> Vec<&str> {
        self.judged
            .get(qid)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g > 0)
                    .map(|(p, _)| p.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Decides whether a retrieved passage counts as a hit for top-k accuracy.
pub trait HitJudge {
    fn is_judged(&self, qid: &str) -> bool;
    fn is_hit(&self, qid: &str, pid: &str) -> bool;
    /// Label recorded in reports.
    fn mode(&self) -> &'static str;
}

impl HitJudge for Qrels {
    fn is_judged(&self, qid: &str) -> bool {
        self.judged.contains_key(qid)
    }

    fn is_hit(&self, qid: &str, pid: &str) -> bool {
        self.grade(qid, pid) > 0
    }

    fn mode(&self) -> &'static str {
        "gold"
    }
}

/// Hit = the passage text contains one of the query's answer strings.
pub struct AnswerJudge<'a> {
    pub answers: &'a HashMap<String, Vec<String>>,
    pub passages: &'a HashMap<String, String>,
}

impl HitJudge for AnswerJudge<'_> {
    fn is_judged(&self, qid: &str) -> bool {
        self.answers.get(qid).is_some_and(|a| !a.is_empty())
    }

    fn is_hit(&self, qid: &str, pid: &str) -> bool {
        match (self.answers.get(qid), self.passages.get(pid)) {
            (Some(answers), Some(text)) => super::answer_hit(text, answers),
            _ => false,
        }
    }

    fn mode(&self) -> &'static str {
        "answer"
    }
}
