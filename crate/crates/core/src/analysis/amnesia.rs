use serde::{Deserialize, Serialize};

use super::pairs::PairContext;
use super::stats::{median, Quartiles};
use crate::error::{Error, Result};
use crate::retrieval::{HitJudge, RunList};

/// Dense-rank buckets given by inclusive upper bounds; the last bucket is
/// open-ended and also holds passages missing from the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankBuckets {
    bounds: Vec<usize>,
}

impl Default for RankBuckets {
    fn default() -> Self {
        RankBuckets {
            bounds: vec![5, 20, 100],
        }
    }
}

impl RankBuckets {
    pub fn new(bounds: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds[0] == 0 || bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "bucket bounds must be positive and strictly ascending: {bounds:?}"
            )));
        }
        Ok(RankBuckets { bounds })
    }

    pub fn len(&self) -> usize {
        self.bounds.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn bucket(&self, rank: Option<usize>) -> usize {
        match rank {
            Some(r) => self.bounds.iter().position(|&b| r <= b).unwrap_or(self.bounds.len()),
            None => self.bounds.len(),
        }
    }

    pub fn label(&self, bucket: usize) -> String {
        let lo = if bucket == 0 { 1 } else { self.bounds[bucket - 1] + 1 };
        match self.bounds.get(bucket) {
            Some(hi) => format!("{lo}-{hi}"),
            None => format!(">{}", lo - 1),
        }
    }
}

/// Queries whose BM25 top-`depth` contains a correct passage, each paired
/// with the highest-ranked such passage.
pub fn select_amnesia_pairs(bm25: &RunList, judge: &dyn HitJudge, depth: usize) -> Vec<(String, String)> {
    bm25.iter()
        .filter_map(|(qid, docs)| {
            docs.iter()
                .take(depth)
                .find(|d| judge.is_hit(qid, &d.pid))
                .map(|d| (qid.to_string(), d.pid.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmnesiaRecord {
    pub qid: String,
    pub pid: String,
    pub dense_rank: Option<usize>,
    pub bucket: usize,
    pub n_shared: usize,
    pub max_rank_p: usize,
    pub max_rank_q: usize,
    pub median_rank_p: f64,
    pub median_rank_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketSummary {
    pub label: String,
    pub n_pairs: usize,
    /// Distribution of per-pair maximal shared-token rank in P.
    pub max_rank_p: Option<Quartiles>,
    pub max_rank_q: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmnesiaProfile {
    pub buckets: RankBuckets,
    pub records: Vec<AmnesiaRecord>,
    pub summary: Vec<BucketSummary>,
    /// Pairs skipped because question and passage share no content token.
    pub n_without_shared: usize,
}

impl AmnesiaProfile {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Relate how deep the shared tokens sit in each projection to where the
/// dense retriever ranks the passage.
pub fn amnesia_profile(pairs: &[PairContext], dense: &RunList, buckets: &RankBuckets) -> Result<AmnesiaProfile> {
    let mut records = Vec::with_capacity(pairs.len());
    let mut n_without_shared = 0;
    for pair in pairs {
        let shared = pair.shared();
        if shared.is_empty() {
            n_without_shared += 1;
            continue;
        }
        let ranks = |which: &super::pairs::RankSummary| -> Result<Vec<usize>> {
            shared
                .iter()
                .map(|&t| {
                    which
                        .rank(t)
                        .ok_or_else(|| Error::validation(format!("no rank kept for token {t}")))
                })
                .collect()
        };
        let rp = ranks(&pair.p)?;
        let rq = ranks(&pair.q)?;
        let as_f64 = |v: &[usize]| v.iter().map(|&r| r as f64).collect::<Vec<_>>();
        let dense_rank = dense.rank_of(&pair.qid, &pair.pid);
        records.push(AmnesiaRecord {
            qid: pair.qid.clone(),
            pid: pair.pid.clone(),
            dense_rank,
            bucket: buckets.bucket(dense_rank),
            n_shared: shared.len(),
            max_rank_p: *rp.iter().max().expect("non-empty"),
            max_rank_q: *rq.iter().max().expect("non-empty"),
            median_rank_p: median(&as_f64(&rp)).expect("non-empty"),
            median_rank_q: median(&as_f64(&rq)).expect("non-empty"),
        });
    }
    let summary = (0..buckets.len())
        .map(|b| {
            let members: Vec<&AmnesiaRecord> = records.iter().filter(|r| r.bucket == b).collect();
            let p: Vec<f64> = members.iter().map(|r| r.max_rank_p as f64).collect();
            let q: Vec<f64> = members.iter().map(|r| r.max_rank_q as f64).collect();
            BucketSummary {
                label: buckets.label(b),
                n_pairs: members.len(),
                max_rank_p: Quartiles::of(&p),
                max_rank_q: Quartiles::of(&q),
            }
        })
        .collect();
    Ok(AmnesiaProfile {
        buckets: buckets.clone(),
        records,
        summary,
        n_without_shared,
    })
}
