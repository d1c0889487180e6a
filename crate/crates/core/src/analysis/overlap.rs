use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pairs::{PairContext, RankSummary};
use crate::error::{Error, Result};

fn require_pairs(pairs: &[PairContext]) -> Result<()> {
    if pairs.is_empty() {
        Err(Error::Empty("no (query, passage) pairs".into()))
    } else {
        Ok(())
    }
}

/// Which projection a statistic reads ranks from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Q,
    P,
}

impl Target {
    fn summary(self, pair: &PairContext) -> &RankSummary {
        match self {
            Target::Q => &pair.q,
            Target::P => &pair.p,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Q => "Q",
            Target::P => "P",
        })
    }
}

/// Share of top-k content tokens by where they occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryFractions {
    pub in_both: f64,
    pub q_only: f64,
    pub p_only: f64,
    pub neither: f64,
    /// Content tokens counted across all pairs.
    pub n_tokens: usize,
}

impl CategoryFractions {
    fn from_counts(c: [usize; 4]) -> Self {
        let n: usize = c.iter().sum();
        let f = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
        CategoryFractions {
            in_both: f(c[0]),
            q_only: f(c[1]),
            p_only: f(c[2]),
            neither: f(c[3]),
            n_tokens: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub k: usize,
    pub q: CategoryFractions,
    pub p: CategoryFractions,
}

/// Classify the content tokens among the top `k` of each projection as
/// occurring in both texts, only the question, only the passage, or neither.
/// Counts are pooled over pairs.
pub fn category_breakdown(pairs: &[PairContext], k: usize) -> Result<CategoryReport> {
    require_pairs(pairs)?;
    let mut counts = [[0usize; 4]; 2];
    for pair in pairs {
        for (slot, target) in [Target::Q, Target::P].into_iter().enumerate() {
            for (t, content) in target.summary(pair).top(k)? {
                if !content {
                    continue;
                }
                let cat = match (pair.tq.contains(t), pair.tp.contains(t)) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                counts[slot][cat] += 1;
            }
        }
    }
    Ok(CategoryReport {
        k,
        q: CategoryFractions::from_counts(counts[0]),
        p: CategoryFractions::from_counts(counts[1]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMode {
    /// Fraction over all shared tokens of all pairs.
    #[default]
    Pooled,
    /// Per-pair fraction, averaged over pairs with a shared token.
    PerPairMean,
}

impl FromStr for CoverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(CoverageMode::Pooled),
            "per-pair-mean" => Ok(CoverageMode::PerPairMean),
            other => Err(Error::validation(format!(
                "unknown coverage mode `{other}` (expected pooled or per-pair-mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub mode: CoverageMode,
    pub k_grid: Vec<usize>,
    pub coverage_q: Vec<f64>,
    pub coverage_p: Vec<f64>,
    pub n_shared_tokens: usize,
    pub n_pairs: usize,
    /// Pairs with at least one shared token.
    pub n_pairs_with_shared: usize,
}

impl CoverageReport {
    /// True when no pair shares a token, so every coverage value is a
    /// placeholder 0.
    pub fn is_degenerate(&self) -> bool {
        self.n_shared_tokens == 0
    }
}

fn check_grid(k_grid: &[usize]) -> Result<()> {
    if k_grid.is_empty() || k_grid.contains(&0) || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation(format!(
            "k grid must be non-empty, positive and strictly ascending: {k_grid:?}"
        )));
    }
    Ok(())
}

/// For each `k`, the fraction of tokens in `T_q ∩ T_p` ranked within the top
/// `k` of Q and of P.
pub fn shared_token_coverage(
    pairs: &[PairContext],
    k_grid: &[usize],
    mode: CoverageMode,
) -> Result<CoverageReport> {
    require_pairs(pairs)?;
    check_grid(k_grid)?;
    let mut hits = [vec![0.0f64; k_grid.len()], vec![0.0f64; k_grid.len()]];
    let mut n_shared = 0usize;
    let mut n_with = 0usize;
    for pair in pairs {
        let shared = pair.shared();
        if shared.is_empty() {
            continue;
        }
        n_with += 1;
        n_shared += shared.len();
        for (slot, target) in [Target::Q, Target::P].into_iter().enumerate() {
            let summary = target.summary(pair);
            for (i, &k) in k_grid.iter().enumerate() {
                let c = shared
                    .iter()
                    .filter(|&&t| summary.rank(t).is_some_and(|r| r <= k))
                    .count();
                hits[slot][i] += match mode {
                    CoverageMode::Pooled => c as f64,
                    CoverageMode::PerPairMean => c as f64 / shared.len() as f64,
                };
            }
        }
    }
    let denom = match mode {
        CoverageMode::Pooled => n_shared,
        CoverageMode::PerPairMean => n_with,
    };
    let finish = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|h| if denom == 0 { 0.0 } else { h / denom as f64 })
            .collect()
    };
    Ok(CoverageReport {
        mode,
        k_grid: k_grid.to_vec(),
        coverage_q: finish(&hits[0]),
        coverage_p: finish(&hits[1]),
        n_shared_tokens: n_shared,
        n_pairs: pairs.len(),
        n_pairs_with_shared: n_with,
    })
}

/// The token set whose ranks are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selector {
    /// `T_p`
    Passage,
    /// `T_q`
    Query,
    /// `T_q ∩ T_p`
    Shared,
    /// `T_q ∖ T_p`
    QueryOnly,
}

impl Selector {
    pub const ALL: [Selector; 4] = [
        Selector::Passage,
        Selector::Query,
        Selector::Shared,
        Selector::QueryOnly,
    ];

    fn tokens(self, pair: &PairContext) -> Vec<u32> {
        match self {
            Selector::Passage => pair.tp.ids.iter().copied().collect(),
            Selector::Query => pair.tq.ids.iter().copied().collect(),
            Selector::Shared => pair.shared().into_iter().collect(),
            Selector::QueryOnly => pair.query_only().into_iter().collect(),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Passage => "passage",
            Selector::Query => "query",
            Selector::Shared => "shared",
            Selector::QueryOnly => "query-only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MrrResult {
    pub selector: Selector,
    pub target: Target,
    /// `None` when no pair has a non-empty selected set.
    pub value: Option<f64>,
    pub n_pairs: usize,
}

/// Mean over pairs of `(1/|T|) Σ_{t∈T} 1/rank(t)`. Pairs whose selected set
/// is empty are skipped.
pub fn token_level_mrr(pairs: &[PairContext], selector: Selector, target: Target) -> Result<MrrResult> {
    require_pairs(pairs)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for pair in pairs {
        let tokens = selector.tokens(pair);
        if tokens.is_empty() {
            continue;
        }
        let summary = target.summary(pair);
        let rr: f64 = tokens
            .iter()
            .map(|&t| {
                let r = summary
                    .rank(t)
                    .ok_or_else(|| Error::validation(format!("no rank kept for token {t}")))?;
                Ok(1.0 / r as f64)
            })
            .sum::<Result<f64>>()?;
        sum += rr / tokens.len() as f64;
        n += 1;
    }
    Ok(MrrResult {
        selector,
        target,
        value: (n > 0).then(|| sum / n as f64),
        n_pairs: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionRow {
    pub k: usize,
    /// Fraction of pairs with at least one expansion token in the top `k` of Q.
    pub queries_with_expansion: f64,
    /// Expansion tokens over content tokens in the top `k` of Q, pooled.
    pub expansion_fraction: f64,
    pub n_pairs: usize,
    pub n_top_tokens: usize,
    pub n_expansion_tokens: usize,
}

/// An expansion token ranks in the top `k` of Q, occurs in the passage and
/// not in the question.
pub fn query_expansion_stats(pairs: &[PairContext], k_grid: &[usize]) -> Result<Vec<ExpansionRow>> {
    require_pairs(pairs)?;
    check_grid(k_grid)?;
    k_grid
        .iter()
        .map(|&k| {
            let mut with = 0usize;
            let mut top = 0usize;
            let mut expansion = 0usize;
            for pair in pairs {
                let mut here = 0usize;
                for (t, content) in pair.q.top(k)? {
                    if !content {
                        continue;
                    }
                    top += 1;
                    if pair.tp.contains(t) && !pair.tq.contains(t) {
                        here += 1;
                    }
                }
                expansion += here;
                with += usize::from(here > 0);
            }
            Ok(ExpansionRow {
                k,
                queries_with_expansion: with as f64 / pairs.len() as f64,
                expansion_fraction: if top == 0 { 0.0 } else { expansion as f64 / top as f64 },
                n_pairs: pairs.len(),
                n_top_tokens: top,
                n_expansion_tokens: expansion,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::{ContentFilter, Origin, StopList, TokenSet, Vocabulary};
    use crate::mlm_head::VocabProjection;

    const N: usize = 40;

    fn filter() -> ContentFilter {
        let mut toks = vec!["[UNK]".to_string(), "the".to_string()];
        toks.extend((2..N).map(|i| format!("w{i}")));
        ContentFilter::new(&Vocabulary::new(toks).unwrap(), &StopList::new(["the"]))
    }

    /// Projection where `order` lists the first ranked ids; the rest follow
    /// by ascending id.
    fn proj(order: &[u32]) -> VocabProjection {
        let mut logits = vec![-1000.0; N];
        for (i, &t) in order.iter().enumerate() {
            logits[t as usize] = -(i as f64);
        }
        VocabProjection::from_logits("", logits).unwrap()
    }

    fn set(ids: &[u32], origin: Origin) -> TokenSet {
        TokenSet {
            ids: ids.iter().copied().collect(),
            origin,
        }
    }

    fn pair(tq: &[u32], tp: &[u32], q: &[u32], p: &[u32]) -> PairContext {
        PairContext::new(
            "q",
            "p",
            set(tq, Origin::Query),
            set(tp, Origin::Passage),
            &proj(q),
            &proj(p),
            &filter(),
            N,
        )
    }

    #[test]
    fn coverage_counts_shared_tokens_pooled() {
        // Shared tokens ranked 1, 7 and 30 in P across two pairs.
        let mut p1: Vec<u32> = (10..40).collect();
        p1[0] = 5;
        p1[6] = 6;
        let a = pair(&[5, 6], &[5, 6], &[5, 6], &p1);
        let mut p2: Vec<u32> = (10..40).collect();
        p2.swap(0, 29);
        p2[29] = 7;
        let b = pair(&[7], &[7, 8], &[7], &p2);
        assert_eq!(b.p.rank(7), Some(30));
        let r = shared_token_coverage(&[a, b], &[1, 20, 40], CoverageMode::Pooled).unwrap();
        assert_eq!(r.n_shared_tokens, 3);
        assert_eq!(r.coverage_p, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(r.coverage_q, vec![2.0 / 3.0, 1.0, 1.0]);
    }

    #[test]
    fn coverage_without_shared_tokens_is_flagged() {
        let a = pair(&[2], &[3], &[2], &[3]);
        let r = shared_token_coverage(&[a], &[1, 5], CoverageMode::Pooled).unwrap();
        assert!(r.is_degenerate());
        assert_eq!(r.coverage_p, vec![0.0, 0.0]);
    }

    #[test]
    fn mrr_examples() {
        let a = pair(&[2], &[2], &[9, 9, 9], &[3, 4, 5, 2]);
        let r = token_level_mrr(&[a], Selector::Shared, Target::P).unwrap();
        assert_eq!(r.value, Some(0.25));
        let b = pair(&[2, 3], &[2, 3], &[], &[2, 4, 5, 3]);
        assert_eq!(token_level_mrr(&[b], Selector::Query, Target::P).unwrap().value, Some(0.625));
        let c = pair(&[2], &[2], &[], &[]);
        let r = token_level_mrr(&[c], Selector::QueryOnly, Target::P).unwrap();
        assert_eq!((r.value, r.n_pairs), (None, 0));
    }

    #[test]
    fn categories_and_expansion() {
        // Q top-3: 4 (passage only), 1 ("the", skipped), 2 (query and passage).
        let a = pair(&[2, 3], &[2, 4], &[4, 1, 2], &[2, 3]);
        let c = category_breakdown(std::slice::from_ref(&a), 3).unwrap();
        assert_eq!((c.q.in_both, c.q.p_only, c.q.n_tokens), (0.5, 0.5, 2));
        // P top-3: 2, 3, then [UNK] which is not content.
        assert_eq!((c.p.in_both, c.p.q_only, c.p.n_tokens), (0.5, 0.5, 2));
        let e = query_expansion_stats(&[a], &[1, 3]).unwrap();
        assert_eq!((e[0].queries_with_expansion, e[0].expansion_fraction), (1.0, 1.0));
        assert_eq!(e[1].expansion_fraction, 0.5);
        let b = pair(&[2, 3], &[2, 4], &[2, 3], &[]);
        assert_eq!(query_expansion_stats(&[b], &[2]).unwrap()[0].queries_with_expansion, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(category_breakdown(&[], 1).is_err());
        let a = pair(&[2], &[2], &[], &[]);
        assert!(shared_token_coverage(std::slice::from_ref(&a), &[5, 1], CoverageMode::Pooled).is_err());
        assert!(category_breakdown(&[a], N + 1).is_err());
    }
}
