//! Brute-force reference implementations and fixture builders shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use lexlens::analysis::PairContext;
use lexlens::datastore::{EmbeddingStore, Similarity};
use lexlens::lexical::{ContentFilter, Origin, StopList, TokenSet, Vocabulary};
use lexlens::mlm_head::{MlmHeadParams, VocabProjection};
use lexlens::retrieval::{Qrels, RunList, ScoredDoc};

/// Ids 0..5 are special, 5 and 6 stop words, 7 punctuation; the rest content.
pub const FIRST_CONTENT: u32 = 8;

pub fn fixture_vocab(size: usize) -> Vocabulary {
    assert!(size > FIRST_CONTENT as usize);
    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "the", "of", ","]
        .map(String::from)
        .to_vec();
    tokens.extend((FIRST_CONTENT as usize..size).map(|i| format!("w{i}")));
    Vocabulary::new(tokens).unwrap()
}

pub fn fixture_filter(vocab: &Vocabulary) -> ContentFilter {
    ContentFilter::new(vocab, &StopList::new(["the", "of"]))
}

pub fn is_content(id: u32) -> bool {
    id >= FIRST_CONTENT
}

/// 1-based rank of every id: logit descending, then id ascending.
pub fn ranks(logits: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
    let mut r = vec![0; logits.len()];
    for (i, &t) in order.iter().enumerate() {
        r[t] = i + 1;
    }
    r
}

/// Logits drawn from a coarse grid so that ties are common.
pub fn tied_logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let coarse = rng.gen_bool(0.5);
    (0..n)
        .map(|_| {
            if coarse {
                rng.gen_range(-3..=3) as f64 * 0.5
            } else {
                rng.gen_range(-4.0..4.0)
            }
        })
        .collect()
}

/// A pair described only by raw inputs.
#[derive(Debug, Clone)]
pub struct RawPair {
    pub q_logits: Vec<f64>,
    pub p_logits: Vec<f64>,
    pub tq: BTreeSet<u32>,
    pub tp: BTreeSet<u32>,
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, max: usize) -> BTreeSet<u32> {
    let len = rng.gen_range(0..=max);
    (0..len)
        .map(|_| rng.gen_range(FIRST_CONTENT..n as u32))
        .collect()
}

pub fn random_raw_pairs(rng: &mut ChaCha8Rng, vocab_size: usize, n_pairs: usize) -> Vec<RawPair> {
    (0..n_pairs)
        .map(|_| {
            let tq = random_set(rng, vocab_size, 5);
            let mut tp = random_set(rng, vocab_size, 8);
            if !tq.is_empty() && rng.gen_bool(0.7) {
                let pick = *tq.iter().nth(rng.gen_range(0..tq.len())).unwrap();
                tp.insert(pick);
            }
            RawPair {
                q_logits: tied_logits(rng, vocab_size),
                p_logits: tied_logits(rng, vocab_size),
                tq,
                tp,
            }
        })
        .collect()
}

pub fn contexts(raw: &[RawPair], filter: &ContentFilter, depth: usize) -> Vec<PairContext> {
    raw.iter()
        .enumerate()
        .map(|(i, r)| {
            let q = VocabProjection::from_logits(format!("q{i}"), r.q_logits.clone()).unwrap();
            let p = VocabProjection::from_logits(format!("p{i}"), r.p_logits.clone()).unwrap();
            PairContext::new(
                format!("q{i}"),
                format!("p{i}"),
                TokenSet {
                    ids: r.tq.clone(),
                    origin: Origin::Query,
                },
                TokenSet {
                    ids: r.tp.clone(),
                    origin: Origin::Passage,
                },
                &q,
                &p,
                filter,
                depth,
            )
        })
        .collect()
}

pub fn oracle_mrr(raw: &[RawPair], select: &dyn Fn(&RawPair) -> BTreeSet<u32>, passage_side: bool) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for r in raw {
        let set = select(r);
        if set.is_empty() {
            continue;
        }
        let rk = ranks(if passage_side { &r.p_logits } else { &r.q_logits });
        sum += set.iter().map(|&t| 1.0 / rk[t as usize] as f64).sum::<f64>() / set.len() as f64;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Pooled and per-pair-mean coverage of shared tokens at `k`, for Q and P.
pub fn oracle_coverage(raw: &[RawPair], k: usize) -> ([f64; 2], [f64; 2]) {
    let (mut pooled_hits, mut pooled_n) = ([0usize; 2], 0usize);
    let (mut mean_sum, mut mean_n) = ([0.0f64; 2], 0usize);
    for r in raw {
        let shared: Vec<u32> = r.tq.intersection(&r.tp).copied().collect();
        if shared.is_empty() {
            continue;
        }
        pooled_n += shared.len();
        mean_n += 1;
        for (side, logits) in [&r.q_logits, &r.p_logits].into_iter().enumerate() {
            let rk = ranks(logits);
            let c = shared.iter().filter(|&&t| rk[t as usize] <= k).count();
            pooled_hits[side] += c;
            mean_sum[side] += c as f64 / shared.len() as f64;
        }
    }
    let div = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    (
        [div(pooled_hits[0] as f64, pooled_n), div(pooled_hits[1] as f64, pooled_n)],
        [div(mean_sum[0], mean_n), div(mean_sum[1], mean_n)],
    )
}

/// Category fractions `[both, q only, p only, neither]` of content tokens in
/// the top `k`, for Q and P.
pub fn oracle_categories(raw: &[RawPair], k: usize) -> [[f64; 4]; 2] {
    let mut counts = [[0usize; 4]; 2];
    for r in raw {
        for (side, logits) in [&r.q_logits, &r.p_logits].into_iter().enumerate() {
            let rk = ranks(logits);
            for t in 0..logits.len() as u32 {
                if rk[t as usize] > k || !is_content(t) {
                    continue;
                }
                let c = match (r.tq.contains(&t), r.tp.contains(&t)) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                counts[side][c] += 1;
            }
        }
    }
    counts.map(|c| {
        let n: usize = c.iter().sum();
        c.map(|x| if n == 0 { 0.0 } else { x as f64 / n as f64 })
    })
}

/// `(queries with expansion, expansion fraction)` at `k`.
pub fn oracle_expansion(raw: &[RawPair], k: usize) -> (f64, f64) {
    let (mut with, mut top, mut exp) = (0usize, 0usize, 0usize);
    for r in raw {
        let rk = ranks(&r.q_logits);
        let mut here = 0;
        for t in 0..r.q_logits.len() as u32 {
            if rk[t as usize] <= k && is_content(t) {
                top += 1;
                if r.tp.contains(&t) && !r.tq.contains(&t) {
                    here += 1;
                }
            }
        }
        exp += here;
        with += usize::from(here > 0);
    }
    (with as f64 / raw.len() as f64, if top == 0 { 0.0 } else { exp as f64 / top as f64 })
}

/// Random run with graded judgments; some queries have no relevant passage.
pub fn random_run(rng: &mut ChaCha8Rng, n_queries: usize, n_passages: usize) -> (RunList, Qrels) {
    let mut run = RunList::new();
    let mut qrels = Qrels::new();
    for q in 0..n_queries {
        let qid = format!("q{q}");
        let depth = rng.gen_range(1..=n_passages);
        let docs: Vec<ScoredDoc> = rand::seq::index::sample(rng, n_passages, depth)
            .into_iter()
            .map(|p| ScoredDoc::new(format!("p{p}"), rng.gen_range(-2..=2) as f64))
            .collect();
        run.insert(qid.clone(), docs).unwrap();
        let n_rel = rng.gen_range(0..=3);
        for _ in 0..n_rel {
            qrels.insert(qid.clone(), format!("p{}", rng.gen_range(0..n_passages)), rng.gen_range(0..=3));
        }
        if n_rel == 0 {
            qrels.insert(qid.clone(), format!("p{}", rng.gen_range(0..n_passages)), 0);
        }
    }
    (run, qrels)
}

/// Per-query graded judgments, as plain maps.
pub fn grades(qrels: &Qrels) -> HashMap<String, BTreeMap<String, i32>> {
    qrels.iter().map(|(q, m)| (q.to_string(), m.clone())).collect()
}

pub fn oracle_topk(run: &RunList, g: &HashMap<String, BTreeMap<String, i32>>, k: usize) -> f64 {
    let mut hits = 0;
    for (qid, docs) in run.iter() {
        let rel = &g[qid];
        if docs.iter().take(k).any(|d| rel.get(&d.pid).copied().unwrap_or(0) > 0) {
            hits += 1;
        }
    }
    hits as f64 / run.len() as f64
}

pub fn oracle_ndcg(run: &RunList, g: &HashMap<String, BTreeMap<String, i32>>, cutoff: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for (qid, docs) in run.iter() {
        let rel = &g[qid];
        let mut ideal: Vec<f64> = rel.values().filter(|&&x| x > 0).map(|&x| x as f64).collect();
        if ideal.is_empty() {
            continue;
        }
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let dcg_of = |gains: &mut dyn Iterator<Item = f64>| -> f64 {
            gains
                .take(cutoff)
                .enumerate()
                .map(|(i, gain)| gain / (i as f64 + 2.0).log2())
                .sum()
        };
        let dcg = dcg_of(&mut docs.iter().map(|d| rel.get(&d.pid).copied().unwrap_or(0).max(0) as f64));
        let idcg = dcg_of(&mut ideal.into_iter());
        total += dcg / idcg;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Full sort of every passage by `f64` score, then id.
pub fn oracle_dense(passages: &EmbeddingStore, queries: &EmbeddingStore, k: usize) -> Vec<Vec<String>> {
    let score = |q: &[f32], p: &[f32]| -> f64 {
        let dot: f64 = q.iter().zip(p).map(|(a, b)| *a as f64 * *b as f64).sum();
        match passages.similarity() {
            Similarity::Dot => dot,
            Similarity::Cosine => {
                let n = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                let d = n(q) * n(p);
                if d == 0.0 {
                    0.0
                } else {
                    dot / d
                }
            }
        }
    };
    queries
        .rows()
        .map(|q| {
            let mut all: Vec<(f64, &String)> = passages
                .rows()
                .zip(passages.ids())
                .map(|(p, id)| (score(q, p), id))
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
            all.into_iter().take(k).map(|(_, id)| id.clone()).collect()
        })
        .collect()
}

/// Store with some duplicated rows so that exact score ties occur.
pub fn random_store(rng: &mut ChaCha8Rng, prefix: &str, n: usize, dim: usize, sim: Similarity) -> EmbeddingStore {
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.gen_bool(0.1) {
            let j = rng.gen_range(0..i);
            rows.push(rows[j].clone());
        } else {
            rows.push((0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
        }
    }
    let ids = (0..n).map(|i| format!("{prefix}{i:04}")).collect();
    EmbeddingStore::from_rows(ids, &rows, sim).unwrap()
}

/// Okapi BM25 scored term by term from raw token lists.
pub fn oracle_bm25(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let uniq: BTreeSet<&String> = query.iter().collect();
    docs.iter()
        .map(|d| {
            uniq.iter()
                .map(|t| {
                    let tf = d.iter().filter(|w| w == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg))
                })
                .sum()
        })
        .collect()
}

/// Derivative at 0 of `f` by Ridders' extrapolation of central differences,
/// starting from step `h` and shrinking it until the estimate stops
/// improving. Returns the estimate and its error bound, which includes the
/// rounding error of the smallest difference quotient used.
pub fn ridders(f: &dyn Fn(f64) -> f64, h: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const ROUNDS: usize = 40;
    let central = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    let rounding = |h: f64| 4.0 * f64::EPSILON * f(0.0).abs().max(1.0) / h;
    let mut table = vec![vec![0.0f64; ROUNDS]; ROUNDS];
    let mut step = h;
    table[0][0] = central(step);
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..ROUNDS {
        step /= SHRINK;
        table[0][i] = central(step);
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs())
                + rounding(step);
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// Finite-difference gradient of the cross-entropy at `target`. Ridders'
/// method runs from several starting steps and the estimate with the
/// smallest error bound wins, so both flat and sharply curved regions of the
/// LayerNorm are resolved.
pub fn numeric_grad(head: &MlmHeadParams, h: &[f64], target: usize) -> Vec<f64> {
    let loss = |x: &[f64]| head.forward_trace(x).unwrap().cross_entropy(target);
    (0..h.len())
        .map(|i| {
            let f = |offset: f64| {
                let mut x = h.to_vec();
                x[i] += offset;
                loss(&x)
            };
            [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
                .into_iter()
                .map(|step| ridders(&f, step))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty")
                .0
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&diff) / n(a).max(n(b)).max(floor)
}
