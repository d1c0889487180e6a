//! Seeded synthetic heads, vocabularies and retrieval fixtures for tests,
//! examples and desk-scale experiments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::datastore::{
    write_corpus, write_embeddings, write_qrels, write_queries, CorpusRecord, EmbeddingStore, QueryRecord,
    Similarity,
};
use crate::error::{Error, Result};
use crate::lexical::Vocabulary;
use crate::mlm_head::{Activation, MlmHeadBuilder, MlmHeadParams};
use crate::pipeline::RunConfig;
use crate::retrieval::Qrels;

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(seed: u64, item: u64) -> u64 {
    let mut z = seed ^ item.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (z * sd) as f32
        })
        .collect()
}

/// Knobs for [`random_head`].
#[derive(Debug, Clone, Copy)]
pub struct HeadShape {
    pub vocab_size: usize,
    pub dim: usize,
    pub activation: Activation,
    /// Norm of every output token embedding (after centering).
    pub token_norm: f64,
    /// Typical LayerNorm gain; sets the logit scale.
    pub gain: f64,
    /// Scale of the off-identity part of the dense transform.
    pub mixing: f64,
}

impl HeadShape {
    pub fn new(vocab_size: usize, dim: usize) -> Self {
        HeadShape {
            vocab_size,
            dim,
            activation: Activation::Gelu,
            token_norm: (dim as f64).sqrt(),
            gain: 3.0,
            mixing: 1.0,
        }
    }
}

/// A random head: identity-plus-Gaussian dense layer, GELU,
/// LayerNorm with a roughly uniform gain, and zero-mean output embeddings of
/// equal norm in random directions (so every token can win the argmax).
pub fn random_head(shape: HeadShape, seed: u64) -> MlmHeadParams {
    let HeadShape {
        vocab_size: n,
        dim: d,
        activation,
        token_norm,
        gain,
        ..
    } = shape;
    let mut rng = rng(seed);
    let mut w = gaussian(&mut rng, d * d, shape.mixing / (d as f64).sqrt());
    for i in 0..d {
        w[i * d + i] += 1.0;
    }
    let b = gaussian(&mut rng, d, 0.1);
    let gamma: Vec<f32> = gaussian(&mut rng, d, 0.05)
        .into_iter()
        .map(|g| (gain * (1.0 + g as f64)) as f32)
        .collect();
    let beta = gaussian(&mut rng, d, 0.05);
    let mut v = gaussian(&mut rng, n * d, 1.0);
    for row in v.chunks_exact_mut(d) {
        let mean = row.iter().map(|x| *x as f64).sum::<f64>() / d as f64;
        row.iter_mut().for_each(|x| *x = (*x as f64 - mean) as f32);
        let norm = row.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x = (*x as f64 / norm * token_norm) as f32);
    }
    let bias = gaussian(&mut rng, n, 0.1);
    MlmHeadBuilder {
        transform_weight: w,
        transform_bias: b,
        gamma,
        beta,
        eps: 1e-12,
        activation,
        decoder_weight: v,
        decoder_bias: Some(bias),
    }
    .build()
    .expect("synthetic head parameters are finite")
}

/// Fully random head (Gaussian everything), for gradient checks.
pub fn gaussian_head(vocab_size: usize, dim: usize, activation: Activation, seed: u64) -> MlmHeadParams {
    let mut rng = rng(seed);
    let eps = 10f64.powf(rng.gen_range(-12.0..-3.0));
    MlmHeadBuilder {
        transform_weight: gaussian(&mut rng, dim * dim, 1.0),
        transform_bias: gaussian(&mut rng, dim, 0.5),
        gamma: gaussian(&mut rng, dim, 1.0),
        beta: gaussian(&mut rng, dim, 0.5),
        eps,
        activation,
        decoder_weight: gaussian(&mut rng, vocab_size * dim, 1.0),
        decoder_bias: Some(gaussian(&mut rng, vocab_size, 0.5)),
    }
    .build()
    .expect("gaussian head parameters are finite")
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("positive sd");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Shape of a [`World`]: `groups` topics with `per_group` passages each.
/// The first `affected_per_group` passages of every group lose the
/// direction of their identifying token in the passage encoder, so each
/// affected passage `p` has an unaffected twin `p + affected_per_group`
/// built the same way.
#[derive(Debug, Clone, Copy)]
pub struct WorldSpec {
    pub groups: usize,
    pub per_group: usize,
    pub affected_per_group: usize,
    pub dim: usize,
    pub topic_words: usize,
    pub fillers_per_passage: usize,
    pub filler_pool: usize,
    /// Standard deviation of the per-coordinate encoder noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            groups: 20,
            per_group: 10,
            affected_per_group: 5,
            dim: 128,
            topic_words: 3,
            fillers_per_passage: 2,
            filler_pool: 40,
            noise: 0.05,
            seed: 0,
        }
    }
}

/// A seeded retrieval fixture with a linear bag-of-tokens encoder whose
/// token directions are the head's output embeddings. One query per
/// passage, made of two topic words and the passage's identifying token.
#[derive(Debug, Clone)]
pub struct World {
    pub vocab: Vocabulary,
    pub head: MlmHeadParams,
    pub corpus: Vec<CorpusRecord>,
    pub queries: Vec<QueryRecord>,
    pub qrels: Qrels,
    pub query_store: EmbeddingStore,
    pub passage_store: EmbeddingStore,
    /// Affected passage id to the token its encoding dropped.
    pub dropped: BTreeMap<String, String>,
}

const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
const GLUE_WORDS: [&str; 3] = ["the", "of", "and"];

fn topic_word(g: usize, i: usize) -> String {
    format!("topic{g:02}{}", (b'a' + i as u8) as char)
}

fn id_word(g: usize, p: usize) -> String {
    format!("id{g:02}{p:02}")
}

pub fn passage_id(g: usize, p: usize) -> String {
    format!("g{g:02}-p{p:02}")
}

pub fn query_id(g: usize, p: usize) -> String {
    format!("q-g{g:02}-p{p:02}")
}

impl WorldSpec {
    fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.per_group == 0 || self.dim < 2 {
            return Err(Error::validation("world needs groups, passages and dim >= 2"));
        }
        if 2 * self.affected_per_group > self.per_group {
            return Err(Error::validation("affected passages need an unaffected twin each"));
        }
        if !(2..=26).contains(&self.topic_words) {
            return Err(Error::validation("topic_words must lie in 2..=26"));
        }
        if self.fillers_per_passage > self.filler_pool {
            return Err(Error::validation("filler pool smaller than fillers per passage"));
        }
        Ok(())
    }
}

impl World {
    pub fn generate(spec: WorldSpec) -> Result<World> {
        spec.validate()?;
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(GLUE_WORDS.iter().map(|s| s.to_string()));
        for g in 0..spec.groups {
            tokens.extend((0..spec.topic_words).map(|i| topic_word(g, i)));
            tokens.extend((0..spec.per_group).map(|p| id_word(g, p)));
        }
        tokens.extend((0..spec.filler_pool).map(|f| format!("fill{f:03}")));
        let vocab = Vocabulary::new(tokens)?;

        let shape = HeadShape {
            activation: Activation::Identity,
            mixing: 0.0,
            ..HeadShape::new(vocab.len(), spec.dim)
        };
        let head = random_head(shape, mix_seed(spec.seed, 0));
        let unit = |word: &str| -> Vec<f64> {
            let row = head.token_embedding(vocab.id(word).expect("world word in vocab") as usize);
            let norm = row.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            row.iter().map(|x| *x as f64 / norm).collect()
        };
        let encode = |words: &[String], drop: Option<&str>, rng: &mut ChaCha8Rng| -> Vec<f32> {
            let mut e = gaussian_vector(rng, spec.dim, spec.noise);
            for w in words {
                let weight = if w.starts_with("fill") { 0.5 } else { 1.0 };
                for (x, u) in e.iter_mut().zip(unit(w)) {
                    *x += weight * u;
                }
            }
            if let Some(w) = drop {
                let u = unit(w);
                let along: f64 = e.iter().zip(&u).map(|(a, b)| a * b).sum();
                e.iter_mut().zip(&u).for_each(|(x, u)| *x -= along * u);
            }
            e.into_iter().map(|x| x as f32).collect()
        };

        let mut rng = rng(mix_seed(spec.seed, 1));
        let mut corpus = Vec::new();
        let mut queries = Vec::new();
        let mut qrels = Qrels::new();
        let mut prows = Vec::new();
        let mut qrows = Vec::new();
        let mut dropped = BTreeMap::new();
        for g in 0..spec.groups {
            let topics: Vec<String> = (0..spec.topic_words).map(|i| topic_word(g, i)).collect();
            for p in 0..spec.per_group {
                let id = id_word(g, p);
                let mut words = topics.clone();
                words.push(id.clone());
                words.extend(
                    rand::seq::index::sample(&mut rng, spec.filler_pool, spec.fillers_per_passage)
                        .into_iter()
                        .map(|f| format!("fill{f:03}")),
                );
                let affected = p < spec.affected_per_group;
                let pid = passage_id(g, p);
                prows.push(encode(&words, affected.then_some(id.as_str()), &mut rng));
                corpus.push(CorpusRecord::new(
                    pid.clone(),
                    "",
                    format!("the {} of {} and {}", words[0], words[1], words[2..].join(" ")),
                ));
                if affected {
                    dropped.insert(pid.clone(), id.clone());
                }

                let qwords = vec![topics[0].clone(), topics[1].clone(), id.clone()];
                let qid = query_id(g, p);
                qrows.push(encode(&qwords, None, &mut rng));
                let mut q = QueryRecord::new(qid.clone(), format!("the {} of {}", qwords[..2].join(" "), id));
                q.answers = vec![id.clone()];
                q.gold_pids = vec![pid.clone()];
                queries.push(q);
                qrels.insert(qid, pid, 1);
            }
        }
        let pids = corpus.iter().map(|c| c.id.clone()).collect();
        let qids = queries.iter().map(|q| q.id.clone()).collect();
        Ok(World {
            vocab,
            head,
            corpus,
            queries,
            qrels,
            query_store: EmbeddingStore::from_rows(qids, &qrows, Similarity::Dot)?,
            passage_store: EmbeddingStore::from_rows(pids, &prows, Similarity::Dot)?,
            dropped,
        })
    }

    /// Write every input file under `dir` and return a config pointing at
    /// them, with outputs going to `dir/out`.
    pub fn write(&self, dir: &Path) -> Result<RunConfig> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut cfg = RunConfig::default();
        let p = &mut cfg.paths;
        p.vocab = Some(dir.join("vocab.txt"));
        p.head = Some(dir.join("head"));
        p.corpus = Some(dir.join("corpus.jsonl"));
        p.queries = Some(dir.join("queries.jsonl"));
        p.qrels = Some(dir.join("qrels.txt"));
        p.query_embeddings = Some(dir.join("queries.emb"));
        p.passage_embeddings = Some(dir.join("passages.emb"));
        self.vocab.save(dir.join("vocab.txt"))?;
        self.head.save(dir.join("head"))?;
        write_corpus(&self.corpus, dir.join("corpus.jsonl"))?;
        write_queries(&self.queries, dir.join("queries.jsonl"))?;
        write_qrels(&self.qrels, dir.join("qrels.txt"))?;
        write_embeddings(&self.query_store, dir.join("queries.emb"))?;
        write_embeddings(&self.passage_store, dir.join("passages.emb"))?;
        cfg.output_dir = Some(dir.join("out"));
        Ok(cfg)
    }
}
