use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::datastore::EmbeddingStore;
use crate::error::{Error, Result};
use crate::lexical::{content_token_set, ContentFilter, Origin, TokenSet, Vocabulary};
use crate::mlm_head::{MlmHeadParams, VocabProjection};

/// What the analyses need from one projection: the head of the ranking and
/// exact ranks for a chosen set of tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    top: Vec<u32>,
    top_is_content: Vec<bool>,
    ranks: BTreeMap<u32, usize>,
    vocab_size: usize,
}

impl RankSummary {
    /// Keep the first `depth` ranked ids and the rank of every id in `tokens`.
    pub fn new(
        proj: &VocabProjection,
        filter: &ContentFilter,
        depth: usize,
        tokens: impl IntoIterator<Item = u32>,
    ) -> Self {
        let ranked = proj.ranked_ids();
        let mut rank_of = vec![0usize; ranked.len()];
        for (i, &t) in ranked.iter().enumerate() {
            rank_of[t] = i + 1;
        }
        let top: Vec<u32> = ranked.iter().take(depth).map(|&t| t as u32).collect();
        let top_is_content = top.iter().map(|&t| filter.is_content(t)).collect();
        let ranks = tokens
            .into_iter()
            .filter(|&t| (t as usize) < ranked.len())
            .map(|t| (t, rank_of[t as usize]))
            .collect();
        RankSummary {
            top,
            top_is_content,
            ranks,
            vocab_size: ranked.len(),
        }
    }

    pub fn depth(&self) -> usize {
        self.top.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The `k` highest-ranked ids, each with its content flag.
    pub fn top(&self, k: usize) -> Result<impl Iterator<Item = (u32, bool)> + '_> {
        if k == 0 || k > self.top.len() {
            return Err(Error::validation(format!(
                "top-{k} requested but only {} ranks were kept",
                self.top.len()
            )));
        }
        Ok(self.top[..k].iter().copied().zip(self.top_is_content[..k].iter().copied()))
    }

    pub fn rank(&self, token: u32) -> Option<usize> {
        self.ranks.get(&token).copied()
    }
}

/// A question, its gold passage, their content token sets and summaries of
/// both vocabulary projections.
#[derive(Debug, Clone, PartialEq)]
pub struct PairContext {
    pub qid: String,
    pub pid: String,
    pub tq: TokenSet,
    pub tp: TokenSet,
    pub q: RankSummary,
    pub p: RankSummary,
}

impl PairContext {
    pub fn new(
        qid: impl Into<String>,
        pid: impl Into<String>,
        tq: TokenSet,
        tp: TokenSet,
        q_proj: &VocabProjection,
        p_proj: &VocabProjection,
        filter: &ContentFilter,
        depth: usize,
    ) -> Self {
        let union: BTreeSet<u32> = tq.ids.union(&tp.ids).copied().collect();
        PairContext {
            qid: qid.into(),
            pid: pid.into(),
            q: RankSummary::new(q_proj, filter, depth, union.iter().copied()),
            p: RankSummary::new(p_proj, filter, depth, union.iter().copied()),
            tq,
            tp,
        }
    }

    pub fn shared(&self) -> BTreeSet<u32> {
        self.tq.intersection(&self.tp)
    }

    pub fn query_only(&self) -> BTreeSet<u32> {
        self.tq.difference(&self.tp)
    }
}

/// Inputs for building [`PairContext`]s from embedding stores and texts.
pub struct PairSource<'a> {
    pub head: &'a MlmHeadParams,
    pub vocab: &'a Vocabulary,
    pub filter: &'a ContentFilter,
    pub queries: &'a EmbeddingStore,
    pub passages: &'a EmbeddingStore,
    pub query_texts: &'a HashMap<String, String>,
    pub passage_texts: &'a HashMap<String, String>,
}

impl PairSource<'_> {
    /// Build one context per `(qid, pid)`, in input order. Every id must have
    /// both an embedding and a text; the error lists the first 10 that don't.
    pub fn build(&self, pairs: &[(String, String)], depth: usize) -> Result<Vec<PairContext>> {
        if self.head.vocab_size() != self.vocab.len() {
            return Err(Error::validation(format!(
                "head has {} output tokens, vocabulary has {}",
                self.head.vocab_size(),
                self.vocab.len()
            )));
        }
        let mut offenders = Vec::new();
        for (qid, pid) in pairs {
            if self.queries.position(qid).is_none() || !self.query_texts.contains_key(qid) {
                offenders.push(format!("query `{qid}`"));
            }
            if self.passages.position(pid).is_none() || !self.passage_texts.contains_key(pid) {
                offenders.push(format!("passage `{pid}`"));
            }
        }
        if !offenders.is_empty() {
            offenders.dedup();
            let shown: Vec<String> = offenders.iter().take(10).cloned().collect();
            return Err(Error::validation(format!(
                "{} ids lack an embedding or text: {}",
                offenders.len(),
                shown.join(", ")
            )));
        }
        pairs
            .par_iter()
            .map(|(qid, pid)| {
                let q_proj = self.head.forward_f32(self.queries.get(qid).expect("checked"))?;
                let p_proj = self.head.forward_f32(self.passages.get(pid).expect("checked"))?;
                let tq = content_token_set(self.vocab, self.filter, &self.query_texts[qid], Origin::Query);
                let tp = content_token_set(self.vocab, self.filter, &self.passage_texts[pid], Origin::Passage);
                Ok(PairContext::new(
                    qid.clone(),
                    pid.clone(),
                    tq,
                    tp,
                    &q_proj,
                    &p_proj,
                    self.filter,
                    depth,
                ))
            })
            .collect()
    }
}
