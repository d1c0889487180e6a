use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{DatasetPaths, JudgeMode, RunConfig, SearchMethod, SelectMetric};
use super::output::{cell, OutputDir, RunManifest, Table};
use crate::analysis::{
    amnesia_profile, category_breakdown, query_expansion_stats, select_amnesia_pairs, shared_token_coverage,
    token_level_mrr, AmnesiaProfile, CategoryReport, CoverageReport, ExpansionRow, MrrResult, PairSource,
    RankBuckets, Selector, Target,
};
use crate::datastore::{
    load_corpus, load_embeddings, load_queries, read_qrels, read_run, write_embeddings, write_run, CorpusRecord,
    EmbeddingStore, QueryRecord,
};
use crate::enrichment::{
    fit_single_token_enrichments, mix_store, EnrichmentModel, FitProvenance, FittedEnrichments, Switches,
};
use crate::error::{Error, Result};
use crate::lexical::{english_stoplist, tokenize, ContentFilter, IdfTable, StopList, Vocabulary};
use crate::mlm_head::MlmHeadParams;
use crate::retrieval::{
    mrr_at, ndcg_at, topk_accuracy, AnswerJudge, Bm25Index, DenseIndex, HitJudge, Qrels, RunList,
};

fn required<'a>(p: &'a Option<PathBuf>, key: &str, command: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::validation(format!("{command} needs `paths.{key}`")))
}

pub fn load_vocab(cfg: &RunConfig, command: &str) -> Result<Vocabulary> {
    Vocabulary::load(required(&cfg.paths.vocab, "vocab", command)?)
}

pub fn load_stoplist(cfg: &RunConfig) -> Result<StopList> {
    match &cfg.paths.stoplist {
        Some(p) => StopList::load(p),
        None => Ok(english_stoplist()),
    }
}

pub fn load_head(cfg: &RunConfig, vocab: Option<&Vocabulary>, command: &str) -> Result<MlmHeadParams> {
    let head = MlmHeadParams::load(required(&cfg.paths.head, "head", command)?)?;
    if let Some(v) = vocab {
        if v.len() != head.vocab_size() {
            return Err(Error::validation(format!(
                "vocabulary has {} tokens but the head has {} output rows",
                v.len(),
                head.vocab_size()
            )));
        }
    }
    Ok(head)
}

fn load_query_records(d: &DatasetPaths, command: &str) -> Result<Vec<QueryRecord>> {
    let path = required(&d.queries, "queries", command)?;
    let queries = load_queries(path)?;
    if queries.is_empty() {
        return Err(Error::validation(format!("{}: query file is empty", path.display())));
    }
    Ok(queries)
}

fn load_corpus_records(d: &DatasetPaths, command: &str) -> Result<Vec<CorpusRecord>> {
    let path = required(&d.corpus, "corpus", command)?;
    let corpus = load_corpus(path)?;
    if corpus.is_empty() {
        return Err(Error::validation(format!("{}: corpus is empty", path.display())));
    }
    Ok(corpus)
}

fn load_stores(d: &DatasetPaths, command: &str) -> Result<(EmbeddingStore, EmbeddingStore)> {
    let q = load_embeddings(required(&d.query_embeddings, "query_embeddings", command)?)?;
    let p = load_embeddings(required(&d.passage_embeddings, "passage_embeddings", command)?)?;
    if q.dim() != p.dim() || q.similarity() != p.similarity() {
        return Err(Error::validation(format!(
            "query embeddings ({}, {}) and passage embeddings ({}, {}) disagree",
            q.dim(),
            q.similarity(),
            p.dim(),
            p.similarity()
        )));
    }
    Ok((q, p))
}

fn query_texts(queries: &[QueryRecord]) -> HashMap<String, String> {
    queries.iter().map(|q| (q.id.clone(), q.text.clone())).collect()
}

fn passage_texts(corpus: &[CorpusRecord]) -> HashMap<String, String> {
    corpus.iter().map(|r| (r.id.clone(), r.full_text())).collect()
}

/// Relevance information for one query set.
pub enum Judgments {
    Gold(Qrels),
    Answer {
        answers: HashMap<String, Vec<String>>,
        passages: HashMap<String, String>,
    },
}

impl Judgments {
    /// Qrels file if given, else gold ids from the query file, else answer
    /// strings (matched against the corpus), as allowed by `mode`.
    pub fn resolve(
        mode: JudgeMode,
        queries: &[QueryRecord],
        qrels: Option<&Path>,
        corpus: Option<&[CorpusRecord]>,
    ) -> Result<Self> {
        let has_gold = qrels.is_some() || queries.iter().any(|q| !q.gold_pids.is_empty());
        let has_answers = queries.iter().any(|q| !q.answers.is_empty());
        let use_gold = match mode {
            JudgeMode::Gold => true,
            JudgeMode::Answer => false,
            JudgeMode::Auto => has_gold || !has_answers,
        };
        if use_gold {
            if !has_gold {
                return Err(Error::validation("no gold passages: supply a qrels file or gold_pids"));
            }
            let qrels = match qrels {
                Some(p) => read_qrels(p)?,
                None => Qrels::from_gold(
                    queries
                        .iter()
                        .map(|q| (q.id.as_str(), q.gold_pids.iter().map(String::as_str))),
                ),
            };
            return Ok(Judgments::Gold(qrels));
        }
        if !has_answers {
            return Err(Error::validation("answer judging selected but no query has answers"));
        }
        let corpus = corpus.ok_or_else(|| Error::validation("answer judging needs the corpus"))?;
        Ok(Judgments::Answer {
            answers: queries.iter().map(|q| (q.id.clone(), q.answers.clone())).collect(),
            passages: passage_texts(corpus),
        })
    }

    pub fn judge(&self) -> Box<dyn HitJudge + '_> {
        match self {
            Judgments::Gold(q) => Box::new(q.clone()),
            Judgments::Answer { answers, passages } => Box::new(AnswerJudge { answers, passages }),
        }
    }

    pub fn qrels(&self) -> Option<&Qrels> {
        match self {
            Judgments::Gold(q) => Some(q),
            Judgments::Answer { .. } => None,
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Judgments::Gold(_) => "gold",
            Judgments::Answer { .. } => "answer",
        }
    }
}

fn load_judgments(cfg: &RunConfig, d: &DatasetPaths, queries: &[QueryRecord], command: &str) -> Result<Judgments> {
    let corpus = match (cfg.retrieval.judge, &d.corpus) {
        (JudgeMode::Gold, _) | (_, None) => None,
        (_, Some(_)) => Some(load_corpus_records(d, command)?),
    };
    Judgments::resolve(cfg.retrieval.judge, queries, d.qrels.as_deref(), corpus.as_deref())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub k: usize,
    pub value: f64,
    pub n_queries: usize,
}

/// Top-k accuracy over `k_grid`, plus nDCG and MRR at `cutoff` (nDCG only
/// with graded judgments).
pub fn evaluate(run: &RunList, judgments: &Judgments, k_grid: &[usize], cutoff: usize) -> Result<Vec<MetricRow>> {
    let judge = judgments.judge();
    let acc = topk_accuracy(run, judge.as_ref(), k_grid)?;
    let mut rows: Vec<MetricRow> = acc
        .values
        .iter()
        .map(|&(k, value)| MetricRow {
            metric: format!("accuracy_{}", acc.mode),
            k,
            value,
            n_queries: acc.n_queries,
        })
        .collect();
    if let Some(qrels) = judgments.qrels() {
        let n = ndcg_at(run, qrels, cutoff)?;
        rows.push(MetricRow {
            metric: "ndcg".into(),
            k: cutoff,
            value: n.value,
            n_queries: n.n_queries,
        });
    }
    rows.push(MetricRow {
        metric: format!("mrr_{}", acc.mode),
        k: cutoff,
        value: mrr_at(run, judge.as_ref(), cutoff)?,
        n_queries: acc.n_queries,
    });
    Ok(rows)
}

fn metrics_table(rows: &[MetricRow]) -> Table {
    let mut t = Table::new(&["metric", "k", "value", "n_queries"]);
    for r in rows {
        t.push(vec![r.metric.clone(), r.k.to_string(), r.value.to_string(), r.n_queries.to_string()]);
    }
    t
}

/// Which embedding store to project.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectTarget {
    Queries,
    Passages,
}

/// Dump the top-k tokens of each vector's vocabulary projection.
pub fn cmd_project(cfg: &RunConfig, target: ProjectTarget) -> Result<RunManifest> {
    const CMD: &str = "project";
    cfg.validate()?;
    let vocab = load_vocab(cfg, CMD)?;
    let head = load_head(cfg, Some(&vocab), CMD)?;
    let k = cfg.analysis.project_top_k;
    if k > head.vocab_size() {
        return Err(Error::validation(format!(
            "top-k {k} exceeds the vocabulary size {}",
            head.vocab_size()
        )));
    }
    let d = cfg.paths.dataset();
    let (key, path, name) = match target {
        ProjectTarget::Queries => ("query_embeddings", &d.query_embeddings, "projections_queries.csv"),
        ProjectTarget::Passages => ("passage_embeddings", &d.passage_embeddings, "projections_passages.csv"),
    };
    let store = load_embeddings(required(path, key, CMD)?)?;
    if store.dim() != head.dim() {
        return Err(Error::DimensionMismatch {
            expected: head.dim(),
            got: store.dim(),
        });
    }
    let mut out = OutputDir::create(cfg, CMD)?;
    let mut table = Table::new(&["id", "rank", "token_id", "token", "prob", "logit"]);
    let rows: Vec<(String, Vec<(usize, f64, f64)>)> = {
        use rayon::prelude::*;
        (0..store.len())
            .into_par_iter()
            .map(|i| {
                let proj = head.forward_f32(store.row(i))?;
                let top = proj.top_k(k)?;
                Ok((
                    store.ids()[i].clone(),
                    top.into_iter().map(|(t, p)| (t, p, proj.logits()[t])).collect(),
                ))
            })
            .collect::<Result<_>>()?
    };
    for (id, top) in rows {
        for (rank, (t, p, logit)) in top.into_iter().enumerate() {
            table.push(vec![
                id.clone(),
                (rank + 1).to_string(),
                t.to_string(),
                vocab.token(t as u32).unwrap_or_default().to_string(),
                p.to_string(),
                logit.to_string(),
            ]);
        }
    }
    out.write_csv(name, &table)?;
    out.finish(cfg)
}

/// Gold passage per query: the first listed gold id, else the best-graded
/// qrels entry (ties by ascending id).
fn gold_pairs(queries: &[QueryRecord], qrels: Option<&Qrels>) -> Vec<(String, String)> {
    queries
        .iter()
        .filter_map(|q| {
            let pid = q.gold_pids.first().cloned().or_else(|| {
                qrels?
                    .for_query(&q.id)?
                    .iter()
                    .filter(|(_, &g)| g > 0)
                    .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                    .map(|(p, _)| p.clone())
            })?;
            Some((q.id.clone(), pid))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct AnalysisSummary<'a> {
    n_pairs: usize,
    coverage: &'a CoverageReport,
    mrr: &'a [MrrResult],
    expansion: &'a [ExpansionRow],
    categories: &'a [CategoryReport],
    amnesia: Option<&'a AmnesiaProfile>,
    notices: &'a [String],
}

/// Overlap, expansion, categorization and (given runs) amnesia reports.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "analyze";
    cfg.validate()?;
    let vocab = load_vocab(cfg, CMD)?;
    let head = load_head(cfg, Some(&vocab), CMD)?;
    let filter = ContentFilter::new(&vocab, &load_stoplist(cfg)?);
    let d = cfg.paths.dataset();
    let queries = load_query_records(&d, CMD)?;
    let corpus = load_corpus_records(&d, CMD)?;
    let (qstore, pstore) = load_stores(&d, CMD)?;
    let qrels_file = d.qrels.as_deref().map(read_qrels).transpose()?;
    let mut out = OutputDir::create(cfg, CMD)?;
    if cfg.paths.stoplist.is_none() {
        out.notice("content tokens use the built-in English stop-word list; overlap figures depend on this choice");
    }

    let pairs = gold_pairs(&queries, qrels_file.as_ref());
    if pairs.is_empty() {
        return Err(Error::validation("no query has a gold passage to analyze"));
    }
    let k_grid: Vec<usize> = cfg
        .analysis
        .k_grid
        .iter()
        .copied()
        .filter(|&k| k <= head.vocab_size())
        .collect();
    if k_grid.len() < cfg.analysis.k_grid.len() {
        out.notice(format!(
            "k values above the vocabulary size {} dropped from the analysis grid",
            head.vocab_size()
        ));
    }
    if k_grid.is_empty() {
        return Err(Error::validation("every k in the analysis grid exceeds the vocabulary size"));
    }
    let depth = *k_grid.last().expect("non-empty");
    let qtexts = query_texts(&queries);
    let ptexts = passage_texts(&corpus);
    let source = PairSource {
        head: &head,
        vocab: &vocab,
        filter: &filter,
        queries: &qstore,
        passages: &pstore,
        query_texts: &qtexts,
        passage_texts: &ptexts,
    };
    let contexts = source.build(&pairs, depth)?;

    let coverage = shared_token_coverage(&contexts, &k_grid, cfg.analysis.coverage_mode)?;
    if coverage.is_degenerate() {
        out.notice("no pair shares a content token; coverage values are placeholders");
    }
    let mut t = Table::new(&["k", "coverage_q", "coverage_p", "n_shared_tokens"]);
    for (i, k) in coverage.k_grid.iter().enumerate() {
        t.push(vec![
            k.to_string(),
            coverage.coverage_q[i].to_string(),
            coverage.coverage_p[i].to_string(),
            coverage.n_shared_tokens.to_string(),
        ]);
    }
    out.write_csv("coverage.csv", &t)?;

    let mut mrr = Vec::new();
    let mut t = Table::new(&["selector", "target", "value", "n_pairs"]);
    for selector in Selector::ALL {
        for target in [Target::P, Target::Q] {
            let r = token_level_mrr(&contexts, selector, target)?;
            t.push(vec![selector.to_string(), target.to_string(), cell(r.value), r.n_pairs.to_string()]);
            mrr.push(r);
        }
    }
    out.write_csv("mrr.csv", &t)?;

    let expansion = query_expansion_stats(&contexts, &k_grid)?;
    let mut t = Table::new(&[
        "k",
        "queries_with_expansion",
        "expansion_fraction",
        "n_pairs",
        "n_top_tokens",
        "n_expansion_tokens",
    ]);
    for r in &expansion {
        t.push(vec![
            r.k.to_string(),
            r.queries_with_expansion.to_string(),
            r.expansion_fraction.to_string(),
            r.n_pairs.to_string(),
            r.n_top_tokens.to_string(),
            r.n_expansion_tokens.to_string(),
        ]);
    }
    out.write_csv("expansion.csv", &t)?;

    let categories = k_grid
        .iter()
        .map(|&k| category_breakdown(&contexts, k))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["k", "projection", "in_both", "q_only", "p_only", "neither", "n_tokens"]);
    for c in &categories {
        for (name, f) in [("Q", &c.q), ("P", &c.p)] {
            t.push(vec![
                c.k.to_string(),
                name.to_string(),
                f.in_both.to_string(),
                f.q_only.to_string(),
                f.p_only.to_string(),
                f.neither.to_string(),
                f.n_tokens.to_string(),
            ]);
        }
    }
    out.write_csv("categories.csv", &t)?;

    let amnesia = match (&cfg.paths.bm25_run, &cfg.paths.dense_run) {
        (Some(bm25_path), Some(dense_path)) => {
            let bm25 = read_run(bm25_path)?;
            let dense = read_run(dense_path)?;
            let judgments =
                Judgments::resolve(cfg.retrieval.judge, &queries, d.qrels.as_deref(), Some(&corpus))?;
            let selected = select_amnesia_pairs(&bm25, judgments.judge().as_ref(), cfg.analysis.amnesia_depth);
            let contexts = source.build(&selected, depth)?;
            let buckets = RankBuckets::new(cfg.analysis.buckets.clone())?;
            let profile = amnesia_profile(&contexts, &dense, &buckets)?;
            if profile.is_empty() {
                out.notice("no query qualifies for the amnesia profile");
            }
            let mut t = Table::new(&[
                "bucket", "n_pairs", "max_rank_p_q1", "max_rank_p_median", "max_rank_p_q3", "max_rank_q_q1",
                "max_rank_q_median", "max_rank_q_q3",
            ]);
            for s in &profile.summary {
                let p = s.max_rank_p;
                let q = s.max_rank_q;
                t.push(vec![
                    s.label.clone(),
                    s.n_pairs.to_string(),
                    cell(p.map(|x| x.q1)),
                    cell(p.map(|x| x.median)),
                    cell(p.map(|x| x.q3)),
                    cell(q.map(|x| x.q1)),
                    cell(q.map(|x| x.median)),
                    cell(q.map(|x| x.q3)),
                ]);
            }
            out.write_csv("amnesia.csv", &t)?;
            let mut t = Table::new(&[
                "qid", "pid", "dense_rank", "bucket", "n_shared", "max_rank_p", "max_rank_q", "median_rank_p",
                "median_rank_q",
            ]);
            for r in &profile.records {
                t.push(vec![
                    r.qid.clone(),
                    r.pid.clone(),
                    r.dense_rank.map(|x| x.to_string()).unwrap_or_default(),
                    buckets.label(r.bucket),
                    r.n_shared.to_string(),
                    r.max_rank_p.to_string(),
                    r.max_rank_q.to_string(),
                    r.median_rank_p.to_string(),
                    r.median_rank_q.to_string(),
                ]);
            }
            out.write_csv("amnesia_pairs.csv", &t)?;
            Some(profile)
        }
        _ => {
            out.notice("amnesia.csv skipped: needs both `paths.bm25_run` and `paths.dense_run`");
            None
        }
    };

    let notices = out.notices.clone();
    out.write_json(
        "analysis.json",
        &AnalysisSummary {
            n_pairs: contexts.len(),
            coverage: &coverage,
            mrr: &mrr,
            expansion: &expansion,
            categories: &categories,
            amnesia: amnesia.as_ref(),
            notices: &notices,
        },
    )?;
    out.finish(cfg)
}

#[derive(Debug, Serialize)]
struct FitSummary {
    n_tokens: usize,
    n_converged: usize,
    unconverged: Vec<usize>,
    max_steps_used: usize,
    whitening_clamped: usize,
    head_sha256: String,
}

/// Fit single-token enrichments and their whitening; writes the
/// `enrichment` bundle, `fit.csv` and `enrichment.json`.
pub fn cmd_enrich_fit(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "enrich-fit";
    cfg.validate()?;
    let vocab = cfg.paths.vocab.as_ref().map(Vocabulary::load).transpose()?;
    let head = load_head(cfg, vocab.as_ref(), CMD)?;
    let opt = cfg.optimizer();
    let table = fit_single_token_enrichments(&head, &opt)?;
    let fitted = FittedEnrichments::new(table)?;
    let provenance = FitProvenance {
        optimizer: opt,
        head_sha256: head.checksum(),
    };
    let mut out = OutputDir::create(cfg, CMD)?;
    let base = out.path("enrichment");
    fitted.save(&base, &provenance)?;

    let t_ = &fitted.table;
    let mut t = Table::new(&["token_id", "token", "converged", "initial_loss", "final_loss", "steps"]);
    for tok in 0..t_.vocab_size() {
        t.push(vec![
            tok.to_string(),
            vocab
                .as_ref()
                .and_then(|v| v.token(tok as u32))
                .unwrap_or_default()
                .to_string(),
            t_.is_converged(tok).to_string(),
            t_.initial_loss(tok).to_string(),
            t_.loss(tok).to_string(),
            t_.steps(tok).to_string(),
        ]);
    }
    out.write_csv("fit.csv", &t)?;
    let unconverged = t_.unconverged();
    if !unconverged.is_empty() {
        out.notice(format!("{} tokens did not converge", unconverged.len()));
    }
    out.write_json(
        "enrichment.json",
        &FitSummary {
            n_tokens: t_.vocab_size(),
            n_converged: t_.vocab_size() - unconverged.len(),
            unconverged,
            max_steps_used: (0..t_.vocab_size()).map(|t| t_.steps(t)).max().unwrap_or(0),
            whitening_clamped: fitted.whitening.clamped,
            head_sha256: provenance.head_sha256,
        },
    )?;
    out.finish(cfg)
}

/// Enrichments from `paths.enrichment`, or fitted in-process when absent.
pub fn fitted_enrichments(cfg: &RunConfig, head: &MlmHeadParams, out: &mut OutputDir) -> Result<FittedEnrichments> {
    match &cfg.paths.enrichment {
        Some(p) => {
            let (fitted, provenance) = FittedEnrichments::load(p)?;
            if let Some(prov) = provenance {
                if prov.head_sha256 != head.checksum() {
                    return Err(Error::validation(format!(
                        "{} was fitted on a different head",
                        p.display()
                    )));
                }
            }
            Ok(fitted)
        }
        None => {
            out.notice("no `paths.enrichment` given; fitting single-token enrichments in-process");
            FittedEnrichments::new(fit_single_token_enrichments(head, &cfg.optimizer())?)
        }
    }
}

/// External IDF table if configured, otherwise IDF over `corpus`.
pub fn idf_table(cfg: &RunConfig, vocab: &Vocabulary, corpus: &[CorpusRecord]) -> Result<IdfTable> {
    match &cfg.paths.idf {
        Some(p) => IdfTable::load(p),
        None => {
            use rayon::prelude::*;
            let streams: Vec<Vec<u32>> = corpus.par_iter().map(|r| tokenize(vocab, &r.full_text())).collect();
            IdfTable::from_token_streams(&streams, vocab.len())
        }
    }
}

/// Everything needed to enrich one dataset's stores.
struct EnrichContext {
    vocab: Vocabulary,
    head: MlmHeadParams,
    fitted: FittedEnrichments,
}

impl EnrichContext {
    fn load(cfg: &RunConfig, command: &str, out: &mut OutputDir) -> Result<Self> {
        let vocab = load_vocab(cfg, command)?;
        let head = load_head(cfg, Some(&vocab), command)?;
        let fitted = fitted_enrichments(cfg, &head, out)?;
        Ok(EnrichContext { vocab, head, fitted })
    }

    fn model(&self, idf: &IdfTable, lambda: f64, switches: Switches) -> Result<EnrichmentModel> {
        EnrichmentModel::build(
            &self.head,
            &self.fitted,
            idf,
            self.vocab.special_ids(),
            lambda,
            switches,
        )
    }
}

/// One dataset loaded for dense retrieval with enrichment.
struct DenseDataset {
    queries: Vec<QueryRecord>,
    corpus: Vec<CorpusRecord>,
    qstore: EmbeddingStore,
    pstore: EmbeddingStore,
}

impl DenseDataset {
    fn load(d: &DatasetPaths, command: &str) -> Result<Self> {
        let queries = load_query_records(d, command)?;
        let corpus = load_corpus_records(d, command)?;
        let (qstore, pstore) = load_stores(d, command)?;
        Ok(DenseDataset {
            queries,
            corpus,
            qstore,
            pstore,
        })
    }

    /// Per-row lexical directions for queries and passages.
    fn directions(&self, ctx: &EnrichContext, model: &EnrichmentModel) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let q = model
            .store_directions(&ctx.vocab, &self.qstore, &query_texts(&self.queries))
            .map_err(|e| e.context("enriching queries"))?;
        let p = model
            .store_directions(&ctx.vocab, &self.pstore, &passage_texts(&self.corpus))
            .map_err(|e| e.context("enriching passages"))?;
        Ok((q, p))
    }

    fn search(&self, dirs: &(Vec<Vec<f64>>, Vec<Vec<f64>>), lambda: f64, depth: usize) -> Result<RunList> {
        let q = mix_store(&self.qstore, &dirs.0, lambda)?;
        let p = mix_store(&self.pstore, &dirs.1, lambda)?;
        DenseIndex::new(&p)?.search(&q, depth)
    }
}

/// Enrich query and passage stores with the configured λ and switches.
pub fn cmd_enrich_apply(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "enrich-apply";
    cfg.validate()?;
    let mut out = OutputDir::create(cfg, CMD)?;
    let ctx = EnrichContext::load(cfg, CMD, &mut out)?;
    let data = DenseDataset::load(&cfg.paths.dataset(), CMD)?;
    let idf = idf_table(cfg, &ctx.vocab, &data.corpus)?;
    let model = ctx.model(&idf, cfg.enrichment.lambda, cfg.enrichment.switches())?;
    let q = model.enrich_store(&ctx.vocab, &data.qstore, &query_texts(&data.queries))?;
    let p = model.enrich_store(&ctx.vocab, &data.pstore, &passage_texts(&data.corpus))?;
    write_embeddings(&q, out.path("queries.enriched"))?;
    write_embeddings(&p, out.path("passages.enriched"))?;
    idf.save(out.path("idf"))?;
    out.finish(cfg)
}

/// Build a BM25 index over the corpus; writes `bm25.json`.
pub fn cmd_index_bm25(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "index-bm25";
    cfg.validate()?;
    let corpus = load_corpus_records(&cfg.paths.dataset(), CMD)?;
    let vocab = cfg.paths.vocab.as_ref().map(Vocabulary::load).transpose()?;
    let index = Bm25Index::build(&corpus, cfg.retrieval.bm25_mode, vocab.as_ref(), cfg.retrieval.bm25_params())?;
    let mut out = OutputDir::create(cfg, CMD)?;
    index.save(out.path("bm25.json"))?;
    out.finish(cfg)
}

fn bm25_run(cfg: &RunConfig, d: &DatasetPaths, command: &str) -> Result<RunList> {
    let queries = load_query_records(d, command)?;
    let vocab = cfg.paths.vocab.as_ref().map(Vocabulary::load).transpose()?;
    let index = match &cfg.paths.bm25_index {
        Some(p) => Bm25Index::load(p)?,
        None => Bm25Index::build(
            &load_corpus_records(d, command)?,
            cfg.retrieval.bm25_mode,
            vocab.as_ref(),
            cfg.retrieval.bm25_params(),
        )?,
    };
    index.search(
        vocab.as_ref(),
        queries.iter().map(|q| (q.id.as_str(), q.text.as_str())),
        cfg.retrieval.depth,
    )
}

/// Dense (optionally enriched) or BM25 retrieval; writes `run.trec`.
pub fn cmd_search(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "search";
    cfg.validate()?;
    let mut out = OutputDir::create(cfg, CMD)?;
    let d = cfg.paths.dataset();
    let (run, tag) = match cfg.retrieval.method {
        SearchMethod::Bm25 => (bm25_run(cfg, &d, CMD)?, "lexlens-bm25".to_string()),
        SearchMethod::Dense if !cfg.retrieval.enrich => {
            let (q, p) = load_stores(&d, CMD)?;
            (DenseIndex::new(&p)?.search(&q, cfg.retrieval.depth)?, "lexlens-dense".to_string())
        }
        SearchMethod::Dense => {
            let ctx = EnrichContext::load(cfg, CMD, &mut out)?;
            let data = DenseDataset::load(&d, CMD)?;
            let idf = idf_table(cfg, &ctx.vocab, &data.corpus)?;
            let lambda = cfg.enrichment.lambda;
            let model = ctx.model(&idf, lambda, cfg.enrichment.switches())?;
            let run = if lambda == 0.0 {
                DenseIndex::new(&data.pstore)?.search(&data.qstore, cfg.retrieval.depth)?
            } else {
                data.search(&data.directions(&ctx, &model)?, lambda, cfg.retrieval.depth)?
            };
            (run, format!("lexlens-dense-le{lambda}"))
        }
    };
    write_run(&run, &tag, out.path("run.trec"))?;
    out.finish(cfg)
}

/// Score `paths.run`; writes `metrics.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "eval";
    cfg.validate()?;
    let run = read_run(required(&cfg.paths.run, "run", CMD)?)?;
    let d = cfg.paths.dataset();
    let queries = load_query_records(&d, CMD)?;
    let judgments = load_judgments(cfg, &d, &queries, CMD)?;
    let rows = evaluate(&run, &judgments, &cfg.retrieval.k_grid, cfg.retrieval.ndcg_cutoff)?;
    let mut out = OutputDir::create(cfg, CMD)?;
    out.write_csv("metrics.csv", &metrics_table(&rows))?;
    out.finish(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub select: String,
    pub best_lambda: f64,
    pub best_value: f64,
    pub values: Vec<(f64, f64)>,
}

fn selection_value(rows: &[MetricRow], select: SelectMetric) -> Option<f64> {
    rows.iter()
        .find(|r| match select {
            SelectMetric::TopK(k) => r.metric.starts_with("accuracy_") && r.k == k,
            SelectMetric::Ndcg(k) => r.metric == "ndcg" && r.k == k,
        })
        .map(|r| r.value)
}

/// Evaluate dense retrieval with enrichment for every λ in the grid; writes
/// `sweep.csv` (one row per λ) and `sweep.json` with the selected λ.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "sweep";
    cfg.validate()?;
    let grid = &cfg.enrichment.lambda_grid;
    if grid.is_empty() {
        return Err(Error::validation("sweep needs a non-empty `enrichment.lambda_grid`"));
    }
    let select = SelectMetric::parse(&cfg.sweep.select)?;
    let mut out = OutputDir::create(cfg, CMD)?;
    let ctx = EnrichContext::load(cfg, CMD, &mut out)?;
    let d = cfg.paths.dataset();
    let data = DenseDataset::load(&d, CMD)?;
    let judgments = Judgments::resolve(cfg.retrieval.judge, &data.queries, d.qrels.as_deref(), Some(&data.corpus))?;
    let idf = idf_table(cfg, &ctx.vocab, &data.corpus)?;
    let model = ctx.model(&idf, 1.0, cfg.enrichment.switches())?;
    let dirs = data.directions(&ctx, &model)?;

    let mut k_grid = cfg.retrieval.k_grid.clone();
    let (cutoff, needs_qrels) = match select {
        SelectMetric::TopK(k) => {
            if !k_grid.contains(&k) {
                k_grid.push(k);
                k_grid.sort_unstable();
            }
            (cfg.retrieval.ndcg_cutoff, false)
        }
        SelectMetric::Ndcg(k) => (k, true),
    };
    if needs_qrels && judgments.qrels().is_none() {
        return Err(Error::validation("selecting by nDCG needs gold judgments"));
    }

    let mut header: Vec<String> = vec!["lambda".into()];
    let mut table_rows = Vec::new();
    let mut values = Vec::new();
    for &lambda in grid {
        let run = data.search(&dirs, lambda, cfg.retrieval.depth)?;
        let rows = evaluate(&run, &judgments, &k_grid, cutoff)?;
        if header.len() == 1 {
            header.extend(rows.iter().map(|r| format!("{}@{}", r.metric, r.k)));
            header.push("n_queries".into());
        }
        let value = selection_value(&rows, select).expect("selected metric is computed");
        values.push((lambda, value));
        let mut row = vec![lambda.to_string()];
        row.extend(rows.iter().map(|r| r.value.to_string()));
        row.push(rows[0].n_queries.to_string());
        table_rows.push(row);
    }
    // Highest value wins; ties go to the smaller λ, then the earlier entry.
    let (best_lambda, best_value) = values
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .expect("non-empty grid");
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    table.rows = table_rows;
    out.write_csv("sweep.csv", &table)?;
    out.write_json(
        "sweep.json",
        &SweepOutcome {
            select: select.to_string(),
            best_lambda,
            best_value,
            values,
        },
    )?;
    out.finish(cfg)
}

/// The ablation variants, in report order.
pub fn ablation_variants(base: Switches) -> Vec<(&'static str, Switches)> {
    let full = Switches {
        use_idf: true,
        use_whitening: true,
        use_l2_norm: true,
        use_embedding_matrix: false,
        ..base
    };
    vec![
        ("full", full),
        ("no-idf", Switches { use_idf: false, ..full }),
        ("embedding-matrix", Switches { use_embedding_matrix: true, ..full }),
        ("no-whitening", Switches { use_whitening: false, ..full }),
        ("no-l2", Switches { use_l2_norm: false, ..full }),
    ]
}

/// The ablation grid: every variant on every dataset at every cutoff;
/// writes `ablation.csv`.
pub fn cmd_report(cfg: &RunConfig) -> Result<RunManifest> {
    const CMD: &str = "report";
    cfg.validate()?;
    let mut out = OutputDir::create(cfg, CMD)?;
    let ctx = EnrichContext::load(cfg, CMD, &mut out)?;
    let lambda = cfg.enrichment.lambda;
    let datasets: Vec<DatasetPaths> = std::iter::once(cfg.paths.dataset())
        .chain(cfg.report.datasets.iter().cloned())
        .collect();
    let mut names = BTreeMap::new();
    for d in &datasets {
        if names.insert(d.name.clone(), ()).is_some() || d.name.is_empty() {
            return Err(Error::validation(format!(
                "report datasets need distinct non-empty names, got `{}` twice or empty",
                d.name
            )));
        }
    }
    let mut table = Table::new(&["dataset", "variant", "lambda", "metric", "k", "value", "n_queries"]);
    for d in &datasets {
        let data = DenseDataset::load(d, CMD).map_err(|e| e.context(format!("dataset `{}`", d.name)))?;
        let judgments =
            Judgments::resolve(cfg.retrieval.judge, &data.queries, d.qrels.as_deref(), Some(&data.corpus))?;
        let idf = idf_table(cfg, &ctx.vocab, &data.corpus)?;
        for (variant, switches) in ablation_variants(cfg.enrichment.switches()) {
            let model = ctx.model(&idf, lambda, switches)?;
            let run = data.search(&data.directions(&ctx, &model)?, lambda, cfg.retrieval.depth)?;
            let acc = topk_accuracy(&run, judgments.judge().as_ref(), &cfg.report.cutoffs)?;
            for (k, value) in acc.values {
                table.push(vec![
                    d.name.clone(),
                    variant.to_string(),
                    lambda.to_string(),
                    format!("accuracy_{}", acc.mode),
                    k.to_string(),
                    value.to_string(),
                    acc.n_queries.to_string(),
                ]);
            }
        }
    }
    out.write_csv("ablation.csv", &table)?;
    out.finish(cfg)
}
