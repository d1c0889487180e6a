use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::CoverageMode;
use crate::enrichment::{OptimizerConfig, Switches};
use crate::error::{Error, Result};
use crate::retrieval::{Bm25Params, TermMode};

/// Input files of one dataset. Embedding and head paths are bundle bases
/// (`<base>.manifest` + `<base>.bin`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    pub name: String,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub query_embeddings: Option<PathBuf>,
    pub passage_embeddings: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub head: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Defaults to the built-in English list.
    pub stoplist: Option<PathBuf>,
    /// External IDF table; otherwise IDF comes from the corpus.
    pub idf: Option<PathBuf>,
    /// Fitted enrichment bundle.
    pub enrichment: Option<PathBuf>,
    pub bm25_index: Option<PathBuf>,
    /// Run to evaluate.
    pub run: Option<PathBuf>,
    pub dense_run: Option<PathBuf>,
    pub bm25_run: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub query_embeddings: Option<PathBuf>,
    pub passage_embeddings: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
}

impl Paths {
    /// The dataset described by the top-level paths, named `main`.
    pub fn dataset(&self) -> DatasetPaths {
        DatasetPaths {
            name: "main".to_string(),
            corpus: self.corpus.clone(),
            queries: self.queries.clone(),
            query_embeddings: self.query_embeddings.clone(),
            passage_embeddings: self.passage_embeddings.clone(),
            qrels: self.qrels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichmentSettings {
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub use_idf: bool,
    pub use_whitening: bool,
    pub use_l2_norm: bool,
    pub use_embedding_matrix: bool,
    pub unique_tokens: bool,
}

impl Default for EnrichmentSettings {
    fn default() -> Self {
        let s = Switches::default();
        EnrichmentSettings {
            lambda: 5.0,
            lambda_grid: vec![0.0, 0.5, 1.0, 3.0, 5.0],
            use_idf: s.use_idf,
            use_whitening: s.use_whitening,
            use_l2_norm: s.use_l2_norm,
            use_embedding_matrix: s.use_embedding_matrix,
            unique_tokens: s.unique_tokens,
        }
    }
}

impl EnrichmentSettings {
    pub fn switches(&self) -> Switches {
        Switches {
            use_idf: self.use_idf,
            use_whitening: self.use_whitening,
            use_l2_norm: self.use_l2_norm,
            use_embedding_matrix: self.use_embedding_matrix,
            unique_tokens: self.unique_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub k_grid: Vec<usize>,
    /// Upper bounds of the dense-rank buckets; the last bucket is open.
    pub buckets: Vec<usize>,
    pub coverage_mode: CoverageMode,
    /// BM25 depth within which a correct passage qualifies a query for the
    /// amnesia profile.
    pub amnesia_depth: usize,
    /// Rows per id in projection dumps.
    pub project_top_k: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            k_grid: vec![1, 5, 10, 20, 50, 100, 200, 500, 1000],
            buckets: vec![5, 20, 100],
            coverage_mode: CoverageMode::Pooled,
            amnesia_depth: 5,
            project_top_k: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    /// Gold ids when available, otherwise answer strings.
    #[default]
    Auto,
    Gold,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    #[default]
    Dense,
    Bm25,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub method: SearchMethod,
    /// Results kept per query.
    pub depth: usize,
    pub k_grid: Vec<usize>,
    pub ndcg_cutoff: usize,
    pub judge: JudgeMode,
    /// Apply lexical enrichment in dense search.
    pub enrich: bool,
    pub bm25_mode: TermMode,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        let bm25 = Bm25Params::default();
        RetrievalSettings {
            method: SearchMethod::Dense,
            depth: 100,
            k_grid: vec![1, 5, 20, 100],
            ndcg_cutoff: 10,
            judge: JudgeMode::Auto,
            enrich: false,
            bm25_mode: TermMode::Word,
            k1: bm25.k1,
            b: bm25.b,
        }
    }
}

impl RetrievalSettings {
    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Metric used to pick λ: `top-<k>` or `ndcg@<k>`.
    pub select: String,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            select: "top-20".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub cutoffs: Vec<usize>,
    /// Further datasets evaluated next to the main one.
    pub datasets: Vec<DatasetPaths>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            cutoffs: vec![1, 5, 20, 100],
            datasets: Vec::new(),
        }
    }
}

/// Everything a pipeline command reads. Loaded from TOML; relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub paths: Paths,
    pub optimizer: OptimizerConfig,
    pub enrichment: EnrichmentSettings,
    pub analysis: AnalysisSettings,
    pub retrieval: RetrievalSettings,
    pub sweep: SweepSettings,
    pub report: ReportSettings,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn resolve_dataset(base: &Path, d: &mut DatasetPaths) {
    for p in [
        &mut d.corpus,
        &mut d.queries,
        &mut d.query_embeddings,
        &mut d.passage_embeddings,
        &mut d.qrels,
    ] {
        resolve(base, p);
    }
}

fn check_grid(name: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation(format!(
            "{name} must be non-empty, positive and strictly ascending, got {grid:?}"
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.corpus,
            &mut p.queries,
            &mut p.query_embeddings,
            &mut p.passage_embeddings,
            &mut p.qrels,
            &mut p.head,
            &mut p.vocab,
            &mut p.stoplist,
            &mut p.idf,
            &mut p.enrichment,
            &mut p.bm25_index,
            &mut p.run,
            &mut p.dense_run,
            &mut p.bm25_run,
        ] {
            resolve(base, path);
        }
        for d in &mut self.report.datasets {
            resolve_dataset(base, d);
        }
        resolve(base, &mut self.output_dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that do not depend on which command runs.
    pub fn validate(&self) -> Result<()> {
        let mut opt = self.optimizer;
        opt.seed = self.seed;
        opt.validate()?;
        check_grid("analysis.k_grid", &self.analysis.k_grid)?;
        check_grid("analysis.buckets", &self.analysis.buckets)?;
        check_grid("retrieval.k_grid", &self.retrieval.k_grid)?;
        check_grid("report.cutoffs", &self.report.cutoffs)?;
        if self.analysis.amnesia_depth == 0 || self.analysis.project_top_k == 0 {
            return Err(Error::validation("amnesia_depth and project_top_k must be positive"));
        }
        if self.retrieval.depth == 0 || self.retrieval.ndcg_cutoff == 0 {
            return Err(Error::validation("retrieval depth and ndcg cutoff must be positive"));
        }
        if !(self.enrichment.lambda.is_finite() && self.enrichment.lambda >= 0.0) {
            return Err(Error::validation(format!(
                "lambda must be finite and >= 0, got {}",
                self.enrichment.lambda
            )));
        }
        if self.enrichment.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::validation("every lambda in the grid must be finite and >= 0"));
        }
        if !(self.retrieval.k1 >= 0.0 && (0.0..=1.0).contains(&self.retrieval.b)) {
            return Err(Error::validation("BM25 needs k1 >= 0 and b in [0, 1]"));
        }
        SelectMetric::parse(&self.sweep.select)?;
        for (name, p) in self.referenced_paths() {
            if !path_exists(&p) {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("{name} not found")),
                ));
            }
        }
        Ok(())
    }

    /// Optimizer settings with the run seed applied.
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.optimizer
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn referenced_paths(&self) -> Vec<(String, PathBuf)> {
        let p = &self.paths;
        let mut out: Vec<(String, PathBuf)> = [
            ("head", &p.head),
            ("vocab", &p.vocab),
            ("stoplist", &p.stoplist),
            ("idf", &p.idf),
            ("enrichment", &p.enrichment),
            ("bm25_index", &p.bm25_index),
            ("run", &p.run),
            ("dense_run", &p.dense_run),
            ("bm25_run", &p.bm25_run),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.clone().map(|v| (n.to_string(), v)))
        .collect();
        let main = p.dataset();
        let datasets = std::iter::once(&main).chain(&self.report.datasets);
        for (i, d) in datasets.enumerate() {
            let prefix = if i == 0 { String::new() } else { format!("report.datasets[{}].", i - 1) };
            for (n, v) in [
                ("corpus", &d.corpus),
                ("queries", &d.queries),
                ("query_embeddings", &d.query_embeddings),
                ("passage_embeddings", &d.passage_embeddings),
                ("qrels", &d.qrels),
            ] {
                if let Some(v) = v {
                    out.push((format!("{prefix}{n}"), v.clone()));
                }
            }
        }
        out
    }
}

/// Bundle bases exist when their manifest does.
pub(crate) fn path_exists(p: &Path) -> bool {
    p.exists() || crate::datastore::bundle_paths(p).0.exists()
}

/// Metric that `sweep` maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMetric {
    TopK(usize),
    Ndcg(usize),
}

impl SelectMetric {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("sweep.select must look like top-20 or ndcg@10, got `{s}`"));
        let (kind, k) = if let Some(k) = s.strip_prefix("top-") {
            (0, k)
        } else if let Some(k) = s.strip_prefix("ndcg@") {
            (1, k)
        } else {
            return Err(bad());
        };
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(if kind == 0 { SelectMetric::TopK(k) } else { SelectMetric::Ndcg(k) })
    }
}

impl std::fmt::Display for SelectMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectMetric::TopK(k) => write!(f, "top-{k}"),
            SelectMetric::Ndcg(k) => write!(f, "ndcg@{k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            [paths]
            head = "head"
            corpus = "c.jsonl"
            [enrichment]
            lambda = 0.5
            use_idf = false
            [retrieval]
            bm25_mode = "wordpiece"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.paths.corpus, Some(PathBuf::from("c.jsonl")));
        assert!(!cfg.enrichment.use_idf);
        assert!(cfg.enrichment.use_whitening);
        assert_eq!(cfg.retrieval.bm25_mode, TermMode::Wordpiece);
        assert_eq!(cfg.optimizer().lr, 0.01);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_grids() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.analysis.k_grid = vec![5, 1];
        assert!(cfg.validate().is_err());
        assert_eq!(SelectMetric::parse("ndcg@10").unwrap(), SelectMetric::Ndcg(10));
        assert!(SelectMetric::parse("top-0").is_err());
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let mut cfg = RunConfig::default();
        cfg.paths.vocab = Some(PathBuf::from("/nonexistent/vocab.txt"));
        assert!(cfg.validate().unwrap_err().is_io());
    }
}
