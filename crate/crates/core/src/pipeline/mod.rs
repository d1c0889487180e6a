//! Config-driven commands that chain the library into report files. Each
//! command writes into the configured output directory together with a
//! `manifest-<command>.json` recording the resolved config, its hash, the
//! seed and checksums of every input and output.

mod commands;
mod config;
mod output;

pub use commands::{
    ablation_variants, cmd_analyze, cmd_enrich_apply, cmd_enrich_fit, cmd_eval, cmd_index_bm25, cmd_project,
    cmd_report, cmd_search, cmd_sweep, evaluate, fitted_enrichments, idf_table, load_head, load_stoplist,
    load_vocab, Judgments, MetricRow, ProjectTarget, SweepOutcome,
};
pub use config::{
    AnalysisSettings, DatasetPaths, EnrichmentSettings, JudgeMode, Paths, ReportSettings, RetrievalSettings,
    RunConfig, SearchMethod, SelectMetric, SweepSettings,
};
pub use output::{file_checksum, Checksum, OutputDir, RunManifest, Table};
