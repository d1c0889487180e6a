use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lexlens::analysis::CoverageMode;
use lexlens::pipeline::{self, JudgeMode, ProjectTarget, RunConfig, RunManifest, SearchMethod};
use lexlens::retrieval::TermMode;
use lexlens::Error;

/// Vocabulary projections of dense retrievers, overlap analyses and lexical
/// enrichment.
///
/// Settings come from an optional TOML config (`--config`); flags override
/// it. Every command writes its outputs and a `manifest-<command>.json`
/// into the output directory. Exit status: 0 success, 1 invalid input or
/// config, 2 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "lexlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the top-k vocabulary projection tokens of each embedding.
    Project {
        /// Which store to project.
        #[arg(long, value_enum, default_value_t = Which::Queries)]
        target: Which,
    },
    /// Coverage, token-level MRR, expansion, categories and amnesia reports.
    Analyze,
    /// Fit single-token enrichments and whitening through the MLM head.
    EnrichFit,
    /// Write enriched query and passage embeddings.
    EnrichApply,
    /// Build a BM25 index over the corpus.
    IndexBm25,
    /// Retrieve with dense (optionally enriched) search or BM25.
    Search,
    /// Score a run file against the judgments.
    Eval,
    /// Evaluate enriched dense retrieval over a grid of lambda values.
    Sweep,
    /// Run the ablation grid (variants x datasets x cutoffs).
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Which {
    Queries,
    Passages,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Dense,
    Bm25,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Judge {
    Auto,
    Gold,
    Answer,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Terms {
    Word,
    Wordpiece,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Coverage {
    Pooled,
    PerPairMean,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    /// Seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// MLM head bundle base path.
    #[arg(long, global = true, help_heading = "Inputs")]
    head: Option<PathBuf>,
    /// Vocabulary file, one token per line.
    #[arg(long, global = true, help_heading = "Inputs")]
    vocab: Option<PathBuf>,
    /// Stop-word file [default: built-in English list].
    #[arg(long, global = true, help_heading = "Inputs")]
    stoplist: Option<PathBuf>,
    /// Corpus JSONL (id, title, text).
    #[arg(long, global = true, help_heading = "Inputs")]
    corpus: Option<PathBuf>,
    /// Query JSONL (id, text, answers, gold_pids).
    #[arg(long, global = true, help_heading = "Inputs")]
    queries: Option<PathBuf>,
    /// Query embedding bundle base path.
    #[arg(long, global = true, help_heading = "Inputs")]
    query_embeddings: Option<PathBuf>,
    /// Passage embedding bundle base path.
    #[arg(long, global = true, help_heading = "Inputs")]
    passage_embeddings: Option<PathBuf>,
    /// TREC qrels file.
    #[arg(long, global = true, help_heading = "Inputs")]
    qrels: Option<PathBuf>,
    /// External IDF bundle [default: IDF over the corpus].
    #[arg(long, global = true, help_heading = "Inputs")]
    idf: Option<PathBuf>,
    /// Fitted enrichment bundle [default: fit in-process].
    #[arg(long, global = true, help_heading = "Inputs")]
    enrichment: Option<PathBuf>,
    /// BM25 index written by index-bm25.
    #[arg(long, global = true, help_heading = "Inputs")]
    bm25_index: Option<PathBuf>,
    /// TREC run to evaluate.
    #[arg(long, global = true, help_heading = "Inputs")]
    run: Option<PathBuf>,
    /// Dense run for the amnesia profile.
    #[arg(long, global = true, help_heading = "Inputs")]
    dense_run: Option<PathBuf>,
    /// BM25 run for the amnesia profile.
    #[arg(long, global = true, help_heading = "Inputs")]
    bm25_run: Option<PathBuf>,

    /// Adam learning rate.
    #[arg(long, global = true, help_heading = "Enrichment")]
    lr: Option<f64>,
    /// Stop a token once its cross-entropy is at or below this.
    #[arg(long, global = true, help_heading = "Enrichment")]
    loss_threshold: Option<f64>,
    /// Optimizer steps per token.
    #[arg(long, global = true, help_heading = "Enrichment")]
    max_steps: Option<usize>,
    /// Mixing weight of the lexical vector.
    #[arg(long, global = true, help_heading = "Enrichment")]
    lambda: Option<f64>,
    /// Comma-separated lambda values for sweep.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Enrichment")]
    lambda_grid: Option<Vec<f64>>,
    /// Weight every token by 1 instead of its IDF.
    #[arg(long, global = true, help_heading = "Enrichment")]
    no_idf: bool,
    /// Use the raw enrichments, without whitening.
    #[arg(long, global = true, help_heading = "Enrichment")]
    no_whitening: bool,
    /// Add the lexical vector without unit-normalizing it.
    #[arg(long, global = true, help_heading = "Enrichment")]
    no_l2: bool,
    /// Use the head's output embeddings instead of fitted enrichments.
    #[arg(long, global = true, help_heading = "Enrichment")]
    use_embedding_matrix: bool,
    /// Average over distinct tokens rather than occurrences.
    #[arg(long, global = true, help_heading = "Enrichment")]
    unique_tokens: bool,

    /// Retrieval method for search.
    #[arg(long, global = true, value_enum, help_heading = "Retrieval")]
    method: Option<Method>,
    /// Enrich queries and passages before dense search.
    #[arg(long, global = true, help_heading = "Retrieval")]
    enrich: bool,
    /// Results kept per query.
    #[arg(long, global = true, help_heading = "Retrieval")]
    depth: Option<usize>,
    /// Comma-separated cutoffs for top-k accuracy.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Retrieval")]
    k_grid: Option<Vec<usize>>,
    /// How hits are judged.
    #[arg(long, global = true, value_enum, help_heading = "Retrieval")]
    judge: Option<Judge>,
    /// BM25 term unit.
    #[arg(long, global = true, value_enum, help_heading = "Retrieval")]
    bm25_mode: Option<Terms>,
    /// BM25 k1.
    #[arg(long, global = true, help_heading = "Retrieval")]
    k1: Option<f64>,
    /// BM25 b.
    #[arg(long, global = true, help_heading = "Retrieval")]
    b: Option<f64>,
    /// Metric sweep maximizes, e.g. top-20 or ndcg@10.
    #[arg(long, global = true, help_heading = "Retrieval")]
    select: Option<String>,

    /// Tokens per id in projection dumps.
    #[arg(long, global = true, help_heading = "Analysis")]
    top_k: Option<usize>,
    /// Comma-separated k values for the analyses.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Analysis")]
    analysis_k_grid: Option<Vec<usize>>,
    /// Pool shared tokens across pairs or average per pair.
    #[arg(long, global = true, value_enum, help_heading = "Analysis")]
    coverage_mode: Option<Coverage>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

impl Common {
    fn config(&self) -> lexlens::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set_path(&mut cfg.output_dir, &self.out);
        set(&mut cfg.seed, self.seed);
        let p = &mut cfg.paths;
        for (slot, value) in [
            (&mut p.head, &self.head),
            (&mut p.vocab, &self.vocab),
            (&mut p.stoplist, &self.stoplist),
            (&mut p.corpus, &self.corpus),
            (&mut p.queries, &self.queries),
            (&mut p.query_embeddings, &self.query_embeddings),
            (&mut p.passage_embeddings, &self.passage_embeddings),
            (&mut p.qrels, &self.qrels),
            (&mut p.idf, &self.idf),
            (&mut p.enrichment, &self.enrichment),
            (&mut p.bm25_index, &self.bm25_index),
            (&mut p.run, &self.run),
            (&mut p.dense_run, &self.dense_run),
            (&mut p.bm25_run, &self.bm25_run),
        ] {
            set_path(slot, value);
        }
        set(&mut cfg.optimizer.lr, self.lr);
        set(&mut cfg.optimizer.loss_threshold, self.loss_threshold);
        set(&mut cfg.optimizer.max_steps, self.max_steps);
        let e = &mut cfg.enrichment;
        set(&mut e.lambda, self.lambda);
        set(&mut e.lambda_grid, self.lambda_grid.clone());
        e.use_idf &= !self.no_idf;
        e.use_whitening &= !self.no_whitening;
        e.use_l2_norm &= !self.no_l2;
        e.use_embedding_matrix |= self.use_embedding_matrix;
        e.unique_tokens |= self.unique_tokens;
        let r = &mut cfg.retrieval;
        set(
            &mut r.method,
            self.method.map(|m| match m {
                Method::Dense => SearchMethod::Dense,
                Method::Bm25 => SearchMethod::Bm25,
            }),
        );
        r.enrich |= self.enrich;
        set(&mut r.depth, self.depth);
        set(&mut r.k_grid, self.k_grid.clone());
        set(
            &mut r.judge,
            self.judge.map(|j| match j {
                Judge::Auto => JudgeMode::Auto,
                Judge::Gold => JudgeMode::Gold,
                Judge::Answer => JudgeMode::Answer,
            }),
        );
        set(
            &mut r.bm25_mode,
            self.bm25_mode.map(|m| match m {
                Terms::Word => TermMode::Word,
                Terms::Wordpiece => TermMode::Wordpiece,
            }),
        );
        set(&mut r.k1, self.k1);
        set(&mut r.b, self.b);
        set(&mut cfg.sweep.select, self.select.clone());
        let a = &mut cfg.analysis;
        set(&mut a.project_top_k, self.top_k);
        set(&mut a.k_grid, self.analysis_k_grid.clone());
        set(
            &mut a.coverage_mode,
            self.coverage_mode.map(|c| match c {
                Coverage::Pooled => CoverageMode::Pooled,
                Coverage::PerPairMean => CoverageMode::PerPairMean,
            }),
        );
        Ok(cfg)
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> lexlens::Result<RunManifest> {
    match command {
        Command::Project { target } => pipeline::cmd_project(
            cfg,
            match target {
                Which::Queries => ProjectTarget::Queries,
                Which::Passages => ProjectTarget::Passages,
            },
        ),
        Command::Analyze => pipeline::cmd_analyze(cfg),
        Command::EnrichFit => pipeline::cmd_enrich_fit(cfg),
        Command::EnrichApply => pipeline::cmd_enrich_apply(cfg),
        Command::IndexBm25 => pipeline::cmd_index_bm25(cfg),
        Command::Search => pipeline::cmd_search(cfg),
        Command::Eval => pipeline::cmd_eval(cfg),
        Command::Sweep => pipeline::cmd_sweep(cfg),
        Command::Report => pipeline::cmd_report(cfg),
    }
}

fn run(cli: &Cli) -> lexlens::Result<RunManifest> {
    let cfg = cli.common.config()?;
    match cli.common.threads {
        Some(0) => Err(Error::validation("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?
            .install(|| dispatch(&cli.command, &cfg)),
        None => dispatch(&cli.command, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(manifest) => {
            for o in &manifest.outputs {
                println!("wrote {}", o.path);
            }
            for n in &manifest.notices {
                println!("notice: {n}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
