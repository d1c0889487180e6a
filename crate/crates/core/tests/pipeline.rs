use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

use lexlens::datastore::read_run;
use lexlens::pipeline::{
    cmd_analyze, cmd_enrich_apply, cmd_enrich_fit, cmd_eval, cmd_project, cmd_report, cmd_search, cmd_sweep, file_checksum, DatasetPaths,
    ProjectTarget, RunConfig, Table,
};
use lexlens::retrieval::{mrr_at, ndcg_at, topk_accuracy};
use lexlens::synthetic::{World, WorldSpec};

fn small_world(seed: u64) -> World {
    World::generate(WorldSpec {
        groups: 4,
        dim: 32,
        seed,
        ..WorldSpec::default()
    })
    .unwrap()
}

fn at(cfg: &RunConfig, sub: &str) -> RunConfig {
    let mut c = cfg.clone();
    c.output_dir = Some(cfg.output_dir().join(sub));
    c
}

/// A world on disk with enrichments already fitted into `out/fit`.
fn fitted(dir: &Path) -> RunConfig {
    let mut cfg = small_world(1).write(dir).unwrap();
    cmd_enrich_fit(&at(&cfg, "fit")).unwrap();
    cfg.paths.enrichment = Some(cfg.output_dir().join("fit/enrichment"));
    cfg
}

fn lexlens(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexlens"))
        .current_dir(cwd)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn help_documents_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let top = lexlens(dir.path(), &["--help"]);
    assert_eq!(code(&top), 0);
    let text = String::from_utf8_lossy(&top.stdout);
    for cmd in ["project", "analyze", "enrich-fit", "enrich-apply", "index-bm25", "search", "eval", "sweep", "report"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    let search = lexlens(dir.path(), &["search", "--help"]);
    assert_eq!(code(&search), 0);
    let text = String::from_utf8_lossy(&search.stdout);
    for flag in [
        "--config", "--out", "--threads", "--seed", "--head", "--vocab", "--stoplist", "--corpus", "--queries",
        "--query-embeddings", "--passage-embeddings", "--qrels", "--idf", "--enrichment", "--bm25-index",
        "--run", "--dense-run", "--bm25-run", "--lr", "--loss-threshold", "--max-steps", "--lambda",
        "--lambda-grid", "--no-idf", "--no-whitening", "--no-l2", "--use-embedding-matrix", "--unique-tokens",
        "--method", "--enrich", "--depth", "--k-grid", "--judge", "--bm25-mode", "--k1", "--b", "--select",
        "--top-k", "--analysis-k-grid", "--coverage-mode",
    ] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
}

#[test]
fn exit_codes_separate_validation_from_io() {
    let dir = tempfile::tempdir().unwrap();
    small_world(2).write(dir.path()).unwrap();
    let d = dir.path();
    let base = ["--vocab", "vocab.txt", "--corpus", "corpus.jsonl"];

    assert_eq!(code(&lexlens(d, &["search", "--no-such-flag"])), 1);
    assert_eq!(code(&lexlens(d, &["index-bm25", "--corpus", "absent.jsonl"])), 2);
    assert_eq!(code(&lexlens(d, &["index-bm25", "--config", "absent.toml"])), 2);

    fs::write(d.join("bad.toml"), "seed = [").unwrap();
    assert_eq!(code(&lexlens(d, &["index-bm25", "--config", "bad.toml"])), 1);
    fs::write(d.join("unknown.toml"), "seed = 1\nsurprise = true\n").unwrap();
    assert_eq!(code(&lexlens(d, &["index-bm25", "--config", "unknown.toml"])), 1);

    let mut neg = vec!["index-bm25", "--lambda=-1"];
    neg.extend(base);
    assert_eq!(code(&lexlens(d, &neg)), 1);
    let mut zero = vec!["index-bm25", "--threads", "0"];
    zero.extend(base);
    assert_eq!(code(&lexlens(d, &zero)), 1);

    let mut ok = vec!["index-bm25", "--out", "o"];
    ok.extend(base);
    let out = lexlens(d, &ok);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("o/bm25.json").is_file());
    assert!(d.join("o/manifest-index-bm25.json").is_file());
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("conf");
    fs::create_dir(&sub).unwrap();
    let path = sub.join("run.toml");
    fs::write(
        &path,
        "seed = 4\n[paths]\ncorpus = \"data/c.jsonl\"\nhead = \"/abs/head\"\n\n[[report.datasets]]\nname = \"b\"\nqrels = \"q.txt\"\n",
    )
    .unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.paths.corpus, Some(sub.join("data/c.jsonl")));
    assert_eq!(cfg.paths.head, Some(PathBuf::from("/abs/head")));
    assert_eq!(cfg.report.datasets[0].qrels, Some(sub.join("q.txt")));
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), RunConfig { output_dir: None, ..cfg });
}

#[test]
fn manifest_records_config_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_world(3).write(dir.path()).unwrap();
    let cfg = at(&cfg, "s");
    let manifest = cmd_search(&cfg).unwrap();
    let out = cfg.output_dir();
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest-search.json")).unwrap()).unwrap();
    assert_eq!(on_disk["command"], "search");
    let config = on_disk["config"].as_str().unwrap();
    assert_eq!(on_disk["config_sha256"].as_str().unwrap(), hex::encode(Sha256::digest(config.as_bytes())));
    assert_eq!(RunConfig::from_toml(config).unwrap(), RunConfig { output_dir: None, ..cfg.clone() });
    assert_eq!(manifest.outputs.len(), 1);
    assert_eq!(manifest.outputs[0].sha256, file_checksum(&out.join("run.trec")).unwrap());
    let inputs: Vec<&str> = manifest.inputs.iter().map(|c| c.name.as_str()).collect();
    assert!(inputs.contains(&"passage_embeddings") && inputs.contains(&"head"), "{inputs:?}");
    for c in &manifest.inputs {
        assert_eq!(c.sha256, file_checksum(Path::new(&c.path)).unwrap());
    }
}

#[test]
fn enrich_apply_then_search_equals_enriched_search() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fitted(dir.path());
    cfg.enrichment.lambda = 2.5;
    let root = cfg.output_dir();

    cmd_enrich_apply(&at(&cfg, "apply")).unwrap();
    let mut plain = at(&cfg, "plain");
    plain.paths.query_embeddings = Some(root.join("apply/queries.enriched"));
    plain.paths.passage_embeddings = Some(root.join("apply/passages.enriched"));
    cmd_search(&plain).unwrap();

    let mut direct = at(&cfg, "direct");
    direct.retrieval.enrich = true;
    cmd_search(&direct).unwrap();

    let a = read_run(root.join("plain/run.trec")).unwrap();
    let b = read_run(root.join("direct/run.trec")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eval_matches_library_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let world = small_world(4);
    let mut cfg = world.write(dir.path()).unwrap();
    let root = cfg.output_dir();
    cmd_search(&at(&cfg, "s")).unwrap();
    cfg.paths.run = Some(root.join("s/run.trec"));
    cmd_eval(&at(&cfg, "e")).unwrap();

    let run = read_run(root.join("s/run.trec")).unwrap();
    let table = Table::read(&root.join("e/metrics.csv")).unwrap();
    assert_eq!(table.header, ["metric", "k", "value", "n_queries"]);
    let cutoff = cfg.retrieval.ndcg_cutoff;
    let acc = topk_accuracy(&run, &world.qrels, &cfg.retrieval.k_grid).unwrap();
    let mut want: Vec<(String, usize, f64)> =
        acc.values.iter().map(|&(k, v)| (format!("accuracy_{}", acc.mode), k, v)).collect();
    want.push(("ndcg".into(), cutoff, ndcg_at(&run, &world.qrels, cutoff).unwrap().value));
    want.push((format!("mrr_{}", acc.mode), cutoff, mrr_at(&run, &world.qrels, cutoff).unwrap()));
    assert_eq!(table.rows.len(), want.len());
    for (row, (metric, k, value)) in table.rows.iter().zip(want) {
        assert_eq!(row[0], metric);
        assert_eq!(row[1].parse::<usize>().unwrap(), k);
        assert_eq!(row[2].parse::<f64>().unwrap(), value);
        assert_eq!(row[3], world.queries.len().to_string());
    }
}

#[test]
fn report_covers_every_variant_and_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fitted(&dir.path().join("a"));
    let other = small_world(9).write(&dir.path().join("b")).unwrap();
    cfg.report.datasets.push(DatasetPaths {
        name: "second".into(),
        ..other.paths.dataset()
    });
    cfg.enrichment.lambda = 1.0;
    cfg.report.cutoffs = vec![1, 5];
    let cfg = at(&cfg, "report");
    cmd_report(&cfg).unwrap();
    let table = Table::read(&cfg.output_dir().join("ablation.csv")).unwrap();
    assert_eq!(table.header, ["dataset", "variant", "lambda", "metric", "k", "value", "n_queries"]);
    assert_eq!(table.rows.len(), 2 * 5 * 2);
    let mut seen: Vec<(String, String)> = table.rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    seen.dedup();
    let variants = ["full", "no-idf", "embedding-matrix", "no-whitening", "no-l2"];
    let want: Vec<(String, String)> = ["main", "second"]
        .iter()
        .flat_map(|d| variants.iter().map(move |v| (d.to_string(), v.to_string())))
        .collect();
    assert_eq!(seen, want);
    for row in &table.rows {
        let v: f64 = row[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    let mut dup = cfg.clone();
    dup.report.datasets[0].name = "main".into();
    assert!(cmd_report(&dup).is_err());
}

#[test]
fn projection_table_lists_top_k_per_vector() {
    let dir = tempfile::tempdir().unwrap();
    let world = small_world(6);
    let mut cfg = world.write(dir.path()).unwrap();
    cfg.analysis.project_top_k = 7;
    cmd_project(&cfg, ProjectTarget::Passages).unwrap();
    let table = Table::read(&cfg.output_dir().join("projections_passages.csv")).unwrap();
    assert_eq!(table.header, ["id", "rank", "token_id", "token", "prob", "logit"]);
    assert_eq!(table.rows.len(), world.corpus.len() * 7);
    for (i, chunk) in table.rows.chunks(7).enumerate() {
        assert_eq!(chunk[0][0], world.passage_store.ids()[i]);
        let ranks: Vec<usize> = chunk.iter().map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(ranks, (1..=7).collect::<Vec<_>>());
        let logits: Vec<f64> = chunk.iter().map(|r| r[5].parse().unwrap()).collect();
        assert!(logits.windows(2).all(|w| w[0] >= w[1]));
        for r in chunk {
            let id: u32 = r[2].parse().unwrap();
            assert_eq!(world.vocab.token(id).unwrap(), r[3]);
        }
    }

    cfg.analysis.project_top_k = world.vocab.len() + 1;
    assert!(cmd_project(&cfg, ProjectTarget::Passages).is_err());
}

#[test]
fn analyze_without_runs_skips_amnesia_with_a_notice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_world(7).write(dir.path()).unwrap();
    let cfg = at(&cfg, "a");
    let manifest = cmd_analyze(&cfg).unwrap();
    let out = cfg.output_dir();
    for name in ["coverage.csv", "mrr.csv", "expansion.csv", "categories.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert!(!out.join("amnesia.csv").exists());
    assert!(manifest.notices.iter().any(|n| n.contains("amnesia")), "{:?}", manifest.notices);

    let mut empty = cfg.clone();
    let path = dir.path().join("empty.jsonl");
    fs::write(&path, "").unwrap();
    empty.paths.queries = Some(path);
    assert!(cmd_analyze(&empty).is_err());
}

#[test]
fn sweep_writes_one_row_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fitted(dir.path());
    cfg.enrichment.lambda_grid = vec![0.0, 0.5, 3.0, 5.0];
    let cfg = at(&cfg, "sweep");
    cmd_sweep(&cfg).unwrap();
    let table = Table::read(&cfg.output_dir().join("sweep.csv")).unwrap();
    let lambdas: Vec<f64> = table.rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(lambdas, [0.0, 0.5, 3.0, 5.0]);
    let outcome: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.output_dir().join("sweep.json")).unwrap()).unwrap();
    let best = outcome["best_value"].as_f64().unwrap();
    let col = table.column("accuracy_gold@20").unwrap();
    let max = table.rows.iter().map(|r| r[col].parse::<f64>().unwrap()).fold(f64::MIN, f64::max);
    assert_eq!(best, max);
}
