//! Ablation grid over two datasets: each switch turned off in turn.

use lexlens::pipeline::{cmd_enrich_fit, cmd_report, DatasetPaths, Table};
use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let dir = std::env::temp_dir().join(format!("lexlens-report-{}", std::process::id()));
    let mut cfg = World::generate(WorldSpec::default())?.write(&dir.join("main"))?;
    let other = World::generate(WorldSpec {
        seed: 1,
        ..WorldSpec::default()
    })?
    .write(&dir.join("other"))?;
    let root = cfg.output_dir();

    let mut fit = cfg.clone();
    fit.output_dir = Some(root.join("fit"));
    cmd_enrich_fit(&fit)?;

    cfg.paths.enrichment = Some(root.join("fit/enrichment"));
    cfg.enrichment.lambda = 3.0;
    cfg.report.cutoffs = vec![1, 5, 20];
    cfg.report.datasets.push(DatasetPaths {
        name: "other".into(),
        ..other.paths.dataset()
    });
    cfg.output_dir = Some(root.join("report"));
    cmd_report(&cfg)?;

    let table = Table::read(&root.join("report/ablation.csv"))?;
    println!("{}", table.header.join(","));
    for row in &table.rows {
        println!("{}", row.join(","));
    }
    std::fs::remove_dir_all(&dir).map_err(|e| lexlens::Error::io(&dir, e))?;
    Ok(())
}
