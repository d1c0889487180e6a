//! Fit enrichments, then sweep the mixing weight and report the selected one.

use lexlens::pipeline::{cmd_enrich_fit, cmd_sweep, Table};
use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let dir = std::env::temp_dir().join(format!("lexlens-sweep-{}", std::process::id()));
    let world = World::generate(WorldSpec::default())?;
    let mut cfg = world.write(&dir)?;
    let root = cfg.output_dir();

    let mut fit = cfg.clone();
    fit.output_dir = Some(root.join("fit"));
    cmd_enrich_fit(&fit)?;

    cfg.paths.enrichment = Some(root.join("fit/enrichment"));
    cfg.enrichment.lambda_grid = vec![0.0, 0.5, 1.0, 2.0, 3.0, 5.0];
    cfg.sweep.select = "top-5".into();
    cfg.output_dir = Some(root.join("sweep"));
    cmd_sweep(&cfg)?;

    let table = Table::read(&root.join("sweep/sweep.csv"))?;
    println!("{}", table.header.join("  "));
    for row in &table.rows {
        println!("{}", row.join("  "));
    }
    println!("{}", std::fs::read_to_string(root.join("sweep/sweep.json")).map_err(|e| lexlens::Error::io(&root, e))?);
    std::fs::remove_dir_all(&dir).map_err(|e| lexlens::Error::io(&dir, e))?;
    Ok(())
}
