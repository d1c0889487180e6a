//! Fit single-token enrichments for a head and mix a lexical direction into
//! a passage embedding.

use std::collections::BTreeSet;

use lexlens::enrichment::{fit_single_token_enrichments, EnrichmentModel, FittedEnrichments, OptimizerConfig, Switches};
use lexlens::lexical::{tokenize, IdfTable};
use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let world = World::generate(WorldSpec::default())?;
    let table = fit_single_token_enrichments(&world.head, &OptimizerConfig::default())?;
    let mean_loss = table.losses().iter().sum::<f64>() / table.vocab_size() as f64;
    println!(
        "{} of {} tokens converged, mean final loss {mean_loss:.4}",
        table.vocab_size() - table.unconverged().len(),
        table.vocab_size()
    );
    let fitted = FittedEnrichments::new(table)?;
    println!("whitening clamped {} eigenvalues", fitted.whitening.clamped);

    let streams: Vec<Vec<u32>> = world.corpus.iter().map(|r| tokenize(&world.vocab, &r.full_text())).collect();
    let idf = IdfTable::from_token_streams(&streams, world.vocab.len())?;
    let special: BTreeSet<u32> = (0..5).collect();
    let model = EnrichmentModel::build(&world.head, &fitted, &idf, &special, 3.0, Switches::default())?;

    let (pid, token) = world.dropped.iter().next().expect("affected passages exist");
    let text = &world.corpus.iter().find(|r| &r.id == pid).expect("in corpus").text;
    let e: Vec<f64> = world.passage_store.get(pid).expect("encoded").iter().map(|&v| v as f64).collect();
    let lexical = model.lexical_vector(&tokenize(&world.vocab, text))?;
    let enriched = model.enrich(&e, &lexical)?;
    let id = world.vocab.id(token).expect("in vocabulary") as usize;
    let before = world.head.forward(&e)?.rank_of(id)?;
    let after = world.head.forward(&enriched)?.rank_of(id)?;
    println!("{pid}: `{token}` rank {before} before enrichment, {after} after");
    Ok(())
}
