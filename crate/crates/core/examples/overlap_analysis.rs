//! Token-overlap analysis of query and gold-passage projections.

use std::collections::HashMap;

use lexlens::analysis::{
    category_breakdown, query_expansion_stats, shared_token_coverage, token_level_mrr, CoverageMode, PairSource,
    Selector, Target,
};
use lexlens::lexical::{ContentFilter, StopList};
use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let world = World::generate(WorldSpec::default())?;
    let filter = ContentFilter::new(&world.vocab, &StopList::new(["the", "of", "and"]));
    let query_texts: HashMap<String, String> = world.queries.iter().map(|q| (q.id.clone(), q.text.clone())).collect();
    let passage_texts: HashMap<String, String> = world.corpus.iter().map(|r| (r.id.clone(), r.full_text())).collect();
    let pairs: Vec<(String, String)> =
        world.queries.iter().map(|q| (q.id.clone(), q.gold_pids[0].clone())).collect();
    let source = PairSource {
        head: &world.head,
        vocab: &world.vocab,
        filter: &filter,
        queries: &world.query_store,
        passages: &world.passage_store,
        query_texts: &query_texts,
        passage_texts: &passage_texts,
    };
    let contexts = source.build(&pairs, 200)?;
    let grid = [1, 5, 20, 100];

    let coverage = shared_token_coverage(&contexts, &grid, CoverageMode::Pooled)?;
    println!("{} pairs, {} shared tokens", coverage.n_pairs, coverage.n_shared_tokens);
    for (i, k) in grid.iter().enumerate() {
        println!("  k={k:<4} coverage q {:.3}  p {:.3}", coverage.coverage_q[i], coverage.coverage_p[i]);
    }
    for selector in [Selector::Shared, Selector::QueryOnly, Selector::Passage] {
        let mrr = token_level_mrr(&contexts, selector, Target::P)?;
        println!("  MRR {selector:?} in passage projections: {:?}", mrr.value);
    }
    for row in query_expansion_stats(&contexts, &grid)? {
        println!("  k={:<4} expansion fraction {:.3}", row.k, row.expansion_fraction);
    }
    let c = category_breakdown(&contexts, 20)?;
    println!(
        "  top-20 passage tokens: both {:.3}  query-only {:.3}  passage-only {:.3}  neither {:.3}",
        c.p.in_both, c.p.q_only, c.p.p_only, c.p.neither
    );
    Ok(())
}
