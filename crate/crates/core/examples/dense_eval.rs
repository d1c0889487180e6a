//! Exact dense retrieval scored against graded judgments.

use lexlens::retrieval::{dense_search, mrr_at, ndcg_at, topk_accuracy};
use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let world = World::generate(WorldSpec::default())?;
    let run = dense_search(&world.passage_store, &world.query_store, 100)?;
    let acc = topk_accuracy(&run, &world.qrels, &[1, 5, 20, 100])?;
    for (k, value) in &acc.values {
        println!("top-{k:<4} {value:.3}");
    }
    println!("nDCG@10  {:.3}", ndcg_at(&run, &world.qrels, 10)?.value);
    println!("MRR@10   {:.3}", mrr_at(&run, &world.qrels, 10)?);
    println!("{} queries", acc.n_queries);
    Ok(())
}
