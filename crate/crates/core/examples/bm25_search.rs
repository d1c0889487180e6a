//! Build a BM25 index over a corpus and run a few queries.

use lexlens::retrieval::{Bm25Index, Bm25Params, TermMode};
use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let world = World::generate(WorldSpec::default())?;
    let index = Bm25Index::build(&world.corpus, TermMode::Word, None, Bm25Params::default())?;
    for query in world.queries.iter().take(3) {
        println!("{}  \"{}\"  gold {}", query.id, query.text, query.gold_pids[0]);
        for hit in index.search_text(None, &query.text, 3)? {
            println!("    {:<8} {:.4}", hit.pid, hit.score);
        }
    }
    let wordpiece = Bm25Index::build(&world.corpus, TermMode::Wordpiece, Some(&world.vocab), Bm25Params::default())?;
    let hits = wordpiece.search_text(Some(&world.vocab), &world.queries[0].text, 1)?;
    println!("wordpiece top hit for {}: {}", world.queries[0].id, hits[0].pid);
    Ok(())
}
