//! Project passage embeddings through the MLM head and list the tokens each
//! one ranks highest.

use lexlens::synthetic::{World, WorldSpec};

fn main() -> lexlens::Result<()> {
    let world = World::generate(WorldSpec::default())?;
    for record in world.corpus.iter().take(4).chain(world.corpus.iter().skip(5).take(1)) {
        let proj = world.head.forward_f32(world.passage_store.get(&record.id).expect("encoded"))?;
        let top: Vec<String> = proj
            .top_k(6)?
            .into_iter()
            .map(|(t, p)| format!("{}({p:.3})", world.vocab.token(t as u32).unwrap_or("?")))
            .collect();
        println!("{}  \"{}\"", record.id, record.text);
        println!("    top: {}", top.join(" "));
        if let Some(token) = world.dropped.get(&record.id) {
            let id = world.vocab.id(token).expect("in vocabulary") as usize;
            println!("    dropped `{token}` sits at rank {}", proj.rank_of(id)?);
        }
    }
    Ok(())
}
