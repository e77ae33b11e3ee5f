//! Generate the clustered synthetic corpus and see how much of it survives
//! 5-core filtering.
//!
//! ```text
//! cargo run --example synth_corpus -- 7
//! ```

use mmrec::ingest::{k_core_filter, synth_generate, SynthConfig, DEFAULT_K_CORE};

fn main() -> mmrec::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&cfg)?;

    let in_cluster = corpus
        .interactions
        .iter()
        .filter(|r| {
            let u: usize = r.user[1..].parse().unwrap();
            let i: usize = r.item[1..].parse().unwrap();
            corpus.user_cluster[u] == corpus.item_cluster[i]
        })
        .count();
    println!(
        "{} users x {} items, {} interactions ({:.0}% inside the user's cluster)",
        cfg.n_users,
        cfg.n_items,
        corpus.interactions.len(),
        100.0 * in_cluster as f64 / corpus.interactions.len() as f64
    );
    println!(
        "image features {}-d, text features {}-d",
        corpus.image.dim(),
        corpus.text.dim()
    );

    let core = k_core_filter(corpus.interactions.clone(), DEFAULT_K_CORE)?;
    let mut users: Vec<&str> = core.interactions.iter().map(|r| r.user.as_str()).collect();
    let mut items: Vec<&str> = core.interactions.iter().map(|r| r.item.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    items.sort_unstable();
    items.dedup();
    println!(
        "{DEFAULT_K_CORE}-core keeps {} interactions, {} users, {} items",
        core.interactions.len(),
        users.len(),
        items.len()
    );
    Ok(())
}
