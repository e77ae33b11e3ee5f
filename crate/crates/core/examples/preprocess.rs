//! Deduplicate, timestamp, filter, encode and split a small interaction
//! log, then draw one epoch of training negatives.

use mmrec::ingest::{prepare, sample_negatives, Interaction, PrepConfig};

fn main() -> mmrec::Result<()> {
    // Three users who each touched the same five items, plus a duplicate
    // record and a one-off item that the 3-core filter removes.
    let mut raw = Vec::new();
    for u in ["alice", "bob", "carol"] {
        for i in ["hat", "scarf", "boots", "coat", "gloves"] {
            raw.push(Interaction::new(u, i, None));
        }
    }
    raw.push(Interaction::new("alice", "hat", None));
    raw.push(Interaction::new("bob", "umbrella", None));

    let cfg = PrepConfig {
        seed: 1,
        k_core: 3,
        with_validation: true,
    };
    let p = prepare(raw, &cfg)?;
    println!("dropped by filtering: {}", p.filtered_out);
    println!("users: {:?}", p.ids.user_tokens());
    println!("items: {:?}", p.ids.item_tokens());
    for u in 0..p.split.n_users {
        let train: Vec<&str> = p.split.train_pos[u].iter().map(|&i| p.ids.item_token(i)).collect();
        println!(
            "{:>5}: train {:?}, validation {:?}, test {:?}",
            p.ids.user_token(u),
            train,
            p.split.validation_item(u).map(|i| p.ids.item_token(i)),
            p.ids.item_token(p.split.test_item(u))
        );
    }

    // Every user has seen every item here, so no negative can be drawn.
    match sample_negatives(&p.split, 1, cfg.seed, 1) {
        Ok(ex) => println!("{} training examples", ex.len()),
        Err(e) => println!("negative sampling refused: {e}"),
    }
    Ok(())
}
