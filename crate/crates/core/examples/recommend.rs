//! Top-10 unseen items for a few users, next to the cluster each item was
//! planted in.

use mmrec::cli::recommend_for;
use mmrec::eval::ScoringTables;
use mmrec::graph::BipartiteGraph;
use mmrec::ingest::{prepare, synth_generate, PrepConfig, SynthConfig};
use mmrec::train::{fit, TrainConfig};

fn main() -> mmrec::Result<()> {
    let seed = 1;
    let corpus = synth_generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let prep = prepare(
        corpus.interactions.clone(),
        &PrepConfig {
            seed,
            k_core: 1,
            with_validation: true,
        },
    )?;
    let (image, text) = corpus.aligned_features(&prep.ids, true)?;
    let split = &prep.split;

    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let best = fit(split, &image, &text, &cfg)?.best;
    let graph = BipartiteGraph::build(&split.train_pairs(), split.n_users, split.n_items)?;
    let tables = ScoringTables::build(&best.params, &cfg.model_config(), &graph, &image, &text)?;

    let cluster_of = |token: &str| corpus.item_cluster[token[1..].parse::<usize>().unwrap()];
    for u in 0..3 {
        let user = prep.ids.user_token(u);
        let home = corpus.user_cluster[user[1..].parse::<usize>().unwrap()];
        println!("{user} (cluster {home}):");
        for (item, score) in recommend_for(&tables, &split.train_pos[u], u, 10) {
            let token = prep.ids.item_token(item);
            println!("  {token}  cluster {}  score {score:+.3}", cluster_of(token));
        }
    }
    Ok(())
}
