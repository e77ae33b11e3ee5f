//! Sampled-candidate evaluation of a briefly trained model against an
//! untrained one and a random scorer.

use mmrec::eval::{evaluate, evaluate_with, EvalProtocol, HeldOutKind};
use mmrec::graph::BipartiteGraph;
use mmrec::ingest::{prepare, synth_generate, PrepConfig, SynthConfig};
use mmrec::model::init_params;
use mmrec::train::{fit, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mmrec::Result<()> {
    let seed = 3;
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
    let graph = BipartiteGraph::build(&split.train_pairs(), split.n_users, split.n_items)?;
    let protocol = EvalProtocol {
        seed,
        target: HeldOutKind::Test,
        ..EvalProtocol::default()
    };

    let random = evaluate_with(split, &protocol, |u, items| {
        let mut r = ChaCha8Rng::seed_from_u64(u as u64);
        Ok(items.iter().map(|_| r.random::<f64>()).collect())
    })?;
    println!("random     {}", random.to_json_line());

    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let model_cfg = cfg.model_config();
    let untrained = init_params(
        mmrec::model::ModelDims {
            n_users: split.n_users,
            n_items: split.n_items,
            d: cfg.d,
            d_img: image.dim(),
            d_txt: text.dim(),
            h: cfg.h,
        },
        seed,
    )?;
    let before = evaluate(&untrained, &model_cfg, &graph, split, &image, &text, &protocol)?;
    println!("untrained  {}", before.to_json_line());

    let trained = fit(split, &image, &text, &cfg)?.best;
    let after = evaluate(&trained.params, &model_cfg, &graph, split, &image, &text, &protocol)?;
    println!("trained    {}", after.to_json_line());
    println!("candidates per user: {:.1}", after.mean_candidates);
    Ok(())
}
