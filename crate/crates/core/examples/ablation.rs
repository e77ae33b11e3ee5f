//! Learned gate versus a constant 0.5 gate when the text modality is pure
//! noise. Prints validation Recall@10 for each and where the learned gate
//! ended up on average.

use mmrec::ingest::{prepare, synth_generate, Modality, PrepConfig, SynthConfig};
use mmrec::model::{fuse_item, FusionMode};
use mmrec::train::{fit, TrainConfig};

fn main() -> mmrec::Result<()> {
    for seed in 1..=4 {
        let synth = SynthConfig {
            seed,
            noisy_modality: Some(Modality::Text),
            ..SynthConfig::default()
        };
        let corpus = synth_generate(&synth)?;
        let prep = prepare(
            corpus.interactions.clone(),
            &PrepConfig {
                seed,
                k_core: 1,
                with_validation: true,
            },
        )?;
        let (image, text) = corpus.aligned_features(&prep.ids, true)?;

        let mut line = format!("seed {seed}:");
        for fusion in [FusionMode::Gated, FusionMode::Fixed(0.5)] {
            let cfg = TrainConfig {
                seed,
                fusion,
                ..TrainConfig::default()
            };
            let best = fit(&prep.split, &image, &text, &cfg)?.best;
            line += &format!("  {fusion:?} R@10 {:.3}", best.best_val_recall);
            if fusion == FusionMode::Gated {
                let n = prep.split.n_items;
                let mut mean_g = 0.0;
                for i in 0..n {
                    let f = fuse_item(&best.params, fusion, &image, &text, i)?;
                    mean_g += f.g.iter().sum::<f64>() / f.g.len() as f64;
                }
                line += &format!(" (mean image weight {:.3})", mean_g / n as f64);
            }
        }
        println!("{line}");
    }
    Ok(())
}
