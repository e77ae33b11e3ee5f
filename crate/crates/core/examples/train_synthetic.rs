//! Train on the synthetic corpus with the reference hyperparameters,
//! printing one line per epoch, and save the best checkpoint.
//!
//! ```text
//! cargo run --release --example train_synthetic -- /tmp/model.mmck
//! ```

use mmrec::ingest::{prepare, synth_generate, PrepConfig, SynthConfig};
use mmrec::train::{fit_with_observer, save_checkpoint, TrainConfig};

fn main() -> mmrec::Result<()> {
    let seed = 7;
    let corpus = synth_generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    // Keep every item so the ranking task has a realistic candidate pool.
    let prep = prepare(
        corpus.interactions.clone(),
        &PrepConfig {
            seed,
            k_core: 1,
            with_validation: true,
        },
    )?;
    let (image, text) = corpus.aligned_features(&prep.ids, true)?;

    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let out = fit_with_observer(&prep.split, &image, &text, &cfg, |rec| {
        println!(
            "epoch {:>3}  loss {:.4}  val R@10 {:.3}{}",
            rec.epoch,
            rec.loss,
            rec.val_recall().unwrap_or(f64::NAN),
            if rec.improved { "  *" } else { "" }
        );
    })?;
    println!(
        "best epoch {} with val Recall@10 {:.3}{}",
        out.best.epoch,
        out.best.best_val_recall,
        if out.stopped_early { " (early stop)" } else { "" }
    );

    if let Some(path) = std::env::args().nth(1) {
        save_checkpoint(&path, &out.best)?;
        println!("saved {path}");
    }
    Ok(())
}
