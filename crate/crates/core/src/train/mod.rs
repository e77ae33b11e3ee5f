//! Training: BCE loss, analytic backpropagation, Adam, the epoch loop with
//! per-epoch negative sampling and early stopping, and checkpoint files.

mod adam;
mod backward;
mod checkpoint;
mod fit;
mod loss;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use backward::{backward, batch_loss, batch_loss_and_grads, Gradients};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MMCK_MAGIC, MMCK_VERSION};
pub use fit::{fit, fit_with_observer, train_epoch, EpochRecord, FitOutcome};
pub use loss::bce_loss;

use crate::error::{Error, Result};
use crate::eval::DEFAULT_NEGATIVES;
use crate::model::{FusionMode, ModelConfig, ScoringMode};

/// Hyperparameters. Defaults are the reference configuration: d = 64,
/// two propagation layers, Adam at 1e-3, batches of 256, one negative per
/// positive, 100 epochs, patience 5, cutoffs {10, 20}.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    /// Policy MLP hidden width.
    pub h: usize,
    pub gcn_layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub neg_ratio: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub early_stopping: bool,
    pub eval_ks: Vec<usize>,
    pub eval_negatives: usize,
    pub seed: u64,
    pub scoring: ScoringMode,
    pub fusion: FusionMode,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            h: 128,
            gcn_layers: 2,
            lr: 1e-3,
            batch_size: 256,
            neg_ratio: 1,
            max_epochs: 100,
            patience: 5,
            early_stopping: true,
            eval_ks: vec![10, 20],
            eval_negatives: DEFAULT_NEGATIVES,
            seed: 0,
            scoring: ScoringMode::DotProduct,
            fusion: FusionMode::Gated,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("h", self.h),
            ("batch_size", self.batch_size),
            ("neg_ratio", self.neg_ratio),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("eval_negatives", self.eval_negatives),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.gcn_layers > crate::graph::MAX_LAYERS {
            return Err(Error::Config(format!(
                "gcn_layers {} exceeds maximum {}",
                self.gcn_layers,
                crate::graph::MAX_LAYERS
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.eval_ks.is_empty() || self.eval_ks.contains(&0) {
            return Err(Error::Config("evaluation cutoffs must be positive".into()));
        }
        if let FusionMode::Fixed(g) = self.fusion {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("fixed gate {g} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            gcn_layers: self.gcn_layers,
            scoring: self.scoring,
            fusion: self.fusion,
            parallel: self.parallel,
        }
    }

    /// Stable `key=value` rendering stored in checkpoints.
    pub fn echo(&self) -> String {
        let fusion = match self.fusion {
            FusionMode::Gated => "gated".to_string(),
            FusionMode::Fixed(g) => format!("fixed:{g}"),
        };
        let ks: Vec<String> = self.eval_ks.iter().map(|k| k.to_string()).collect();
        format!(
            "d={} h={} layers={} lr={} batch={} neg_ratio={} max_epochs={} patience={} early_stopping={} ks={} eval_negatives={} seed={} scoring={} fusion={}",
            self.d,
            self.h,
            self.gcn_layers,
            self.lr,
            self.batch_size,
            self.neg_ratio,
            self.max_epochs,
            self.patience,
            self.early_stopping,
            ks.join(","),
            self.eval_negatives,
            self.seed,
            self.scoring.as_str(),
            fusion
        )
    }

    /// Recover the model-shaping fields from an [`echo`](Self::echo) string.
    pub fn model_config_from_echo(echo: &str) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::default();
        for kv in echo.split_whitespace() {
            let Some((k, v)) = kv.split_once('=') else { continue };
            match k {
                "layers" => {
                    cfg.gcn_layers = v
                        .parse()
                        .map_err(|_| Error::Format(format!("bad layers value {v:?} in checkpoint")))?
                }
                "scoring" => cfg.scoring = ScoringMode::parse(v)?,
                "fusion" => {
                    cfg.fusion = match v.strip_prefix("fixed:") {
                        Some(g) => FusionMode::Fixed(
                            g.parse()
                                .map_err(|_| Error::Format(format!("bad fusion value {v:?} in checkpoint")))?,
                        ),
                        None => FusionMode::Gated,
                    }
                }
                _ => {}
            }
        }
        Ok(cfg)
    }
}
