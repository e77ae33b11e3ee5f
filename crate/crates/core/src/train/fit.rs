use std::time::Instant;

use rand::seq::SliceRandom;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalProtocol, EvalReport, HeldOutKind};
use crate::graph::BipartiteGraph;
use crate::ingest::{sample_negatives, FeatureMatrix, SplitDataset};
use crate::model::{init_params, ModelDims, ModelParams};
use crate::rng::{self, Stream};

use super::adam::{adam_step, AdamState};
use super::backward::batch_loss_and_grads;
use super::checkpoint::Checkpoint;
use super::TrainConfig;

/// Cutoff that drives model selection.
const SELECTION_K: usize = 10;

/// One pass over freshly sampled training examples. `epoch` is 1-based and
/// keys both the negative draws and the batch order. Returns the mean loss
/// over all examples.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    params: &mut ModelParams,
    state: &mut AdamState,
    split: &SplitDataset,
    graph: &BipartiteGraph,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut examples = sample_negatives(split, cfg.neg_ratio, cfg.seed, epoch as u64)?;
    if examples.is_empty() {
        return Err(Error::Data("no training interactions".into()));
    }
    let mut r = rng::stream(cfg.seed, Stream::Shuffle, epoch as u64, 0);
    examples.shuffle(&mut r);
    let model_cfg = cfg.model_config();
    let mut total = 0.0;
    for batch in examples.chunks(cfg.batch_size) {
        let (loss, grads) = batch_loss_and_grads(params, &model_cfg, graph, image, text, batch)?;
        adam_step(params, &grads, state, cfg.lr)?;
        total += loss * batch.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Per-epoch training log entry.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub validation: Option<EvalReport>,
    pub improved: bool,
    pub elapsed_secs: f64,
}

impl EpochRecord {
    pub fn val_recall(&self) -> Option<f64> {
        self.validation.as_ref().map(|r| r.recall_at(SELECTION_K))
    }

    pub fn to_json(&self) -> Value {
        let v = self.validation.as_ref();
        json!({
            "epoch": self.epoch,
            "loss": self.loss,
            "val_recall@10": v.map(|r| r.recall_at(SELECTION_K)),
            "val_ndcg@10": v.map(|r| r.ndcg_at(SELECTION_K)),
            "improved": self.improved,
            "elapsed_secs": self.elapsed_secs,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Best-on-validation parameters, or the final ones when no
    /// validation set is available.
    pub best: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub fn fit(split: &SplitDataset, image: &FeatureMatrix, text: &FeatureMatrix, cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with_observer(split, image, text, cfg, |_| {})
}

/// Train from a seeded initialization, calling `observer` after each epoch.
pub fn fit_with_observer<F>(
    split: &SplitDataset,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<FitOutcome>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    let has_validation = !split.validation.is_empty();
    if cfg.early_stopping && !has_validation {
        return Err(Error::Config(
            "early stopping needs a validation set; enable validation or disable early stopping".into(),
        ));
    }
    let dims = ModelDims {
        n_users: split.n_users,
        n_items: split.n_items,
        d: cfg.d,
        d_img: image.dim(),
        d_txt: text.dim(),
        h: cfg.h,
    };
    let graph = BipartiteGraph::build(&split.train_pairs(), split.n_users, split.n_items)?;
    let mut params = init_params(dims, cfg.seed)?;
    let mut state = AdamState::new(&params);
    let model_cfg = cfg.model_config();
    let mut ks = cfg.eval_ks.clone();
    ks.push(SELECTION_K);
    ks.sort_unstable();
    ks.dedup();
    let protocol = EvalProtocol {
        n_negatives: cfg.eval_negatives,
        seed: cfg.seed,
        ks,
        target: HeldOutKind::Validation,
    };

    let echo = cfg.echo();
    let mut best = Checkpoint {
        params: params.clone(),
        epoch: 0,
        best_val_recall: f64::NEG_INFINITY,
        config_echo: echo.clone(),
    };
    let mut log = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;
    let started = Instant::now();
    for epoch in 1..=cfg.max_epochs {
        let loss = train_epoch(&mut params, &mut state, split, &graph, image, text, cfg, epoch)?;
        if !params.is_finite() {
            return Err(Error::Numeric(format!("parameters became non-finite in epoch {epoch}")));
        }
        let validation = if has_validation {
            Some(evaluate(&params, &model_cfg, &graph, split, image, text, &protocol)?)
        } else {
            None
        };
        let recall = validation.as_ref().map(|r| r.recall_at(SELECTION_K));
        let improved = match recall {
            Some(r) => r > best.best_val_recall,
            None => true,
        };
        if improved {
            best.params.clone_from(&params);
            best.epoch = epoch as u32;
            best.best_val_recall = recall.unwrap_or(0.0);
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            loss,
            validation,
            improved,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        observer(&record);
        log.push(record);
        if cfg.early_stopping && stale >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(FitOutcome {
        best,
        log,
        stopped_early,
    })
}
