//! Interaction and feature ingestion: canonicalization, k-core filtering,
//! label encoding, leave-one-out splitting, negative sampling and a
//! clustered synthetic corpus generator.

mod features;
mod interactions;
mod kcore;
mod negatives;
mod split;
mod synth;

pub use features::{
    feature_token_map_path, load_aligned_features, load_feature_matrix, read_mmf1, write_mmf1, FeatureMatrix,
    MMF1_MAGIC, MMF1_VERSION,
};
pub use interactions::{canonicalize, load_interactions, write_interactions, Interaction, RawInteractions};
pub use kcore::{k_core_filter, KCoreResult};
pub use negatives::{sample_negatives, TrainingExample};
pub use split::{encode_and_split, HeldOut, IdMaps, SplitDataset, TrainInteraction};
pub use synth::{item_token, synth_generate, user_token, Modality, SynthConfig, SynthCorpus};

use crate::error::Result;

/// Default minimum degree for user and item filtering.
pub const DEFAULT_K_CORE: usize = 5;

/// Settings for the full preprocessing chain
/// dedup → pseudo-timestamps → k-core → encode → split.
#[derive(Debug, Clone, Copy)]
pub struct PrepConfig {
    pub seed: u64,
    pub k_core: usize,
    pub with_validation: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            seed: 0,
            k_core: DEFAULT_K_CORE,
            with_validation: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: SplitDataset,
    pub ids: IdMaps,
    /// Records dropped by k-core filtering.
    pub filtered_out: usize,
}

pub fn prepare(raw: RawInteractions, cfg: &PrepConfig) -> Result<Prepared> {
    let canonical = canonicalize(raw, cfg.seed);
    let before = canonical.len();
    let filtered = k_core_filter(canonical, cfg.k_core)?;
    if filtered.empty {
        return Err(crate::error::Error::Data(format!(
            "{}-core filtering removed every interaction",
            cfg.k_core
        )));
    }
    let filtered_out = before - filtered.interactions.len();
    let (split, ids) = encode_and_split(&filtered.interactions, cfg.with_validation)?;
    Ok(Prepared {
        split,
        ids,
        filtered_out,
    })
}
