//! Clustered synthetic corpus with planted, learnable structure.
//!
//! Users and items are split into latent clusters. Each user draws most of
//! their items from their own cluster, favoring a small popular core,
//! so the corpus survives k-core filtering, and each item's features are its
//! cluster centroid plus Gaussian noise (or pure noise for a modality
//! marked as noisy).

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use super::features::FeatureMatrix;
use super::interactions::{Interaction, RawInteractions};
use super::split::IdMaps;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{self, Stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub per_user: usize,
    pub n_clusters: usize,
    pub d_img: usize,
    pub d_txt: usize,
    /// Probability that a draw comes from the user's own cluster.
    pub in_cluster_prob: f64,
    /// Number of popular items per cluster; in-cluster draws favor them.
    pub core_size: usize,
    /// Draw weight of a non-core cluster item relative to a core item.
    pub tail_weight: f64,
    /// Standard deviation of per-item feature noise around the centroid.
    pub feature_noise: f64,
    /// A modality whose features carry no cluster signal at all.
    pub noisy_modality: Option<Modality>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 50,
            n_items: 100,
            per_user: 8,
            n_clusters: 5,
            d_img: 64,
            d_txt: 32,
            in_cluster_prob: 0.95,
            core_size: 6,
            tail_weight: 0.005,
            feature_noise: 0.5,
            noisy_modality: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Interactions without timestamps, `per_user` per user.
    pub interactions: RawInteractions,
    /// Raw (unnormalized) image features, one row per item token in order.
    pub image: FeatureMatrix,
    pub text: FeatureMatrix,
    pub item_tokens: Vec<String>,
    /// Latent cluster of every user and item.
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
}

impl SynthCorpus {
    /// Image and text rows reordered to match the encoded item indices of
    /// `ids`, optionally L2-normalized.
    pub fn aligned_features(&self, ids: &IdMaps, normalize: bool) -> Result<(FeatureMatrix, FeatureMatrix)> {
        let row_of: HashMap<&str, usize> = self
            .item_tokens
            .iter()
            .enumerate()
            .map(|(r, t)| (t.as_str(), r))
            .collect();
        let order = ids
            .item_tokens()
            .iter()
            .map(|t| {
                row_of
                    .get(t.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("item {t:?} is not part of the synthetic corpus")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut image = self.image.select_rows(&order);
        let mut text = self.text.select_rows(&order);
        if normalize {
            image.normalize_rows();
            text.normalize_rows();
        }
        Ok((image, text))
    }
}

pub fn user_token(u: usize) -> String {
    format!("u{u:05}")
}

pub fn item_token(i: usize) -> String {
    format!("i{i:05}")
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.per_user > cfg.n_items {
        return Err(Error::Config(format!(
            "{} interactions per user exceeds {} items",
            cfg.per_user, cfg.n_items
        )));
    }
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_clusters == 0 || cfg.d_img == 0 || cfg.d_txt == 0 {
        return Err(Error::Config("synthetic corpus sizes must be positive".into()));
    }
    if cfg.tail_weight.is_nan() || cfg.tail_weight <= 0.0 {
        return Err(Error::Config("tail weight must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.in_cluster_prob) {
        return Err(Error::Config("in-cluster probability must lie in [0, 1]".into()));
    }
    let n_clusters = cfg.n_clusters.min(cfg.n_items);
    // Contiguous item blocks; users assigned round-robin.
    let item_cluster: Vec<usize> = (0..cfg.n_items).map(|i| i * n_clusters / cfg.n_items).collect();
    let user_cluster: Vec<usize> = (0..cfg.n_users).map(|u| u % n_clusters).collect();
    let members: Vec<Vec<usize>> = (0..n_clusters)
        .map(|c| (0..cfg.n_items).filter(|&i| item_cluster[i] == c).collect())
        .collect();
    let samplers: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| {
            let w: Vec<f64> = (0..m.len())
                .map(|rank| if rank < cfg.core_size { 1.0 } else { cfg.tail_weight })
                .collect();
            WeightedIndex::new(w).expect("clusters are non-empty")
        })
        .collect();

    let mut interactions = Vec::with_capacity(cfg.n_users * cfg.per_user);
    for (u, &c) in user_cluster.iter().enumerate() {
        let mut r = rng::stream(cfg.seed, Stream::Synth, 1, u as u64);
        let mut chosen: HashSet<usize> = HashSet::with_capacity(cfg.per_user);
        let mut picks = Vec::with_capacity(cfg.per_user);
        while picks.len() < cfg.per_user {
            let cluster_full = members[c].iter().all(|i| chosen.contains(i));
            let item = if !cluster_full && r.random_bool(cfg.in_cluster_prob) {
                members[c][samplers[c].sample(&mut r)]
            } else {
                r.random_range(0..cfg.n_items)
            };
            if chosen.insert(item) {
                picks.push(item);
            }
        }
        interactions.extend(
            picks
                .into_iter()
                .map(|i| Interaction::new(user_token(u), item_token(i), None)),
        );
    }

    let image = modality_features(cfg, &item_cluster, n_clusters, cfg.d_img, Modality::Image);
    let text = modality_features(cfg, &item_cluster, n_clusters, cfg.d_txt, Modality::Text);
    Ok(SynthCorpus {
        interactions,
        image,
        text,
        item_tokens: (0..cfg.n_items).map(item_token).collect(),
        user_cluster,
        item_cluster,
    })
}

fn normal(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

fn modality_features(
    cfg: &SynthConfig,
    item_cluster: &[usize],
    n_clusters: usize,
    dim: usize,
    modality: Modality,
) -> FeatureMatrix {
    let tag = match modality {
        Modality::Image => 2,
        Modality::Text => 3,
    };
    let mut r = rng::stream(cfg.seed, Stream::Synth, tag, 0);
    let mut m = DenseMatrix::zeros(item_cluster.len(), dim);
    if cfg.noisy_modality == Some(modality) {
        m.as_mut_slice().iter_mut().for_each(|v| *v = normal(&mut r));
    } else {
        let centroids: Vec<Vec<f64>> = (0..n_clusters)
            .map(|_| (0..dim).map(|_| normal(&mut r)).collect())
            .collect();
        for (i, &c) in item_cluster.iter().enumerate() {
            for (k, v) in m.row_mut(i).iter_mut().enumerate() {
                *v = centroids[c][k] + cfg.feature_noise * normal(&mut r);
            }
        }
    }
    FeatureMatrix::new(m).expect("gaussian draws are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{canonicalize, k_core_filter};

    #[test]
    fn count_before_dedup() {
        let c = synth_generate(&SynthConfig {
            n_users: 10,
            n_items: 20,
            per_user: 6,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(c.interactions.len(), 60);
        assert_eq!(c.image.n_items(), 20);
        assert_eq!(c.text.dim(), 32);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SynthConfig {
            seed: 42,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.image, b.image);
        assert_eq!(a.text, b.text);
        let c = synth_generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.interactions, c.interactions);
    }

    #[test]
    fn rejects_more_interactions_than_items() {
        let cfg = SynthConfig {
            per_user: 200,
            n_items: 100,
            ..SynthConfig::default()
        };
        assert!(matches!(synth_generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn survives_five_core() {
        for (per_user, seed) in (0..10).flat_map(|s| [(6, s), (8, s), (10, s)]) {
            let cfg = SynthConfig {
                per_user,
                seed,
                ..SynthConfig::default()
            };
            let c = synth_generate(&cfg).unwrap();
            let recs = k_core_filter(canonicalize(c.interactions, seed), 5)
                .unwrap()
                .interactions;
            let users: HashSet<&str> = recs.iter().map(|r| r.user.as_str()).collect();
            assert!(
                users.len() * 5 >= cfg.n_users * 4,
                "per_user {per_user}: {} of {} users survive",
                users.len(),
                cfg.n_users
            );
        }
    }

    #[test]
    fn noisy_modality_has_no_cluster_structure() {
        let cfg = SynthConfig {
            noisy_modality: Some(Modality::Text),
            ..SynthConfig::default()
        };
        let c = synth_generate(&cfg).unwrap();
        // Mean cosine similarity of same-cluster pairs: high for image,
        // near zero for the noise modality.
        let cos = |m: &FeatureMatrix, a: usize, b: usize| {
            let (x, y) = (m.row(a), m.row(b));
            let d: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
            d / (nx * ny)
        };
        let pairs: Vec<(usize, usize)> = (0..cfg.n_items)
            .flat_map(|a| (a + 1..cfg.n_items).map(move |b| (a, b)))
            .filter(|&(a, b)| c.item_cluster[a] == c.item_cluster[b])
            .collect();
        let img: f64 = pairs.iter().map(|&(a, b)| cos(&c.image, a, b)).sum::<f64>() / pairs.len() as f64;
        let txt: f64 = pairs.iter().map(|&(a, b)| cos(&c.text, a, b)).sum::<f64>() / pairs.len() as f64;
        assert!(img > 0.5, "{img}");
        assert!(txt.abs() < 0.1, "{txt}");
    }
}
