//! Trainable parameters and the forward pass.
//!
//! Item representation: each modality is projected with an affine map and
//! ReLU, then a per-dimension sigmoid gate mixes the two (image first in
//! the gate input). User representation: ID embeddings for users and items
//! are stacked and propagated through the graph; the user rows of the last
//! layer are the user vectors. A pair's score is the dot product of the
//! user vector (optionally passed through a two-layer policy MLP) with the
//! fused item vector.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{propagate_with, BipartiteGraph, LayerEmbeddings};
use crate::ingest::FeatureMatrix;
use crate::linalg::{affine, dot, relu, sigmoid, DenseMatrix, DenseVector, ParamSet};
use crate::rng::{self, Stream};

/// Standard deviation of the ID embedding initializer.
pub const EMBEDDING_INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_users: usize,
    pub n_items: usize,
    /// Shared embedding size.
    pub d: usize,
    pub d_img: usize,
    pub d_txt: usize,
    /// Policy MLP hidden width.
    pub h: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let ModelDims {
            n_users,
            n_items,
            d,
            d_img,
            d_txt,
            h,
        } = *self;
        if [n_users, n_items, d, d_img, d_txt, h].contains(&0) {
            return Err(Error::Config(format!(
                "all model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoringMode {
    #[default]
    DotProduct,
    PolicyTransform,
}

impl ScoringMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoringMode::DotProduct => "dot",
            ScoringMode::PolicyTransform => "policy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ScoringMode::DotProduct),
            "policy" => Ok(ScoringMode::PolicyTransform),
            other => Err(Error::Config(format!("unknown scoring mode {other:?} (dot|policy)"))),
        }
    }
}

/// How the two modality vectors are mixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FusionMode {
    /// Learned per-dimension sigmoid gate.
    #[default]
    Gated,
    /// Constant gate value for every item and dimension (ablation).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub gcn_layers: usize,
    pub scoring: ScoringMode,
    pub fusion: FusionMode,
    /// Allow row-parallel propagation kernels.
    pub parallel: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gcn_layers: 2,
            scoring: ScoringMode::DotProduct,
            fusion: FusionMode::Gated,
            parallel: false,
        }
    }
}

/// Every trainable tensor. Also used, with identical shapes, for gradients
/// and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub user_emb: DenseMatrix,
    pub item_emb: DenseMatrix,
    pub img_w: DenseMatrix,
    pub img_b: DenseVector,
    pub txt_w: DenseMatrix,
    pub txt_b: DenseVector,
    pub gate_w: DenseMatrix,
    pub gate_b: DenseVector,
    pub policy_w1: DenseMatrix,
    pub policy_b1: DenseVector,
    pub policy_w2: DenseMatrix,
    pub policy_b2: DenseVector,
}

/// Tensor names in storage order.
pub const TENSOR_NAMES: [&str; 12] = [
    "user_embedding",
    "item_embedding",
    "image_proj.weight",
    "image_proj.bias",
    "text_proj.weight",
    "text_proj.bias",
    "gate.weight",
    "gate.bias",
    "policy.hidden.weight",
    "policy.hidden.bias",
    "policy.out.weight",
    "policy.out.bias",
];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            n_users,
            n_items,
            d,
            d_img,
            d_txt,
            h,
        } = dims;
        ModelParams {
            dims,
            user_emb: DenseMatrix::zeros(n_users, d),
            item_emb: DenseMatrix::zeros(n_items, d),
            img_w: DenseMatrix::zeros(d, d_img),
            img_b: DenseVector::zeros(d),
            txt_w: DenseMatrix::zeros(d, d_txt),
            txt_b: DenseVector::zeros(d),
            gate_w: DenseMatrix::zeros(d, 2 * d),
            gate_b: DenseVector::zeros(d),
            policy_w1: DenseMatrix::zeros(h, d),
            policy_b1: DenseVector::zeros(h),
            policy_w2: DenseMatrix::zeros(d, h),
            policy_b2: DenseVector::zeros(d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Shape of tensor `k` as stored: `[rows, cols]` or `[len]`.
    pub fn tensor_shape(&self, k: usize) -> Vec<usize> {
        let m = |x: &DenseMatrix| vec![x.rows(), x.cols()];
        let v = |x: &DenseVector| vec![x.len()];
        match k {
            0 => m(&self.user_emb),
            1 => m(&self.item_emb),
            2 => m(&self.img_w),
            3 => v(&self.img_b),
            4 => m(&self.txt_w),
            5 => v(&self.txt_b),
            6 => m(&self.gate_w),
            7 => v(&self.gate_b),
            8 => m(&self.policy_w1),
            9 => v(&self.policy_b1),
            10 => m(&self.policy_w2),
            11 => v(&self.policy_b2),
            _ => panic!("tensor index {k} out of range"),
        }
    }

    pub fn is_finite(&self) -> bool {
        (0..TENSOR_NAMES.len()).all(|k| self.tensor(k).1.iter().all(|v| v.is_finite()))
    }
}

impl ParamSet for ModelParams {
    fn tensor_count(&self) -> usize {
        TENSOR_NAMES.len()
    }

    fn tensor(&self, k: usize) -> (&str, &[f64]) {
        let data: &[f64] = match k {
            0 => self.user_emb.as_slice(),
            1 => self.item_emb.as_slice(),
            2 => self.img_w.as_slice(),
            3 => &self.img_b,
            4 => self.txt_w.as_slice(),
            5 => &self.txt_b,
            6 => self.gate_w.as_slice(),
            7 => &self.gate_b,
            8 => self.policy_w1.as_slice(),
            9 => &self.policy_b1,
            10 => self.policy_w2.as_slice(),
            11 => &self.policy_b2,
            _ => panic!("tensor index {k} out of range"),
        };
        (TENSOR_NAMES[k], data)
    }

    fn tensor_mut(&mut self, k: usize) -> &mut [f64] {
        match k {
            0 => self.user_emb.as_mut_slice(),
            1 => self.item_emb.as_mut_slice(),
            2 => self.img_w.as_mut_slice(),
            3 => &mut self.img_b,
            4 => self.txt_w.as_mut_slice(),
            5 => &mut self.txt_b,
            6 => self.gate_w.as_mut_slice(),
            7 => &mut self.gate_b,
            8 => self.policy_w1.as_mut_slice(),
            9 => &mut self.policy_b1,
            10 => self.policy_w2.as_mut_slice(),
            11 => &mut self.policy_b2,
            _ => panic!("tensor index {k} out of range"),
        }
    }
}

/// Weights ~ U(−b, b) with `b = √(6/(fan_in+fan_out))`, biases zero,
/// ID embeddings ~ N(0, 0.1²). Each tensor draws from its own stream.
pub fn init_params(dims: ModelDims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut p = ModelParams::zeros(dims);
    let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
    for (k, m) in [(0u64, &mut p.user_emb), (1, &mut p.item_emb)] {
        let mut r = rng::stream(seed, Stream::Init, k, 0);
        m.as_mut_slice().iter_mut().for_each(|v| *v = normal.sample(&mut r));
    }
    for (k, m) in [
        (2u64, &mut p.img_w),
        (4, &mut p.txt_w),
        (6, &mut p.gate_w),
        (8, &mut p.policy_w1),
        (10, &mut p.policy_w2),
    ] {
        let bound = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
        let mut r = rng::stream(seed, Stream::Init, k, 0);
        m.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = r.random_range(-bound..bound));
    }
    Ok(p)
}

/// Projected modality vectors `ReLU(W·x + b)` for one item.
pub fn project_modalities(params: &ModelParams, x_img: &[f64], x_txt: &[f64]) -> Result<(DenseVector, DenseVector)> {
    let pre_img = affine(&params.img_w, x_img, &params.img_b)?;
    let pre_txt = affine(&params.txt_w, x_txt, &params.txt_b)?;
    Ok((relu(&pre_img), relu(&pre_txt)))
}

/// Gate `σ(W_g [v_img; v_txt] + b_g)` and fused `g ⊙ v_img + (1−g) ⊙ v_txt`.
pub fn gated_fusion(params: &ModelParams, v_img: &[f64], v_txt: &[f64]) -> Result<(DenseVector, DenseVector)> {
    let d = params.dims.d;
    if v_img.len() != d || v_txt.len() != d {
        return Err(Error::Shape(format!(
            "fusion inputs of length {} and {}, expected {d}",
            v_img.len(),
            v_txt.len()
        )));
    }
    let mut joint = Vec::with_capacity(2 * d);
    joint.extend_from_slice(v_img);
    joint.extend_from_slice(v_txt);
    let pre = affine(&params.gate_w, &joint, &params.gate_b)?;
    let g: DenseVector = pre.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>().into();
    let z = fuse(&g, v_img, v_txt);
    Ok((g, z))
}

/// `g ⊙ a + (1−g) ⊙ b`
pub fn fuse(g: &[f64], a: &[f64], b: &[f64]) -> DenseVector {
    g.iter()
        .zip(a.iter().zip(b))
        .map(|(&gk, (&ak, &bk))| gk * ak + (1.0 - gk) * bk)
        .collect::<Vec<_>>()
        .into()
}

/// Intermediate values of one item's fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemFusion {
    pub pre_img: DenseVector,
    pub pre_txt: DenseVector,
    pub v_img: DenseVector,
    pub v_txt: DenseVector,
    pub g: DenseVector,
    pub z: DenseVector,
}

fn check_features(params: &ModelParams, image: &FeatureMatrix, text: &FeatureMatrix) -> Result<()> {
    let dims = params.dims;
    if image.dim() != dims.d_img || text.dim() != dims.d_txt {
        return Err(Error::Shape(format!(
            "model expects image/text feature widths {}/{}, data has {}/{}",
            dims.d_img,
            dims.d_txt,
            image.dim(),
            text.dim()
        )));
    }
    if image.n_items() != dims.n_items || text.n_items() != dims.n_items {
        return Err(Error::Shape(format!(
            "model has {} items, image/text features have {}/{} rows",
            dims.n_items,
            image.n_items(),
            text.n_items()
        )));
    }
    Ok(())
}

pub fn fuse_item(
    params: &ModelParams,
    fusion: FusionMode,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    item: usize,
) -> Result<ItemFusion> {
    let pre_img = affine(&params.img_w, image.row(item), &params.img_b)?;
    let pre_txt = affine(&params.txt_w, text.row(item), &params.txt_b)?;
    let v_img = relu(&pre_img);
    let v_txt = relu(&pre_txt);
    let (g, z) = match fusion {
        FusionMode::Gated => gated_fusion(params, &v_img, &v_txt)?,
        FusionMode::Fixed(c) => {
            let g = DenseVector(vec![c; params.dims.d]);
            let z = fuse(&g, &v_img, &v_txt);
            (g, z)
        }
    };
    Ok(ItemFusion {
        pre_img,
        pre_txt,
        v_img,
        v_txt,
        g,
        z,
    })
}

/// Fused vectors for every item, one row each.
pub fn item_embeddings(
    params: &ModelParams,
    fusion: FusionMode,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
) -> Result<DenseMatrix> {
    check_features(params, image, text)?;
    let d = params.dims.d;
    let mut out = DenseMatrix::zeros(params.dims.n_items, d);
    for i in 0..params.dims.n_items {
        out.row_mut(i)
            .copy_from_slice(&fuse_item(params, fusion, image, text, i)?.z);
    }
    Ok(out)
}

/// Propagate stacked ID embeddings and return the user rows of the last
/// layer, plus every layer.
pub fn compute_user_embeddings(
    params: &ModelParams,
    graph: &BipartiteGraph,
    n_layers: usize,
    parallel: bool,
) -> Result<(DenseMatrix, LayerEmbeddings)> {
    if graph.n_users() != params.dims.n_users || graph.n_items() != params.dims.n_items {
        return Err(Error::Shape(format!(
            "graph is {}x{}, model is {}x{}",
            graph.n_users(),
            graph.n_items(),
            params.dims.n_users,
            params.dims.n_items
        )));
    }
    let layer0 = DenseMatrix::vstack(&params.user_emb, &params.item_emb)?;
    let layers = propagate_with(graph, layer0, n_layers, parallel)?;
    let users = layers.last().slice_rows(0, params.dims.n_users);
    Ok((users, layers))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCache {
    pub hidden_pre: DenseVector,
    pub hidden: DenseVector,
    pub out: DenseVector,
}

/// `W_2 · ReLU(W_1 e + b_1) + b_2`.
pub fn policy_transform(params: &ModelParams, e_u: &[f64]) -> Result<DenseVector> {
    Ok(policy_forward(params, e_u)?.out)
}

pub fn policy_forward(params: &ModelParams, e_u: &[f64]) -> Result<PolicyCache> {
    let hidden_pre = affine(&params.policy_w1, e_u, &params.policy_b1)?;
    let hidden = relu(&hidden_pre);
    let out = affine(&params.policy_w2, &hidden, &params.policy_b2)?;
    Ok(PolicyCache {
        hidden_pre,
        hidden,
        out,
    })
}

/// The vector each user is scored with under `mode`.
pub fn user_query(params: &ModelParams, mode: ScoringMode, e_u: &[f64]) -> Result<DenseVector> {
    match mode {
        ScoringMode::DotProduct => Ok(DenseVector(e_u.to_vec())),
        ScoringMode::PolicyTransform => policy_transform(params, e_u),
    }
}

/// Score `(user, item)` pairs from precomputed user and item embeddings.
pub fn score_pairs(
    params: &ModelParams,
    mode: ScoringMode,
    e_users: &DenseMatrix,
    z_items: &DenseMatrix,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut queries: BTreeMap<usize, DenseVector> = BTreeMap::new();
    pairs
        .iter()
        .map(|&(u, i)| {
            if u >= e_users.rows() || i >= z_items.rows() {
                return Err(Error::Shape(format!(
                    "pair ({u}, {i}) outside {} users x {} items",
                    e_users.rows(),
                    z_items.rows()
                )));
            }
            let q = match queries.entry(u) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(user_query(params, mode, e_users.row(u))?),
            };
            Ok(dot(q, z_items.row(i)))
        })
        .collect()
}

/// Per-user values kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct UserForward {
    pub user: usize,
    pub policy: Option<PolicyCache>,
    pub query: DenseVector,
}

/// Everything the backward pass needs for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub config: ModelConfig,
    pub layers: LayerEmbeddings,
    pub users: Vec<UserForward>,
    pub items: Vec<(usize, ItemFusion)>,
    pub pairs: Vec<(usize, usize)>,
    /// Index into `users` / `items` for each pair.
    pub slots: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
}

/// Full forward pass for a batch of `(user, item)` pairs.
pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    graph: &BipartiteGraph,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    pairs: &[(usize, usize)],
) -> Result<ForwardCache> {
    check_features(params, image, text)?;
    let (e_users, layers) = compute_user_embeddings(params, graph, config.gcn_layers, config.parallel)?;

    let mut user_slot: BTreeMap<usize, usize> = BTreeMap::new();
    let mut item_slot: BTreeMap<usize, usize> = BTreeMap::new();
    for &(u, i) in pairs {
        if u >= params.dims.n_users || i >= params.dims.n_items {
            return Err(Error::Shape(format!(
                "pair ({u}, {i}) outside {} users x {} items",
                params.dims.n_users, params.dims.n_items
            )));
        }
        let nu = user_slot.len();
        user_slot.entry(u).or_insert(nu);
        let ni = item_slot.len();
        item_slot.entry(i).or_insert(ni);
    }

    let mut users: Vec<Option<UserForward>> = vec![None; user_slot.len()];
    for (&u, &s) in &user_slot {
        let e = e_users.row(u);
        let (policy, query) = match config.scoring {
            ScoringMode::DotProduct => (None, DenseVector(e.to_vec())),
            ScoringMode::PolicyTransform => {
                let c = policy_forward(params, e)?;
                let q = c.out.clone();
                (Some(c), q)
            }
        };
        users[s] = Some(UserForward { user: u, policy, query });
    }
    let mut items: Vec<Option<(usize, ItemFusion)>> = vec![None; item_slot.len()];
    for (&i, &s) in &item_slot {
        items[s] = Some((i, fuse_item(params, config.fusion, image, text, i)?));
    }
    let users: Vec<UserForward> = users.into_iter().map(Option::unwrap).collect();
    let items: Vec<(usize, ItemFusion)> = items.into_iter().map(Option::unwrap).collect();

    let slots: Vec<(usize, usize)> = pairs.iter().map(|(u, i)| (user_slot[u], item_slot[i])).collect();
    let scores = slots
        .iter()
        .map(|&(su, si)| dot(&users[su].query, &items[si].1.z))
        .collect();
    Ok(ForwardCache {
        config: *config,
        layers,
        users,
        items,
        pairs: pairs.to_vec(),
        slots,
        scores,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // oracles index like the math they transcribe
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dims() -> ModelDims {
        ModelDims {
            n_users: 3,
            n_items: 4,
            d: 4,
            d_img: 5,
            d_txt: 3,
            h: 6,
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_params(dims(), 5).unwrap();
        let b = init_params(dims(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(dims(), 6).unwrap());
        for bias in [&a.img_b, &a.txt_b, &a.gate_b, &a.policy_b1, &a.policy_b2] {
            assert!(bias.iter().all(|&v| v == 0.0));
        }
        let bound = (6.0f64 / (4 + 8) as f64).sqrt();
        assert!(a.gate_w.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(matches!(
            init_params(ModelDims { d: 0, ..dims() }, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn paper_scale_projection_shape() {
        let p = init_params(
            ModelDims {
                n_users: 1,
                n_items: 1,
                d: 64,
                d_img: 4096,
                d_txt: 384,
                h: 128,
            },
            0,
        )
        .unwrap();
        assert_eq!(p.img_w.shape(), (64, 4096));
        assert_eq!(p.txt_w.shape(), (64, 384));
        assert_eq!(p.gate_w.shape(), (64, 128));
        assert_eq!(p.policy_w1.shape(), (128, 64));
    }

    #[test]
    fn projection_examples() {
        let mut p = ModelParams::zeros(dims());
        let (vi, vt) = project_modalities(&p, &[1.0; 5], &[1.0; 3]).unwrap();
        assert!(vi.iter().chain(vt.iter()).all(|&v| v == 0.0));
        p.img_b = DenseVector(vec![-10.0; 4]);
        let (vi, _) = project_modalities(&p, &[1.0; 5], &[1.0; 3]).unwrap();
        assert!(vi.iter().all(|&v| v == 0.0));
        assert!(matches!(
            project_modalities(&p, &[1.0; 4], &[1.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn projection_matches_composition() {
        let p = init_params(dims(), 9).unwrap();
        let x = [0.3, -0.2, 0.9, 0.1, -0.5];
        let (vi, _) = project_modalities(&p, &x, &[0.0; 3]).unwrap();
        for r in 0..4 {
            let mut acc = p.img_b[r];
            for c in 0..5 {
                acc += p.img_w.get(r, c) * x[c];
            }
            assert!((vi[r] - acc.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn neutral_and_saturated_gates() {
        let mut p = ModelParams::zeros(dims());
        let a = [1.0, 2.0, 0.0, 4.0];
        let b = [3.0, 0.0, 1.0, 2.0];
        let (g, z) = gated_fusion(&p, &a, &b).unwrap();
        assert!(g.iter().all(|&v| v == 0.5));
        for k in 0..4 {
            assert_eq!(z[k], (a[k] + b[k]) / 2.0);
        }
        p.gate_b = DenseVector(vec![1000.0; 4]);
        let (_, z) = gated_fusion(&p, &a, &b).unwrap();
        for k in 0..4 {
            assert!((z[k] - a[k]).abs() < 1e-12);
        }
        let p = init_params(dims(), 1).unwrap();
        let (_, z) = gated_fusion(&p, &a, &a).unwrap();
        for k in 0..4 {
            assert!((z[k] - a[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn user_embeddings_examples() {
        let d1 = ModelDims {
            n_users: 1,
            n_items: 1,
            ..dims()
        };
        let p = init_params(d1, 3).unwrap();
        let empty = BipartiteGraph::build(&[], 1, 1).unwrap();
        let (u, _) = compute_user_embeddings(&p, &empty, 2, false).unwrap();
        assert!(u.as_slice().iter().all(|&v| v == 0.0));
        let g = BipartiteGraph::build(&[(0, 0)], 1, 1).unwrap();
        let (u, _) = compute_user_embeddings(&p, &g, 2, false).unwrap();
        assert_eq!(u.row(0), p.user_emb.row(0));
    }

    #[test]
    fn user_embeddings_three_edge_graph() {
        // u0-i0, u0-i1, u1-i1. Dense (D^-1/2 A D^-1/2)^2 user block:
        // row u0 = [1/2 + 1/4, 1/(2√2)], row u1 = [1/(2√2), 1/2].
        let d = ModelDims {
            n_users: 2,
            n_items: 2,
            ..dims()
        };
        let p = init_params(d, 4).unwrap();
        let g = BipartiteGraph::build(&[(0, 0), (0, 1), (1, 1)], 2, 2).unwrap();
        let (u, _) = compute_user_embeddings(&p, &g, 2, false).unwrap();
        let c = 1.0 / (2.0 * 2f64.sqrt());
        for k in 0..4 {
            let e0 = 0.75 * p.user_emb.get(0, k) + c * p.user_emb.get(1, k);
            let e1 = c * p.user_emb.get(0, k) + 0.5 * p.user_emb.get(1, k);
            assert!((u.get(0, k) - e0).abs() < 1e-12);
            assert!((u.get(1, k) - e1).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_examples() {
        let mut p = ModelParams::zeros(dims());
        p.policy_b2 = DenseVector(vec![0.5, -1.0, 2.0, 0.0]);
        assert_eq!(
            &*policy_transform(&p, &[3.0, 1.0, -2.0, 7.0]).unwrap(),
            &[0.5, -1.0, 2.0, 0.0]
        );

        // W_1 embeds into the first d hidden units, W_2 reads them back.
        let mut p = ModelParams::zeros(dims());
        for k in 0..4 {
            p.policy_w1.set(k, k, 1.0);
            p.policy_w2.set(k, k, 1.0);
        }
        let e = [0.2, 0.0, 3.0, 1.5];
        assert_eq!(&*policy_transform(&p, &e).unwrap(), &e);

        let p = init_params(dims(), 8).unwrap();
        let e = [0.4, -0.3, 0.8, -1.1];
        let hidden: Vec<f64> = (0..6)
            .map(|r| (0..4).map(|c| p.policy_w1.get(r, c) * e[c]).sum::<f64>().max(0.0))
            .collect();
        let out = policy_transform(&p, &e).unwrap();
        for r in 0..4 {
            let expect: f64 = (0..6).map(|c| p.policy_w2.get(r, c) * hidden[c]).sum();
            assert!((out[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn scoring_examples() {
        let p = ModelParams::zeros(dims());
        let mut e = DenseMatrix::zeros(2, 4);
        let mut z = DenseMatrix::zeros(2, 4);
        e.set(0, 2, 1.0);
        z.set(0, 2, 1.0);
        e.set(1, 0, 1.0);
        z.set(1, 1, 1.0);
        let s = score_pairs(&p, ScoringMode::DotProduct, &e, &z, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        assert!(matches!(
            score_pairs(&p, ScoringMode::DotProduct, &e, &z, &[(2, 0)]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn batch_scores_match_scalar_loop() {
        let p = init_params(dims(), 2).unwrap();
        let mut r = rng::stream(0, Stream::Synth, 0, 0);
        let e = DenseMatrix::from_vec(3, 4, (0..12).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let z = DenseMatrix::from_vec(4, 4, (0..16).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let pairs = [(0, 1), (2, 3), (1, 0), (0, 1), (2, 2)];
        for mode in [ScoringMode::DotProduct, ScoringMode::PolicyTransform] {
            let s = score_pairs(&p, mode, &e, &z, &pairs).unwrap();
            for (k, &(u, i)) in pairs.iter().enumerate() {
                let q = match mode {
                    ScoringMode::DotProduct => e.row(u).to_vec(),
                    ScoringMode::PolicyTransform => policy_transform(&p, e.row(u)).unwrap().0,
                };
                let mut acc = 0.0;
                for c in 0..4 {
                    acc += q[c] * z.get(i, c);
                }
                assert!((s[k] - acc).abs() < 1e-12);
            }
        }
    }

    fn vec_d(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, d)
    }

    proptest! {
        #[test]
        fn fusion_invariants(a in vec_d(4), b in vec_d(4), seed in 0u64..1000) {
            let p = init_params(dims(), seed).unwrap();
            let (g, z) = gated_fusion(&p, &a, &b).unwrap();
            for k in 0..4 {
                prop_assert!(g[k] > 0.0 && g[k] < 1.0);
                prop_assert!(z[k] >= a[k].min(b[k]) - 1e-12 && z[k] <= a[k].max(b[k]) + 1e-12);
            }
            // swapping modalities with the complementary gate is the same fusion
            let gc: Vec<f64> = g.iter().map(|v| 1.0 - v).collect();
            let swapped = fuse(&gc, &b, &a);
            for k in 0..4 {
                prop_assert!((swapped[k] - z[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn dot_scoring_is_bilinear(
            e1 in vec_d(4), e2 in vec_d(4), z1 in vec_d(4), alpha in -2.0f64..2.0
        ) {
            let p = ModelParams::zeros(dims());
            let comb: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| alpha * a + b).collect();
            let e = DenseMatrix::from_rows(&[e1, e2, comb]).unwrap();
            let z = DenseMatrix::from_rows(&[z1]).unwrap();
            let s = score_pairs(&p, ScoringMode::DotProduct, &e, &z, &[(0, 0), (1, 0), (2, 0)]).unwrap();
            prop_assert!((s[2] - (alpha * s[0] + s[1])).abs() < 1e-10);
        }
    }
}
