use crate::error::{Error, Result};
use crate::graph::{propagate_adjoint, BipartiteGraph};
use crate::ingest::{FeatureMatrix, TrainingExample};
use crate::linalg::{axpy, DenseMatrix};
use crate::model::{forward, ForwardCache, FusionMode, ModelConfig, ModelParams};

use super::loss::bce_loss;

/// Loss gradients, one tensor per parameter with identical shapes.
pub type Gradients = ModelParams;

/// Exact gradients of a loss whose derivative with respect to each cached
/// score is `dl_dscore`.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    graph: &BipartiteGraph,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    dl_dscore: &[f64],
) -> Result<Gradients> {
    if dl_dscore.len() != cache.scores.len() || cache.slots.len() != cache.scores.len() {
        return Err(Error::Consistency(format!(
            "{} score gradients for a cache of {} pairs",
            dl_dscore.len(),
            cache.scores.len()
        )));
    }
    let dims = params.dims;
    let d = dims.d;
    let mut grads = params.zeros_like();

    // Score layer: s = q_u · z_i.
    let mut dq = vec![vec![0.0; d]; cache.users.len()];
    let mut dz = vec![vec![0.0; d]; cache.items.len()];
    for (&(su, si), &gs) in cache.slots.iter().zip(dl_dscore) {
        if gs == 0.0 {
            continue;
        }
        axpy(gs, &cache.items[si].1.z, &mut dq[su]);
        axpy(gs, &cache.users[su].query, &mut dz[si]);
    }

    // User side: optional policy MLP, then back through propagation.
    let last = cache.layers.last();
    let mut d_last = DenseMatrix::zeros(graph.n_nodes(), d);
    for (uf, dq_u) in cache.users.iter().zip(&dq) {
        let e_u = last.row(uf.user);
        let de = match &uf.policy {
            None => dq_u.clone(),
            Some(pc) => {
                grads.policy_w2.add_outer(1.0, dq_u, &pc.hidden);
                axpy(1.0, dq_u, &mut grads.policy_b2);
                let mut dh = params.policy_w2.matvec_transposed(dq_u)?.0;
                for (g, &pre) in dh.iter_mut().zip(pc.hidden_pre.iter()) {
                    if pre <= 0.0 {
                        *g = 0.0;
                    }
                }
                grads.policy_w1.add_outer(1.0, &dh, e_u);
                axpy(1.0, &dh, &mut grads.policy_b1);
                params.policy_w1.matvec_transposed(&dh)?.0
            }
        };
        axpy(1.0, &de, d_last.row_mut(uf.user));
    }
    let d_layer0 = propagate_adjoint(graph, d_last, cache.config.gcn_layers)?;
    grads
        .user_emb
        .as_mut_slice()
        .copy_from_slice(&d_layer0.as_slice()[..dims.n_users * d]);
    grads
        .item_emb
        .as_mut_slice()
        .copy_from_slice(&d_layer0.as_slice()[dims.n_users * d..]);

    // Item side: fusion, gate, then the two projections.
    for ((item, f), dz_i) in cache.items.iter().zip(&dz) {
        let mut dv_img = vec![0.0; d];
        let mut dv_txt = vec![0.0; d];
        for k in 0..d {
            dv_img[k] = f.g[k] * dz_i[k];
            dv_txt[k] = (1.0 - f.g[k]) * dz_i[k];
        }
        if cache.config.fusion == FusionMode::Gated {
            let dpre: Vec<f64> = (0..d)
                .map(|k| dz_i[k] * (f.v_img[k] - f.v_txt[k]) * f.g[k] * (1.0 - f.g[k]))
                .collect();
            let mut joint = Vec::with_capacity(2 * d);
            joint.extend_from_slice(&f.v_img);
            joint.extend_from_slice(&f.v_txt);
            grads.gate_w.add_outer(1.0, &dpre, &joint);
            axpy(1.0, &dpre, &mut grads.gate_b);
            let djoint = params.gate_w.matvec_transposed(&dpre)?;
            axpy(1.0, &djoint[..d], &mut dv_img);
            axpy(1.0, &djoint[d..], &mut dv_txt);
        }
        relu_mask(&mut dv_img, &f.pre_img);
        relu_mask(&mut dv_txt, &f.pre_txt);
        grads.img_w.add_outer(1.0, &dv_img, image.row(*item));
        axpy(1.0, &dv_img, &mut grads.img_b);
        grads.txt_w.add_outer(1.0, &dv_txt, text.row(*item));
        axpy(1.0, &dv_txt, &mut grads.txt_b);
    }
    Ok(grads)
}

fn relu_mask(grad: &mut [f64], pre: &[f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

fn split_examples(examples: &[TrainingExample]) -> (Vec<(usize, usize)>, Vec<u8>) {
    examples.iter().map(|e| ((e.user, e.item), e.label)).unzip()
}

/// Mean BCE of a batch under the current parameters.
pub fn batch_loss(
    params: &ModelParams,
    config: &ModelConfig,
    graph: &BipartiteGraph,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    examples: &[TrainingExample],
) -> Result<f64> {
    let (pairs, labels) = split_examples(examples);
    let cache = forward(params, config, graph, image, text, &pairs)?;
    Ok(bce_loss(&cache.scores, &labels)?.0)
}

/// Mean BCE of a batch and its gradient with respect to every parameter.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    config: &ModelConfig,
    graph: &BipartiteGraph,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    examples: &[TrainingExample],
) -> Result<(f64, Gradients)> {
    let (pairs, labels) = split_examples(examples);
    let cache = forward(params, config, graph, image, text, &pairs)?;
    let (loss, dl) = bce_loss(&cache.scores, &labels)?;
    let grads = backward(params, &cache, graph, image, text, &dl)?;
    Ok((loss, grads))
}
