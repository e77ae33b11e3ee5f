//! Compare the hand-derived gradients with central finite differences on a
//! tiny random model, tensor by tensor.

use mmrec::graph::BipartiteGraph;
use mmrec::ingest::{FeatureMatrix, TrainingExample};
use mmrec::linalg::{finite_diff_check, DenseMatrix, GradCheckOptions};
use mmrec::model::{init_params, ModelConfig, ModelDims, ScoringMode};
use mmrec::train::{batch_loss, batch_loss_and_grads};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mmrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n_users, n_items) = (4, 6);
    let dims = ModelDims {
        n_users,
        n_items,
        d: 4,
        d_img: 5,
        d_txt: 3,
        h: 6,
    };
    let params = init_params(dims, 1)?;
    let graph = BipartiteGraph::build(
        &[(0, 0), (0, 2), (1, 1), (2, 2), (2, 3), (3, 4), (3, 5)],
        n_users,
        n_items,
    )?;
    let mut feats = |w: usize| {
        let data = (0..n_items * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::from_vec(n_items, w, data).and_then(FeatureMatrix::new)
    };
    let (image, text) = (feats(5)?, feats(3)?);
    let batch: Vec<TrainingExample> = [(0, 0, 1), (0, 4, 0), (1, 1, 1), (2, 5, 0), (3, 4, 1), (3, 0, 0)]
        .into_iter()
        .map(|(user, item, label)| TrainingExample { user, item, label })
        .collect();

    for scoring in [ScoringMode::DotProduct, ScoringMode::PolicyTransform] {
        let config = ModelConfig {
            scoring,
            ..ModelConfig::default()
        };
        let (loss, grads) = batch_loss_and_grads(&params, &config, &graph, &image, &text, &batch)?;
        let report = finite_diff_check(
            |p| batch_loss(p, &config, &graph, &image, &text, &batch),
            &params,
            &grads,
            GradCheckOptions::default(),
        )?;
        println!("{} scoring, loss {loss:.6}:", scoring.as_str());
        for t in &report.tensors {
            println!(
                "  {:<22} {:>4} entries  max rel err {:.1e}  max |grad| {:.1e}",
                t.name, t.checked, t.max_rel_error, t.max_abs_grad
            );
        }
    }
    Ok(())
}
