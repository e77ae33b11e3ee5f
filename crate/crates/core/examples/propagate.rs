//! Two rounds of symmetric-normalized neighbor averaging on a toy
//! user-item graph.

use mmrec::graph::{propagate, BipartiteGraph};
use mmrec::linalg::DenseMatrix;

fn main() -> mmrec::Result<()> {
    // u0 likes i0 and i1, u1 likes i1 only; i2 is isolated.
    let graph = BipartiteGraph::build(&[(0, 0), (0, 1), (1, 1)], 2, 3)?;
    for v in 0..graph.n_nodes() {
        let (nbrs, coeff) = graph.neighbors_with_coeff(v);
        println!("node {v}: neighbors {nbrs:?}, weights {coeff:.3?}");
    }

    // One-hot layer 0 so each output row shows who contributes to it.
    let layers = propagate(&graph, DenseMatrix::identity(graph.n_nodes()), 2)?;
    for l in 1..=2 {
        println!("layer {l}:");
        for v in 0..graph.n_nodes() {
            println!("  {v}: {:.3?}", layers.layer(l).row(v));
        }
    }
    Ok(())
}
