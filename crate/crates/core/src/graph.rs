//! User-item bipartite graph in CSR form and multi-layer light propagation.
//!
//! Node ids place users first: user `u` is node `u`, item `i` is node
//! `n_users + i`. Edges are stored in both directions and carry the
//! symmetric normalization `1/√(deg(v)·deg(u))`, computed once at build time.

use crate::error::{Error, Result};
use crate::linalg::{spmm_normalized, spmm_normalized_par, DenseMatrix};

/// Upper bound on propagation depth accepted by [`propagate`].
pub const MAX_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    n_users: usize,
    n_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degree: Vec<usize>,
    norm_coeff: Vec<f64>,
}

impl BipartiteGraph {
    /// Build from `(user, item)` training pairs. Pairs must be unique.
    pub fn build(pairs: &[(usize, usize)], n_users: usize, n_items: usize) -> Result<Self> {
        let n = n_users + n_items;
        let mut degree = vec![0usize; n];
        for &(u, i) in pairs {
            if u >= n_users || i >= n_items {
                return Err(Error::Shape(format!(
                    "interaction ({u}, {i}) outside {n_users} users x {n_items} items"
                )));
            }
            degree[u] += 1;
            degree[n_users + i] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(u, i) in pairs {
            let item_node = n_users + i;
            neighbors[cursor[u]] = item_node;
            cursor[u] += 1;
            neighbors[cursor[item_node]] = u;
            cursor[item_node] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        let mut norm_coeff = Vec::with_capacity(neighbors.len());
        for v in 0..n {
            for &u in &neighbors[offsets[v]..offsets[v + 1]] {
                norm_coeff.push(symmetric_coeff(degree[v], degree[u]));
            }
        }
        Ok(BipartiteGraph {
            n_users,
            n_items,
            offsets,
            neighbors,
            degree,
            norm_coeff,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.n_users + item
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degree[node]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn neighbors_with_coeff(&self, node: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[node]..self.offsets[node + 1];
        (&self.neighbors[range.clone()], &self.norm_coeff[range])
    }

    /// Normalization coefficient of edge `(a, b)`, if present.
    pub fn coeff(&self, a: usize, b: usize) -> Option<f64> {
        let (nbrs, coeffs) = self.neighbors_with_coeff(a);
        nbrs.binary_search(&b).ok().map(|k| coeffs[k])
    }
}

#[inline]
fn symmetric_coeff(dv: usize, du: usize) -> f64 {
    if dv == 0 || du == 0 {
        0.0
    } else {
        1.0 / ((dv as f64) * (du as f64)).sqrt()
    }
}

/// Node embeddings at every layer `0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEmbeddings {
    layers: Vec<DenseMatrix>,
}

impl LayerEmbeddings {
    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.layers[l]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn last(&self) -> &DenseMatrix {
        self.layers.last().expect("layer 0 always present")
    }

    pub fn into_layers(self) -> Vec<DenseMatrix> {
        self.layers
    }
}

fn check_depth(n_layers: usize) -> Result<()> {
    if n_layers > MAX_LAYERS {
        return Err(Error::Config(format!(
            "{n_layers} propagation layers requested, maximum is {MAX_LAYERS}"
        )));
    }
    Ok(())
}

/// Apply the normalized operator `n_layers` times, keeping every layer.
pub fn propagate(graph: &BipartiteGraph, layer0: DenseMatrix, n_layers: usize) -> Result<LayerEmbeddings> {
    propagate_with(graph, layer0, n_layers, false)
}

pub fn propagate_with(
    graph: &BipartiteGraph,
    layer0: DenseMatrix,
    n_layers: usize,
    parallel: bool,
) -> Result<LayerEmbeddings> {
    check_depth(n_layers)?;
    if layer0.rows() != graph.n_nodes() {
        return Err(Error::Shape(format!(
            "layer 0 has {} rows, graph has {} nodes",
            layer0.rows(),
            graph.n_nodes()
        )));
    }
    let mut layers = Vec::with_capacity(n_layers + 1);
    layers.push(layer0);
    for l in 0..n_layers {
        let next = if parallel {
            spmm_normalized_par(graph, &layers[l])?
        } else {
            spmm_normalized(graph, &layers[l])?
        };
        layers.push(next);
    }
    Ok(LayerEmbeddings { layers })
}

/// Pull a gradient on the last layer back to layer 0. The normalized
/// adjacency is symmetric, so this is the forward operator applied again.
pub fn propagate_adjoint(graph: &BipartiteGraph, grad_out: DenseMatrix, n_layers: usize) -> Result<DenseMatrix> {
    check_depth(n_layers)?;
    if grad_out.rows() != graph.n_nodes() {
        return Err(Error::Shape(format!(
            "gradient has {} rows, graph has {} nodes",
            grad_out.rows(),
            graph.n_nodes()
        )));
    }
    let mut g = grad_out;
    for _ in 0..n_layers {
        g = spmm_normalized(graph, &g)?;
    }
    Ok(g)
}
