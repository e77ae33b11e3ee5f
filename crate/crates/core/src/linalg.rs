//! Dense and sparse numeric kernels used by every other module.
//!
//! Everything computes in `f64`. Storage formats narrow to `f32` only at the
//! file boundary.

use std::ops::{Deref, DerefMut};

use rand::seq::index;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::rng::{self, Stream};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {r} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the rows in `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> DenseMatrix {
        DenseMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Stack `top` over `bottom`.
    pub fn vstack(top: &DenseMatrix, bottom: &DenseMatrix) -> Result<DenseMatrix> {
        if top.cols != bottom.cols {
            return Err(Error::Shape(format!(
                "cannot stack {}-column matrix over {}-column matrix",
                top.cols, bottom.cols
            )));
        }
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Ok(DenseMatrix {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum of elementwise products.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    /// `out = self · x` (no bias).
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector> {
        let zeros = vec![0.0; self.rows];
        affine(self, x, &zeros)
    }

    /// `out = selfᵀ · y`.
    pub fn matvec_transposed(&self, y: &[f64]) -> Result<DenseVector> {
        if y.len() != self.rows {
            return Err(Error::Shape(format!(
                "transpose product of {}x{} matrix with length-{} vector",
                self.rows,
                self.cols,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            axpy(yr, self.row(r), &mut out);
        }
        Ok(DenseVector(out))
    }

    /// `self += alpha · a ⊗ b` (rank-one update).
    pub fn add_outer(&mut self, alpha: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let s = alpha * ar;
            if s == 0.0 {
                continue;
            }
            axpy(s, b, self.row_mut(r));
        }
    }
}

/// Owned vector of reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(pub Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `W·x + b`.
pub fn affine(w: &DenseMatrix, x: &[f64], b: &[f64]) -> Result<DenseVector> {
    if w.cols != x.len() || w.rows != b.len() {
        return Err(Error::Shape(format!(
            "affine: weight {}x{}, input length {}, bias length {}",
            w.rows,
            w.cols,
            x.len(),
            b.len()
        )));
    }
    let out = (0..w.rows).map(|r| dot(w.row(r), x) + b[r]).collect();
    Ok(DenseVector(out))
}

pub fn relu(x: &[f64]) -> DenseVector {
    DenseVector(x.iter().map(|&v| v.max(0.0)).collect())
}

/// Logistic function for a single value.
///
/// The result is clamped into the open interval (0, 1) so that saturated
/// inputs never produce an exact 0 or 1.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

pub fn sigmoid_stable(x: &[f64]) -> DenseVector {
    DenseVector(x.iter().map(|&v| sigmoid(v)).collect())
}

/// One step of symmetric-normalized neighbor aggregation:
/// `out[v] = Σ_{u ∈ N(v)} X[u] / √(|N(v)|·|N(u)|)`.
pub fn spmm_normalized(graph: &BipartiteGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = graph.n_nodes();
    if x.rows != n {
        return Err(Error::Shape(format!(
            "propagation input has {} rows, graph has {n} nodes",
            x.rows
        )));
    }
    let mut out = DenseMatrix::zeros(n, x.cols);
    for v in 0..n {
        let (nbrs, coeffs) = graph.neighbors_with_coeff(v);
        let dst = out.row_mut(v);
        for (&u, &c) in nbrs.iter().zip(coeffs) {
            axpy(c, x.row(u), dst);
        }
    }
    Ok(out)
}

/// Parallel variant of [`spmm_normalized`]; every output row is summed in
/// the same neighbor order, so results are identical to the serial kernel.
pub fn spmm_normalized_par(graph: &BipartiteGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    use rayon::prelude::*;
    let n = graph.n_nodes();
    if x.rows != n {
        return Err(Error::Shape(format!(
            "propagation input has {} rows, graph has {n} nodes",
            x.rows
        )));
    }
    let cols = x.cols;
    let mut out = DenseMatrix::zeros(n, cols);
    if cols == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(cols).enumerate().for_each(|(v, dst)| {
        let (nbrs, coeffs) = graph.neighbors_with_coeff(v);
        for (&u, &c) in nbrs.iter().zip(coeffs) {
            axpy(c, x.row(u), dst);
        }
    });
    Ok(out)
}

/// A collection of named flat parameter tensors.
pub trait ParamSet {
    fn tensor_count(&self) -> usize;
    fn tensor(&self, k: usize) -> (&str, &[f64]);
    fn tensor_mut(&mut self, k: usize) -> &mut [f64];
}

impl ParamSet for Vec<f64> {
    fn tensor_count(&self) -> usize {
        1
    }
    fn tensor(&self, _k: usize) -> (&str, &[f64]) {
        ("theta", self.as_slice())
    }
    fn tensor_mut(&mut self, _k: usize) -> &mut [f64] {
        self.as_mut_slice()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Entries whose relative error exceeds this count as failures.
    pub tol: f64,
    /// Denominator floor for the relative error, so that two near-zero
    /// gradients compare by absolute difference.
    pub abs_floor: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-6,
            max_entries_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    /// Largest analytic gradient magnitude seen; zero means the tensor had
    /// no gradient signal on this instance.
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compare analytic gradients against central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε` entry by entry.
pub fn finite_diff_check<P, F>(
    mut loss_fn: F,
    params: &P,
    analytic: &P,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    if opts.eps.is_nan() || opts.eps <= 0.0 {
        return Err(Error::Config(format!("eps must be positive, got {}", opts.eps)));
    }
    if params.tensor_count() != analytic.tensor_count() {
        return Err(Error::Shape("analytic gradients do not mirror parameters".into()));
    }
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(params.tensor_count());
    let mut overall: f64 = 0.0;
    for k in 0..params.tensor_count() {
        let (name, values) = params.tensor(k);
        let (_, grads) = analytic.tensor(k);
        if values.len() != grads.len() {
            return Err(Error::Shape(format!(
                "tensor {name}: {} parameters but {} gradients",
                values.len(),
                grads.len()
            )));
        }
        let entries: Vec<usize> = match opts.max_entries_per_tensor {
            Some(m) if m < values.len() => {
                let mut r = rng::stream(opts.seed, Stream::GradCheck, k as u64, 0);
                let mut picked = index::sample(&mut r, values.len(), m).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..values.len()).collect(),
        };
        let mut check = TensorCheck {
            name: name.to_string(),
            checked: entries.len(),
            failures: 0,
            max_rel_error: 0.0,
            max_abs_grad: 0.0,
        };
        for &e in &entries {
            let original = values[e];
            probe.tensor_mut(k)[e] = original + opts.eps;
            let plus = loss_fn(&probe)?;
            probe.tensor_mut(k)[e] = original - opts.eps;
            let minus = loss_fn(&probe)?;
            probe.tensor_mut(k)[e] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss while perturbing {name}[{e}]")));
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = grads[e];
            let denom = a.abs().max(numeric.abs()).max(opts.abs_floor);
            let rel = (a - numeric).abs() / denom;
            check.max_abs_grad = check.max_abs_grad.max(a.abs());
            check.max_rel_error = check.max_rel_error.max(rel);
            if rel > opts.tol {
                check.failures += 1;
            }
        }
        overall = overall.max(check.max_rel_error);
        tensors.push(check);
    }
    Ok(GradCheckReport {
        max_rel_error: overall,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn affine_examples() {
        let out = affine(&DenseMatrix::identity(2), &[3.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(&*out, &[3.0, -1.0]);
        let out = affine(&DenseMatrix::zeros(2, 2), &[5.0, 5.0], &[1.0, 2.0]).unwrap();
        assert_eq!(&*out, &[1.0, 2.0]);
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = affine(&w, &[1.0, 1.0], &[0.5, -0.5]).unwrap();
        // 1+2+0.5, 3+4-0.5
        assert_eq!(&*out, &[3.5, 6.5]);
    }

    #[test]
    fn affine_rejects_bad_shapes() {
        let w = DenseMatrix::zeros(2, 3);
        assert!(matches!(affine(&w, &[1.0, 2.0], &[0.0, 0.0]), Err(Error::Shape(_))));
        assert!(matches!(affine(&w, &[1.0, 2.0, 3.0], &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn relu_examples() {
        assert_eq!(&*relu(&[-1.0, 0.0, 2.0]), &[0.0, 0.0, 2.0]);
        assert_eq!(&*relu(&[-3.0, -0.5]), &[0.0, 0.0]);
        assert_eq!(&*relu(&[0.0, 1.5, 7.0]), &[0.0, 1.5, 7.0]);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_stable(&[0.0])[0], 0.5);
        let low = sigmoid_stable(&[-1000.0])[0];
        assert!(low > 0.0 && low <= 1e-300 && !low.is_nan());
        let high = sigmoid_stable(&[1000.0])[0];
        assert!(high < 1.0 && high > 1.0 - 1e-15);
        // 1/(1+e^-1) evaluated to 20 digits: 0.73105857863000487925
        assert!((sigmoid_stable(&[1.0])[0] - 0.731_058_578_630_004_9).abs() < 1e-9);
    }

    #[test]
    fn gradcheck_quadratic() {
        let theta = vec![3.0];
        let good = vec![6.0];
        let loss = |p: &Vec<f64>| Ok(p[0] * p[0]);
        let opts = GradCheckOptions::default();
        let report = finite_diff_check(loss, &theta, &good, opts).unwrap();
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);

        let wrong = vec![12.0];
        let report = finite_diff_check(loss, &theta, &wrong, opts).unwrap();
        assert!((report.max_rel_error - 0.5).abs() < 1e-6);
        assert_eq!(report.tensors[0].failures, 1);
    }

    #[test]
    fn gradcheck_rejects_nonfinite_loss() {
        let theta = vec![1.0];
        let res = finite_diff_check(|_: &Vec<f64>| Ok(f64::NAN), &theta, &theta, GradCheckOptions::default());
        assert!(matches!(res, Err(Error::Numeric(_))));
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
        prop::collection::vec(-5.0f64..5.0, rows * cols)
            .prop_map(move |d| DenseMatrix::from_vec(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn affine_is_linear(
            w in small_matrix(4, 5),
            x in prop::collection::vec(-5.0f64..5.0, 5),
            y in prop::collection::vec(-5.0f64..5.0, 5),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let zero = vec![0.0; 4];
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = affine(&w, &combo, &zero).unwrap();
            let fx = affine(&w, &x, &zero).unwrap();
            let fy = affine(&w, &y, &zero).unwrap();
            for r in 0..4 {
                prop_assert!((lhs[r] - (alpha * fx[r] + beta * fy[r])).abs() < 1e-10);
            }
        }

        #[test]
        fn sigmoid_complement(x in -800.0f64..800.0) {
            let s = sigmoid(x) + sigmoid(-x);
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(sigmoid(x) > 0.0 && sigmoid(x) < 1.0);
        }
    }
}
