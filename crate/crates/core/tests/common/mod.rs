//! Reference implementations the integration tests compare against. Each is
//! written the slow, obvious way and shares no code with the library.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use mmrec::linalg::ParamSet;

/// Print a criterion verdict on the real stdout so it survives capture.
pub fn verdict(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{tag}] {name}: {detail}");
}

/// Dense `D^{-1/2} A D^{-1/2}` over users then items, with 0 for isolated
/// endpoints.
pub fn dense_normalized_adjacency(pairs: &[(usize, usize)], n_users: usize, n_items: usize) -> Vec<Vec<f64>> {
    let n = n_users + n_items;
    let mut a = vec![vec![0.0; n]; n];
    for &(u, i) in pairs {
        a[u][n_users + i] = 1.0;
        a[n_users + i][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    for r in 0..n {
        for c in 0..n {
            if a[r][c] != 0.0 {
                a[r][c] /= (deg[r] * deg[c]).sqrt();
            }
        }
    }
    a
}

pub fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| (0..cols).map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum()).collect())
        .collect()
}

/// Repeat "drop every record whose user or item has fewer than k distinct
/// partners" until nothing changes.
pub fn naive_k_core(pairs: &[(String, String)], k: usize) -> BTreeSet<(String, String)> {
    let mut current: BTreeSet<(String, String)> = pairs.iter().cloned().collect();
    loop {
        let mut du: HashMap<&str, usize> = HashMap::new();
        let mut di: HashMap<&str, usize> = HashMap::new();
        for (u, i) in &current {
            *du.entry(u).or_default() += 1;
            *di.entry(i).or_default() += 1;
        }
        let next: BTreeSet<(String, String)> = current
            .iter()
            .filter(|(u, i)| du[u.as_str()] >= k && di[i.as_str()] >= k)
            .cloned()
            .collect();
        if next.len() == current.len() {
            return next;
        }
        current = next;
    }
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every entry of every tensor, as `(tensor name, error)`.
pub fn central_difference_errors<P, F>(
    params: &P,
    analytic: &P,
    eps: f64,
    floor: f64,
    mut loss: F,
) -> Vec<(String, f64)>
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> f64,
{
    let mut out = Vec::new();
    let mut work = params.clone();
    for k in 0..params.tensor_count() {
        let (name, base) = params.tensor(k);
        let name = name.to_string();
        let base = base.to_vec();
        let mut worst: f64 = 0.0;
        for (j, &b0) in base.iter().enumerate() {
            work.tensor_mut(k)[j] = b0 + eps;
            let up = loss(&work);
            work.tensor_mut(k)[j] = b0 - eps;
            let down = loss(&work);
            work.tensor_mut(k)[j] = b0;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.tensor(k).1[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
        out.push((name, worst));
    }
    out
}

/// `1 / log2(rank + 1)` if the target is within the cutoff.
pub fn closed_form_ndcg(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}
