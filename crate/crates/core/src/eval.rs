//! Sampled-candidate top-K evaluation.
//!
//! For every evaluated user the held-out item competes against up to
//! `n_negatives` items drawn uniformly without replacement from items the
//! user has no known interaction with. Candidates are ranked by descending
//! score, ties by ascending item index; with a single relevant item,
//! Recall@K is a hit indicator and NDCG@K is `1/log2(rank+1)`.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::ingest::{FeatureMatrix, SplitDataset};
use crate::linalg::{dot, DenseMatrix};
use crate::model::{compute_user_embeddings, item_embeddings, user_query, ModelConfig, ModelParams, ScoringMode};
use crate::rng::{self, Stream};

pub const DEFAULT_NEGATIVES: usize = 100;
pub const DEFAULT_KS: [usize; 2] = [10, 20];

/// Which held-out interaction is the ranking target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeldOutKind {
    Test,
    Validation,
}

impl HeldOutKind {
    fn stream(self) -> Stream {
        match self {
            HeldOutKind::Test => Stream::EvalTest,
            HeldOutKind::Validation => Stream::EvalValidation,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeldOutKind::Test => "test",
            HeldOutKind::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub user: usize,
    pub target: usize,
    /// Sorted ascending.
    pub negatives: Vec<usize>,
}

impl CandidateSet {
    /// Target first, then negatives.
    pub fn items(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.negatives.len() + 1);
        v.push(self.target);
        v.extend_from_slice(&self.negatives);
        v
    }
}

/// Target plus sampled negatives for `user`, a pure function of
/// `(seed, kind, user)`.
pub fn build_candidate_set(
    split: &SplitDataset,
    user: usize,
    kind: HeldOutKind,
    n_neg: usize,
    seed: u64,
) -> Result<CandidateSet> {
    if user >= split.n_users {
        return Err(Error::Shape(format!("user {user} outside {} users", split.n_users)));
    }
    let target = match kind {
        HeldOutKind::Test => split.test_item(user),
        HeldOutKind::Validation => split
            .validation_item(user)
            .ok_or_else(|| Error::Protocol(format!("user {user} has no validation item")))?,
    };
    let known = split.known_items(user);
    let eligible: Vec<usize> = (0..split.n_items).filter(|j| !known.contains(j)).collect();
    if eligible.is_empty() {
        return Err(Error::Protocol(format!("user {user} has no eligible negative items")));
    }
    let mut negatives = if eligible.len() <= n_neg {
        eligible
    } else {
        let mut r = rng::stream(seed, kind.stream(), user as u64, 0);
        index::sample(&mut r, eligible.len(), n_neg)
            .into_iter()
            .map(|k| eligible[k])
            .collect()
    };
    negatives.sort_unstable();
    Ok(CandidateSet {
        user,
        target,
        negatives,
    })
}

/// 1-based rank of `candidates[target_pos]` under descending score with
/// ascending-item tie breaking. Candidates are `(item, score)`.
pub fn rank_of_target(candidates: &[(usize, f64)], target_pos: usize) -> usize {
    let (t_item, t_score) = candidates[target_pos];
    1 + candidates
        .iter()
        .filter(|&&(item, score)| score > t_score || (score == t_score && item < t_item))
        .count()
}

/// `(recall, ndcg)` at cutoff `k` for a single relevant item at `rank`.
pub fn metrics_at_k(rank: usize, k: usize) -> (f64, f64) {
    if rank >= 1 && rank <= k {
        (1.0, 1.0 / ((rank + 1) as f64).log2())
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub n_negatives: usize,
    pub seed: u64,
    pub ks: Vec<usize>,
    pub target: HeldOutKind,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            n_negatives: DEFAULT_NEGATIVES,
            seed: 0,
            ks: DEFAULT_KS.to_vec(),
            target: HeldOutKind::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub n_users: usize,
    pub n_negatives: usize,
    pub seed: u64,
    pub target: HeldOutKind,
    pub scoring: Option<ScoringMode>,
    /// Mean candidate-set size (target included).
    pub mean_candidates: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> f64 {
        self.recall[&k]
    }

    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.ndcg[&k]
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (&k, &r) in &self.recall {
            m.insert(format!("recall@{k}"), json!(r));
            m.insert(format!("ndcg@{k}"), json!(self.ndcg[&k]));
        }
        m.insert("users".into(), json!(self.n_users));
        m.insert("negatives".into(), json!(self.n_negatives));
        m.insert("seed".into(), json!(self.seed));
        m.insert("split".into(), json!(self.target.as_str()));
        if let Some(s) = self.scoring {
            m.insert("scoring".into(), json!(s.as_str()));
        }
        Value::Object(m)
    }

    /// Single-line JSON object.
    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }
}

/// Run the protocol with an arbitrary scorer `(user, candidate items) →
/// scores`.
pub fn evaluate_with<F>(split: &SplitDataset, protocol: &EvalProtocol, scorer: F) -> Result<EvalReport>
where
    F: Fn(usize, &[usize]) -> Result<Vec<f64>> + Sync,
{
    if protocol.ks.is_empty() || protocol.ks.contains(&0) {
        return Err(Error::Config("evaluation cutoffs must be positive".into()));
    }
    let users: Vec<usize> = match protocol.target {
        HeldOutKind::Test => (0..split.n_users).collect(),
        HeldOutKind::Validation => split.validation.iter().map(|v| v.user).collect(),
    };
    if users.is_empty() {
        return Err(Error::Protocol(format!(
            "no users with a {} item to evaluate",
            protocol.target.as_str()
        )));
    }
    let per_user: Vec<(usize, usize)> = users
        .par_iter()
        .map(|&u| {
            let cs = build_candidate_set(split, u, protocol.target, protocol.n_negatives, protocol.seed)?;
            let items = cs.items();
            let scores = scorer(u, &items)?;
            if scores.len() != items.len() {
                return Err(Error::Consistency(format!(
                    "scorer returned {} scores for {} candidates",
                    scores.len(),
                    items.len()
                )));
            }
            if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
                return Err(Error::Numeric(format!("non-finite score {bad} for user {u}")));
            }
            let cands: Vec<(usize, f64)> = items.into_iter().zip(scores).collect();
            Ok((rank_of_target(&cands, 0), cands.len()))
        })
        .collect::<Result<_>>()?;

    let n = per_user.len() as f64;
    let mut recall = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in &protocol.ks {
        let (mut r_sum, mut n_sum) = (0.0, 0.0);
        for &(rank, _) in &per_user {
            let (r, g) = metrics_at_k(rank, k);
            r_sum += r;
            n_sum += g;
        }
        recall.insert(k, r_sum / n);
        ndcg.insert(k, n_sum / n);
    }
    let mean_candidates = per_user.iter().map(|&(_, c)| c as f64).sum::<f64>() / n;
    Ok(EvalReport {
        recall,
        ndcg,
        n_users: per_user.len(),
        n_negatives: protocol.n_negatives,
        seed: protocol.seed,
        target: protocol.target,
        scoring: None,
        mean_candidates,
    })
}

/// Scoring vectors for every user and fused vectors for every item.
#[derive(Debug, Clone)]
pub struct ScoringTables {
    pub queries: DenseMatrix,
    pub items: DenseMatrix,
}

impl ScoringTables {
    pub fn build(
        params: &ModelParams,
        config: &ModelConfig,
        graph: &BipartiteGraph,
        image: &FeatureMatrix,
        text: &FeatureMatrix,
    ) -> Result<Self> {
        let items = item_embeddings(params, config.fusion, image, text)?;
        let (users, _) = compute_user_embeddings(params, graph, config.gcn_layers, config.parallel)?;
        let mut queries = DenseMatrix::zeros(users.rows(), params.dims.d);
        for u in 0..users.rows() {
            queries
                .row_mut(u)
                .copy_from_slice(&user_query(params, config.scoring, users.row(u))?);
        }
        Ok(ScoringTables { queries, items })
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.queries.row(user), self.items.row(item))
    }
}

/// Evaluate a model; the graph must be built from the training split.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    graph: &BipartiteGraph,
    split: &SplitDataset,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
    protocol: &EvalProtocol,
) -> Result<EvalReport> {
    let tables = ScoringTables::build(params, config, graph, image, text)?;
    let mut report = evaluate_with(split, protocol, |u, items| {
        Ok(items.iter().map(|&i| tables.score(u, i)).collect())
    })?;
    report.scoring = Some(config.scoring);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{HeldOut, TrainInteraction};
    use proptest::prelude::*;

    fn split(n_items: usize, train: &[(usize, usize)], test: &[usize]) -> SplitDataset {
        SplitDataset::from_parts(
            test.len(),
            n_items,
            train
                .iter()
                .map(|&(user, item)| TrainInteraction {
                    user,
                    item,
                    timestamp: 0,
                })
                .collect(),
            Vec::new(),
            test.iter()
                .enumerate()
                .map(|(user, &item)| HeldOut {
                    user,
                    item,
                    timestamp: 1,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exhaustive_candidates_when_catalog_is_small() {
        let s = split(101, &[], &[7]);
        let cs = build_candidate_set(&s, 0, HeldOutKind::Test, 100, 3).unwrap();
        assert_eq!(cs.negatives.len(), 100);
        assert_eq!(cs.negatives, (0..101).filter(|&j| j != 7).collect::<Vec<_>>());
    }

    #[test]
    fn candidates_are_deterministic_and_eligible() {
        let train: Vec<(usize, usize)> = (0..10).map(|k| (0, k * 3)).collect();
        let s = split(300, &train, &[299]);
        let a = build_candidate_set(&s, 0, HeldOutKind::Test, 100, 5).unwrap();
        assert_eq!(a, build_candidate_set(&s, 0, HeldOutKind::Test, 100, 5).unwrap());
        for seed in 0..1000 {
            let cs = build_candidate_set(&s, 0, HeldOutKind::Test, 100, seed).unwrap();
            assert_eq!(cs.negatives.len(), 100);
            assert!(!cs.negatives.contains(&299));
            assert!(cs.negatives.iter().all(|&j| !s.is_train_positive(0, j)));
            assert!(cs.negatives.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn no_eligible_negatives_is_protocol_error() {
        let s = split(2, &[(0, 0)], &[1]);
        assert!(matches!(
            build_candidate_set(&s, 0, HeldOutKind::Test, 100, 0),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(
            build_candidate_set(&s, 0, HeldOutKind::Validation, 100, 0),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of_target(&[(4, 9.0), (1, 2.0), (2, 3.0)], 0), 1);
        assert_eq!(rank_of_target(&[(0, 1.0), (1, 1.0), (2, 1.0)], 0), 1);
        assert_eq!(rank_of_target(&[(2, 1.0), (0, 1.0), (1, 1.0)], 0), 3);
        assert_eq!(rank_of_target(&[(5, 0.5), (1, 0.7), (2, 0.1)], 0), 2);
    }

    #[test]
    fn metric_closed_forms() {
        assert_eq!(metrics_at_k(1, 10), (1.0, 1.0));
        assert_eq!(metrics_at_k(3, 10), (1.0, 0.5));
        assert_eq!(metrics_at_k(11, 10), (0.0, 0.0));
        assert_eq!(metrics_at_k(10, 10).0, 1.0);
    }

    #[test]
    fn cutoff_covering_all_candidates_gives_full_recall() {
        let s = split(30, &[(0, 1), (1, 2)], &[5, 6]);
        let protocol = EvalProtocol {
            ks: vec![29],
            ..EvalProtocol::default()
        };
        let r = evaluate_with(&s, &protocol, |_, items| {
            Ok(items.iter().map(|&i| -(i as f64)).collect())
        })
        .unwrap();
        assert_eq!(r.recall_at(29), 1.0);
        assert_eq!(r.mean_candidates, 29.0);
    }

    #[test]
    fn report_json_fields() {
        let s = split(30, &[], &[5]);
        let r = evaluate_with(&s, &EvalProtocol::default(), |_, items| Ok(vec![0.0; items.len()])).unwrap();
        let v: Value = serde_json::from_str(&r.to_json_line()).unwrap();
        for key in [
            "recall@10",
            "ndcg@10",
            "recall@20",
            "ndcg@20",
            "users",
            "negatives",
            "seed",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["negatives"], 100);
    }

    #[test]
    fn empty_target_set_is_protocol_error() {
        let s = split(30, &[], &[5]);
        let protocol = EvalProtocol {
            target: HeldOutKind::Validation,
            ..EvalProtocol::default()
        };
        assert!(matches!(
            evaluate_with(&s, &protocol, |_, items| Ok(vec![0.0; items.len()])),
            Err(Error::Protocol(_))
        ));
    }

    proptest! {
        #[test]
        fn rank_matches_sort_oracle(scores in prop::collection::vec(-3i32..3, 101), t in 0usize..101) {
            // Coarse integer scores force plenty of ties.
            let cands: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i, s as f64)).collect();
            let mut sorted = cands.clone();
            sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let oracle = 1 + sorted.iter().position(|c| c.0 == t).unwrap();
            prop_assert_eq!(rank_of_target(&cands, t), oracle);
        }

        #[test]
        fn rank_invariant_to_shift_and_scale(
            scores in prop::collection::vec(-5.0f64..5.0, 20), shift in -10.0f64..10.0, scale in 0.1f64..10.0
        ) {
            let cands: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i, s)).collect();
            let moved: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i, s * scale)).collect();
            let shifted: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i, s + shift)).collect();
            let r = rank_of_target(&cands, 0);
            prop_assert_eq!(r, rank_of_target(&moved, 0));
            // shifting can merge near-equal floats; only compare when gaps are clear
            let min_gap = scores.iter().skip(1).map(|s| (s - scores[0]).abs()).fold(f64::INFINITY, f64::min);
            if min_gap > 1e-9 {
                prop_assert_eq!(r, rank_of_target(&shifted, 0));
            }
        }

        #[test]
        fn metrics_monotone_in_k(rank in 1usize..200, k in 1usize..150) {
            let (r1, n1) = metrics_at_k(rank, k);
            let (r2, n2) = metrics_at_k(rank, k + 1);
            prop_assert!(r2 >= r1 && n2 >= n1);
            prop_assert!(n1 <= r1);
        }
    }
}
