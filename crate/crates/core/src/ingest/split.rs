use std::collections::{BTreeSet, HashMap};

use super::interactions::Interaction;
use crate::error::{Error, Result};

/// Token ↔ contiguous index bijections. Indices follow sorted token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMaps {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl IdMaps {
    pub fn from_tokens(users: Vec<String>, items: Vec<String>) -> Result<Self> {
        let user_index = index_of(&users, "user")?;
        let item_index = index_of(&items, "item")?;
        Ok(IdMaps {
            users,
            items,
            user_index,
            item_index,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user(&self, token: &str) -> Option<usize> {
        self.user_index.get(token).copied()
    }

    pub fn item(&self, token: &str) -> Option<usize> {
        self.item_index.get(token).copied()
    }

    pub fn user_token(&self, idx: usize) -> &str {
        &self.users[idx]
    }

    pub fn item_token(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn user_tokens(&self) -> &[String] {
        &self.users
    }

    pub fn item_tokens(&self) -> &[String] {
        &self.items
    }
}

fn index_of(tokens: &[String], kind: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        if map.insert(t.clone(), i).is_some() {
            return Err(Error::Data(format!("duplicate {kind} token {t:?}")));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainInteraction {
    pub user: usize,
    pub item: usize,
    pub timestamp: u64,
}

/// One held-out interaction (test or validation target).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeldOut {
    pub user: usize,
    pub item: usize,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub n_users: usize,
    pub n_items: usize,
    /// Sorted by user, then timestamp, then item.
    pub train: Vec<TrainInteraction>,
    pub validation: Vec<HeldOut>,
    /// Exactly one entry per user, in user order.
    pub test: Vec<HeldOut>,
    /// Sorted training items per user.
    pub train_pos: Vec<Vec<usize>>,
    validation_of: Vec<Option<usize>>,
}

impl SplitDataset {
    pub fn is_train_positive(&self, user: usize, item: usize) -> bool {
        self.train_pos[user].binary_search(&item).is_ok()
    }

    pub fn test_item(&self, user: usize) -> usize {
        self.test[user].item
    }

    pub fn validation_item(&self, user: usize) -> Option<usize> {
        self.validation_of[user]
    }

    /// Every item of `user` that must never serve as a sampled negative:
    /// training positives plus held-out validation and test items.
    pub fn known_items(&self, user: usize) -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = self.train_pos[user].iter().copied().collect();
        s.insert(self.test[user].item);
        if let Some(v) = self.validation_of[user] {
            s.insert(v);
        }
        s
    }

    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        self.train.iter().map(|t| (t.user, t.item)).collect()
    }

    /// Rebuild a split from its encoded parts (e.g. read back from disk).
    pub fn from_parts(
        n_users: usize,
        n_items: usize,
        mut train: Vec<TrainInteraction>,
        validation: Vec<HeldOut>,
        mut test: Vec<HeldOut>,
    ) -> Result<Self> {
        test.sort_by_key(|h| h.user);
        if test.len() != n_users || test.iter().enumerate().any(|(u, h)| h.user != u) {
            return Err(Error::Protocol("every user needs exactly one test item".into()));
        }
        train.sort_by_key(|t| (t.user, t.timestamp, t.item));
        let mut train_pos = vec![Vec::new(); n_users];
        for t in &train {
            if t.user >= n_users || t.item >= n_items {
                return Err(Error::Shape(format!(
                    "training pair ({}, {}) outside {n_users}x{n_items}",
                    t.user, t.item
                )));
            }
            train_pos[t.user].push(t.item);
        }
        for p in &mut train_pos {
            p.sort_unstable();
        }
        let mut validation_of = vec![None; n_users];
        for v in &validation {
            validation_of[v.user] = Some(v.item);
        }
        Ok(SplitDataset {
            n_users,
            n_items,
            train,
            validation,
            test,
            train_pos,
            validation_of,
        })
    }
}

/// Label-encode tokens and hold out each user's most recent interaction
/// as test (and, optionally, the second most recent as validation).
///
/// Recency is by timestamp; equal timestamps rank the larger item index
/// as more recent.
pub fn encode_and_split(records: &[Interaction], with_validation: bool) -> Result<(SplitDataset, IdMaps)> {
    let users: BTreeSet<&str> = records.iter().map(|r| r.user.as_str()).collect();
    let items: BTreeSet<&str> = records.iter().map(|r| r.item.as_str()).collect();
    let ids = IdMaps::from_tokens(
        users.into_iter().map(str::to_owned).collect(),
        items.into_iter().map(str::to_owned).collect(),
    )?;

    let mut per_user: Vec<Vec<(u64, usize)>> = vec![Vec::new(); ids.n_users()];
    for r in records {
        let ts = r.timestamp.ok_or_else(|| {
            Error::Protocol(format!(
                "interaction ({}, {}) has no timestamp; canonicalize first",
                r.user, r.item
            ))
        })?;
        per_user[ids.user(&r.user).unwrap()].push((ts, ids.item(&r.item).unwrap()));
    }

    let mut train = Vec::with_capacity(records.len());
    let mut validation = Vec::new();
    let mut test = Vec::with_capacity(ids.n_users());
    for (u, mut hist) in per_user.into_iter().enumerate() {
        if hist.len() < 2 {
            return Err(Error::Protocol(format!(
                "user {:?} has {} interaction(s); leave-one-out needs at least 2",
                ids.user_token(u),
                hist.len()
            )));
        }
        hist.sort_unstable();
        let (ts, item) = hist.pop().unwrap();
        test.push(HeldOut {
            user: u,
            item,
            timestamp: ts,
        });
        if with_validation && hist.len() >= 2 {
            let (ts, item) = hist.pop().unwrap();
            validation.push(HeldOut {
                user: u,
                item,
                timestamp: ts,
            });
        }
        train.extend(hist.into_iter().map(|(timestamp, item)| TrainInteraction {
            user: u,
            item,
            timestamp,
        }));
    }
    let split = SplitDataset::from_parts(ids.n_users(), ids.n_items(), train, validation, test)?;
    Ok((split, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{canonicalize, k_core_filter, synth_generate, SynthConfig};

    fn rec(u: &str, i: &str, t: u64) -> Interaction {
        Interaction::new(u, i, Some(t))
    }

    #[test]
    fn most_recent_is_test_then_validation() {
        let recs = vec![rec("u", "a", 1), rec("u", "c", 3), rec("u", "b", 2)];
        let (split, ids) = encode_and_split(&recs, true).unwrap();
        assert_eq!(ids.item_token(split.test[0].item), "c");
        assert_eq!(ids.item_token(split.validation[0].item), "b");
        assert_eq!(split.train.len(), 1);
        assert_eq!(ids.item_token(split.train[0].item), "a");
    }

    #[test]
    fn two_interactions_skip_validation() {
        let recs = vec![rec("u", "a", 7), rec("u", "b", 3)];
        let (split, ids) = encode_and_split(&recs, true).unwrap();
        assert!(split.validation.is_empty());
        assert_eq!(split.validation_item(0), None);
        assert_eq!(ids.item_token(split.test_item(0)), "a");
    }

    #[test]
    fn ties_go_to_larger_item_index() {
        let recs = vec![rec("u", "b", 5), rec("u", "a", 5), rec("u", "c", 1)];
        let (split, ids) = encode_and_split(&recs, false).unwrap();
        assert_eq!(ids.item_token(split.test_item(0)), "b");
    }

    #[test]
    fn single_interaction_is_protocol_error() {
        let recs = vec![rec("u", "a", 1), rec("v", "a", 1), rec("v", "b", 2)];
        assert!(matches!(encode_and_split(&recs, false), Err(Error::Protocol(_))));
    }

    #[test]
    fn missing_timestamp_is_protocol_error() {
        let recs = vec![rec("u", "a", 1), Interaction::new("u", "b", None)];
        assert!(matches!(encode_and_split(&recs, false), Err(Error::Protocol(_))));
    }

    #[test]
    fn encoding_is_a_bijection() {
        let recs = vec![
            rec("zed", "q", 1),
            rec("amy", "p", 2),
            rec("amy", "q", 3),
            rec("zed", "p", 4),
        ];
        let (_, ids) = encode_and_split(&recs, false).unwrap();
        assert_eq!(ids.user_tokens(), &["amy".to_string(), "zed".to_string()]);
        for (k, t) in ids.item_tokens().iter().enumerate() {
            assert_eq!(ids.item(t), Some(k));
        }
        let rebuilt = IdMaps::from_tokens(ids.user_tokens().to_vec(), ids.item_tokens().to_vec()).unwrap();
        assert_eq!(rebuilt, ids);
    }

    #[test]
    fn synthetic_corpus_respects_temporal_order() {
        let corpus = synth_generate(&SynthConfig {
            n_users: 50,
            n_items: 100,
            per_user: 8,
            ..SynthConfig::default()
        })
        .unwrap();
        let recs = canonicalize(corpus.interactions, 4);
        let recs = k_core_filter(recs, 2).unwrap().interactions;
        let (split, _) = encode_and_split(&recs, true).unwrap();
        assert_eq!(split.test.len(), split.n_users);
        for u in 0..split.n_users {
            let test = split.test[u];
            let max_train = split
                .train
                .iter()
                .filter(|t| t.user == u)
                .map(|t| t.timestamp)
                .max()
                .unwrap_or(0);
            assert!(max_train <= test.timestamp);
            assert!(!split.is_train_positive(u, test.item));
            if let Some(v) = split.validation.iter().find(|v| v.user == u) {
                assert!(v.timestamp <= test.timestamp && max_train <= v.timestamp);
                assert!(!split.is_train_positive(u, v.item));
                assert_ne!(v.item, test.item);
            }
        }
    }
}
