use std::collections::{HashMap, HashSet, VecDeque};

use super::interactions::{Interaction, RawInteractions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KCoreResult {
    pub interactions: RawInteractions,
    /// Set when filtering removed every record.
    pub empty: bool,
}

/// Keep the largest sub-interaction-set in which every user has at least
/// `k` distinct items and every item at least `k` distinct users.
///
/// Nodes below the threshold are peeled from a work queue; each removal
/// decrements its neighbors, which may push them onto the queue in turn.
pub fn k_core_filter(raw: RawInteractions, k: usize) -> Result<KCoreResult> {
    if k == 0 {
        return Err(Error::Config("k-core threshold must be at least 1".into()));
    }
    let mut user_ids: HashMap<&str, usize> = HashMap::new();
    let mut item_ids: HashMap<&str, usize> = HashMap::new();
    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    for r in &raw {
        let nu = user_ids.len();
        let u = *user_ids.entry(r.user.as_str()).or_insert(nu);
        let ni = item_ids.len();
        let i = *item_ids.entry(r.item.as_str()).or_insert(ni);
        pairs.insert((u, i));
    }
    let n_users = user_ids.len();
    let mut user_adj: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    let mut item_adj: Vec<Vec<usize>> = vec![Vec::new(); item_ids.len()];
    for &(u, i) in &pairs {
        user_adj[u].push(i);
        item_adj[i].push(u);
    }

    // Node ids: users 0..n_users, items after.
    let mut degree: Vec<usize> = user_adj.iter().chain(&item_adj).map(Vec::len).collect();
    let mut removed = vec![false; degree.len()];
    let mut queue: VecDeque<usize> = (0..degree.len()).filter(|&v| degree[v] < k).collect();
    for &v in &queue {
        removed[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        let (nbrs, offset) = if v < n_users {
            (&user_adj[v], n_users)
        } else {
            (&item_adj[v - n_users], 0)
        };
        for &w in nbrs {
            let w = w + offset;
            if removed[w] {
                continue;
            }
            degree[w] -= 1;
            if degree[w] < k {
                removed[w] = true;
                queue.push_back(w);
            }
        }
    }

    let keep: Vec<bool> = raw
        .iter()
        .map(|r| !removed[user_ids[r.user.as_str()]] && !removed[n_users + item_ids[r.item.as_str()]])
        .collect();
    let interactions: Vec<Interaction> = raw.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect();
    let empty = interactions.is_empty();
    Ok(KCoreResult { interactions, empty })
}
