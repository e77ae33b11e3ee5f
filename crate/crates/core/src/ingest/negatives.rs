use rand::Rng;

use super::split::SplitDataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingExample {
    pub user: usize,
    pub item: usize,
    pub label: u8,
}

/// One positive plus `ratio` uniformly drawn negatives per training pair.
///
/// Negatives avoid the user's training items and held-out items. Draws for
/// user `u` come from a generator keyed by `(seed, epoch, u)` and are
/// consumed in training order, so the output is a pure function of the
/// arguments.
pub fn sample_negatives(split: &SplitDataset, ratio: usize, seed: u64, epoch: u64) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::with_capacity(split.train.len() * (1 + ratio));
    let mut start = 0;
    while start < split.train.len() {
        let user = split.train[start].user;
        let end = start + split.train[start..].iter().take_while(|t| t.user == user).count();
        let known = split.known_items(user);
        let eligible = split.n_items - known.len();
        if eligible == 0 && ratio > 0 {
            return Err(Error::Sampling(format!(
                "user {user} has interacted with all {} items",
                split.n_items
            )));
        }
        // Dense exclusion: enumerate the pool instead of rejecting.
        let pool: Option<Vec<usize>> =
            (known.len() * 2 > split.n_items).then(|| (0..split.n_items).filter(|j| !known.contains(j)).collect());
        let mut r = rng::stream(seed, Stream::Negatives, epoch, user as u64);
        for t in &split.train[start..end] {
            out.push(TrainingExample {
                user,
                item: t.item,
                label: 1,
            });
            for _ in 0..ratio {
                let item = match &pool {
                    Some(p) => p[r.random_range(0..p.len())],
                    None => loop {
                        let j = r.random_range(0..split.n_items);
                        if !known.contains(&j) {
                            break j;
                        }
                    },
                };
                out.push(TrainingExample { user, item, label: 0 });
            }
        }
        start = end;
    }
    Ok(out)
}
