use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EegDataset;
use crate::error::{invalid, Result};
use crate::rng::{SeedStreams, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Samples of every subject may land on both sides of a split.
    Intra,
    /// Test subjects are never seen in training or validation.
    Inter,
}

impl Protocol {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "intra" => Ok(Self::Intra),
            "inter" => Ok(Self::Inter),
            _ => Err(invalid(format!("unknown protocol {s:?} (expected intra or inter)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Intra => "intra",
            Self::Inter => "inter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub protocol: Protocol,
    pub folds: Vec<Fold>,
}

/// Split `n` items into `k` contiguous blocks whose sizes differ by at most
/// one, larger blocks first.
fn block_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let b = (start, start + len);
            start += len;
            b
        })
        .collect()
}

/// Everything outside `block`, continuing cyclically from its end.
fn rest_after<T: Copy>(items: &[T], (lo, hi): (usize, usize)) -> Vec<T> {
    items[hi..].iter().chain(&items[..lo]).copied().collect()
}

/// Validation size for `rest` leftover samples out of `n`, chosen so that
/// both validation and training stay within one sample of their target
/// shares (`(k-1)/4k` and `3(k-1)/4k` of `n`).
fn intra_val_size(n: usize, k: usize, rest: usize) -> usize {
    let val_target = n as f64 * (k - 1) as f64 / (4 * k) as f64;
    let train_target = 3.0 * val_target;
    let centre = (rest as f64 / 4.0).round() as usize;
    let miss = |v: usize| (v as f64 - val_target).abs().max(((rest - v) as f64 - train_target).abs());
    [centre, centre.saturating_sub(1), (centre + 1).min(rest)]
        .into_iter()
        .fold(centre, |best, v| if miss(v) < miss(best) { v } else { best })
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Sample-level k-fold plan: a seeded permutation is cut into `k` test
/// blocks and the remainder of each fold is split 3:1 into train and
/// validation, giving 60/20/20 for `k = 5`.
pub fn make_intra_folds(dataset: &EegDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = dataset.len();
    if k < 2 {
        return Err(invalid(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(invalid(format!("too few samples for {k} folds: {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut SeedStreams::new(seed).rng(Stream::Folds, 0));
    let folds = block_bounds(n, k)
        .into_iter()
        .map(|block| {
            let rest = rest_after(&perm, block);
            let n_val = intra_val_size(n, k, rest.len());
            Fold {
                val: sorted(rest[..n_val].to_vec()),
                train: sorted(rest[n_val..].to_vec()),
                test: sorted(perm[block.0..block.1].to_vec()),
            }
        })
        .collect::<Vec<_>>();
    if folds.iter().any(|f| f.train.is_empty() || f.val.is_empty()) {
        return Err(invalid(format!("too few samples for {k} folds with a validation split: {n}")));
    }
    Ok(FoldPlan { protocol: Protocol::Intra, folds })
}

/// Subject-level k-fold plan: seeded subject groups serve as test sets in
/// turn; the remaining subjects are split about 3:1 into training and
/// validation subjects, with at least one of each.
pub fn make_inter_folds(dataset: &EegDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut subjects = dataset.subjects();
    let s = subjects.len();
    if s < k {
        return Err(invalid(format!("inter-subject planning needs at least {k} subjects, found {s}")));
    }
    if s - s.div_ceil(k) < 2 {
        return Err(invalid(format!(
            "inter-subject planning needs at least 2 non-test subjects per fold, {s} subjects in {k} folds leave fewer"
        )));
    }
    subjects.shuffle(&mut SeedStreams::new(seed).rng(Stream::Folds, 1));
    let indices_of = |group: &[u32]| -> Vec<usize> {
        let set: HashSet<u32> = group.iter().copied().collect();
        dataset.samples.iter().enumerate().filter(|(_, x)| set.contains(&x.subject_id)).map(|(i, _)| i).collect()
    };
    let folds = block_bounds(s, k)
        .into_iter()
        .map(|block| {
            let rest = rest_after(&subjects, block);
            let n_val = ((rest.len() as f64 / 4.0).round() as usize).clamp(1, rest.len() - 1);
            Fold {
                train: indices_of(&rest[n_val..]),
                val: indices_of(&rest[..n_val]),
                test: indices_of(&subjects[block.0..block.1]),
            }
        })
        .collect();
    Ok(FoldPlan { protocol: Protocol::Inter, folds })
}

impl FoldPlan {
    pub fn make(protocol: Protocol, dataset: &EegDataset, k: usize, seed: u64) -> Result<Self> {
        match protocol {
            Protocol::Intra => make_intra_folds(dataset, k, seed),
            Protocol::Inter => make_inter_folds(dataset, k, seed),
        }
    }
}
