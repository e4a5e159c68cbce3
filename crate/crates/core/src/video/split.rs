//! Deterministic train/validation splitting.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Stream label separating split shuffles from other consumers of a seed.
const SPLIT_SALT: u64 = 0x53504c4954;

/// Disjoint covering split of dataset indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub seed: u64,
}

fn shuffled(ids: &[usize], seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = ids.to_vec();
    let mut rng = Rng::stream(&[seed, SPLIT_SALT]);
    rng.shuffle(&mut order);
    order
}

/// Shuffled split with `train size = round(ratio * n)`.
pub fn split_dataset(ids: &[usize], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if ids.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 ids to split, got {}",
            ids.len()
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio {ratio} outside [0, 1]")));
    }
    let train_count = (ratio * ids.len() as f64).round() as usize;
    split_dataset_counts(ids, train_count, seed)
}

/// Split with an explicit train count (the published-count override).
pub fn split_dataset_counts(ids: &[usize], train_count: usize, seed: u64) -> Result<DatasetSplit> {
    if ids.is_empty() {
        return Err(Error::Input("cannot split an empty id set".into()));
    }
    if train_count == 0 || train_count >= ids.len() {
        return Err(Error::Config(format!(
            "train count {train_count} leaves an empty side of a {}-id split",
            ids.len()
        )));
    }
    let order = shuffled(ids, seed);
    Ok(DatasetSplit {
        train: order[..train_count].to_vec(),
        val: order[train_count..].to_vec(),
        seed,
    })
}

/// Per-class split keeping every class's train fraction within one video of
/// the ratio.
pub fn split_dataset_stratified(
    ids: &[usize],
    labels: &[usize],
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if ids.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} ids vs {} labels",
            ids.len(),
            labels.len()
        )));
    }
    if ids.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 ids to split, got {}",
            ids.len()
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio {ratio} outside [0, 1]")));
    }
    let classes = labels.iter().max().map(|&m| m + 1).unwrap_or(0);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..classes {
        let class_ids: Vec<usize> = ids
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(&id, _)| id)
            .collect();
        if class_ids.is_empty() {
            continue;
        }
        let order = shuffled(&class_ids, seed.wrapping_add(c as u64));
        let k = (ratio * order.len() as f64).round() as usize;
        let k = k.min(order.len());
        train.extend_from_slice(&order[..k]);
        val.extend_from_slice(&order[k..]);
    }
    Ok(DatasetSplit { train, val, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ratio_rule_on_675_videos() {
        let ids: Vec<usize> = (0..675).collect();
        let s = split_dataset(&ids, 0.6, 7).unwrap();
        assert_eq!(s.train.len(), 405);
        assert_eq!(s.val.len(), 270);
    }

    #[test]
    fn count_override_matches_published_counts() {
        let ids: Vec<usize> = (0..675).collect();
        let s = split_dataset_counts(&ids, 415, 7).unwrap();
        assert_eq!(s.train.len(), 415);
        assert_eq!(s.val.len(), 260);
    }

    #[test]
    fn ten_ids_split_six_four() {
        let ids: Vec<usize> = (0..10).collect();
        let s = split_dataset(&ids, 0.6, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (6, 4));
    }

    #[test]
    fn deterministic_disjoint_covering() {
        let ids: Vec<usize> = (0..101).collect();
        let a = split_dataset(&ids, 0.6, 42).unwrap();
        let b = split_dataset(&ids, 0.6, 42).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
        let train_set: HashSet<usize> = a.train.iter().cloned().collect();
        assert!(a.val.iter().all(|v| !train_set.contains(v)));
    }

    #[test]
    fn tiny_or_empty_sets_rejected() {
        assert!(split_dataset(&[], 0.6, 0).is_err());
        assert!(split_dataset(&[3], 0.6, 0).is_err());
    }

    #[test]
    fn stratified_keeps_per_class_fraction() {
        let n_per_class = 11;
        let classes = 4;
        let ids: Vec<usize> = (0..n_per_class * classes).collect();
        let labels: Vec<usize> = ids.iter().map(|&i| i / n_per_class).collect();
        let s = split_dataset_stratified(&ids, &labels, 0.6, 3).unwrap();
        for c in 0..classes {
            let in_train = s.train.iter().filter(|&&id| labels[id] == c).count();
            let want = (0.6 * n_per_class as f64).round() as usize;
            assert!(
                (in_train as isize - want as isize).abs() <= 1,
                "class {c}: {in_train} vs {want}"
            );
        }
    }
}
