//! Stratified train/test splitting and stratified down-sampling.
//!
//! Per-stratum counts use largest-remainder apportionment: every stratum
//! gets the floor of its exact quota, and the leftover units go to the
//! strata with the largest fractional parts (ties to the smaller key) so
//! the total always matches the target.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Debug;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("class {class} has {count} item(s); stratified split needs at least 2 per class")]
    TooFewItems { class: String, count: usize },
    #[error("train fraction must lie strictly between 0 and 1")]
    BadFraction,
    #[error("target of {target} exceeds the {available} available items")]
    TargetTooLarge { target: usize, available: usize },
}

/// Largest-remainder apportionment of `total` units over `weights`.
///
/// Quotas are `weight * total / sum(weights)`. Ties on the fractional part
/// go to the earlier entry.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return alloc::vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| {
            // Snap quotas that are integral up to rounding noise.
            let q = w / sum * total as f64;
            let nearest = libm::round(q);
            if (q - nearest).abs() < 1e-9 {
                nearest
            } else {
                q
            }
        })
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps the earlier entry first on equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - libm::floor(quotas[a]);
        let rb = quotas[b] - libm::floor(quotas[b]);
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal)
    });
    let leftover = total.saturating_sub(assigned);
    for &i in order.iter().cycle().take(leftover) {
        counts[i] += 1;
    }
    counts
}

/// Groups item indices by key, keys in ascending order.
fn strata<T, K: Ord>(items: &[T], key: impl Fn(&T) -> K) -> BTreeMap<K, Vec<usize>> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(key(item)).or_default().push(i);
    }
    groups
}

/// Splits `items` into `(train, test)` preserving the class proportions
/// given by `key`. Both outputs keep the input order.
pub fn stratified_split<T, K: Ord + Debug>(
    items: Vec<T>,
    key: impl Fn(&T) -> K,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), SplitError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::BadFraction);
    }
    let groups = strata(&items, key);
    for (class, members) in &groups {
        if members.len() < 2 {
            return Err(SplitError::TooFewItems { class: format!("{class:?}"), count: members.len() });
        }
    }
    let sizes: Vec<f64> = groups.values().map(|m| m.len() as f64).collect();
    let train_total = libm::round(items.len() as f64 * train_fraction) as usize;
    let train_counts = apportion(&sizes, train_total);

    let mut in_train = alloc::vec![false; items.len()];
    let mut rng = rng::seeded(seed);
    for (members, &take) in groups.values().zip(&train_counts) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..take.min(shuffled.len())] {
            in_train[i] = true;
        }
    }

    let mut train = Vec::with_capacity(train_total);
    let mut test = Vec::with_capacity(items.len() - train_total);
    for (item, is_train) in items.into_iter().zip(in_train) {
        if is_train {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}

/// Draws `target_n` items so that each stratum keeps its share of the
/// population (within one item). The result keeps the input order.
pub fn stratified_sample<T, K: Ord>(
    items: Vec<T>,
    key: impl Fn(&T) -> K,
    target_n: usize,
    seed: u64,
) -> Result<Vec<T>, SplitError> {
    if target_n > items.len() {
        return Err(SplitError::TargetTooLarge { target: target_n, available: items.len() });
    }
    let groups = strata(&items, key);
    let sizes: Vec<f64> = groups.values().map(|m| m.len() as f64).collect();
    let counts = apportion(&sizes, target_n);

    let mut keep = alloc::vec![false; items.len()];
    let mut rng = rng::seeded(seed);
    for (members, &take) in groups.values().zip(&counts) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..take.min(shuffled.len())] {
            keep[i] = true;
        }
    }
    Ok(items.into_iter().zip(keep).filter_map(|(item, k)| k.then_some(item)).collect())
}
