use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: Cohort,
    pub test: Cohort,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training rows for `n` rows at `ratio`: `round(ratio * n)`.
pub fn train_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).round() as usize
}

/// Positions of the train and test rows, each sorted ascending.
///
/// Non-stratified: shuffle all positions, take the first `round(ratio·n)`.
/// Stratified: shuffle within each class and take floor-or-ceil of the
/// class's proportional share, allocating the remainder by largest fraction
/// so the total is still `round(ratio·n)`.
pub fn split_positions(
    labels: &[u8],
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Sizing(format!("ratio {ratio} outside (0, 1)")));
    }
    if n < 2 {
        return Err(Error::Sizing(format!("cannot split {n} rows")));
    }
    let n_train = train_size(n, ratio);
    if n_train == 0 || n_train == n {
        return Err(Error::Sizing(format!(
            "ratio {ratio} on {n} rows leaves one side empty"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut train = if stratified {
        let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &l) in labels.iter().enumerate() {
            classes[l as usize].push(i);
        }
        let exact: Vec<f64> = classes.iter().map(|c| ratio * c.len() as f64).collect();
        let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = n_train - quota.iter().sum::<usize>();
        let mut by_fraction = [0usize, 1];
        by_fraction.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &c in by_fraction.iter().cycle().take(4) {
            if remaining == 0 {
                break;
            }
            if quota[c] < classes[c].len() && (quota[c] as f64) < exact[c].ceil() {
                quota[c] += 1;
                remaining -= 1;
            }
        }
        let mut train = Vec::with_capacity(n_train);
        for (c, members) in classes.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..quota[c]]);
        }
        train
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm.truncate(n_train);
        perm
    };
    train.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }
    let test = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((train, test))
}

pub fn split(cohort: &Cohort, ratio: f64, seed: u64, stratified: bool) -> Result<SplitPair> {
    let (train, test) = split_positions(cohort.labels(), ratio, seed, stratified)?;
    Ok(SplitPair {
        train: cohort.subset(&train),
        test: cohort.subset(&test),
        seed,
        ratio,
    })
}
