//! Balanced random K-fold partitions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id in `1..=k` of every subject.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Held-out rows of fold `fold` (0-based, i.e. fold id `fold + 1`).
    pub fn validation_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == fold + 1).collect()
    }

    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] != fold + 1).collect()
    }
}

/// Randomly assigns `n` subjects to `k` folds whose sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("at least two folds are needed"));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} subjects into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k + 1;
    }
    Ok(FoldPlan { k, assignments, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_sizes() {
        let plan = make_folds(10, 3, 4).unwrap();
        let mut sizes: Vec<usize> = (0..3).map(|f| plan.validation_rows(f).len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![3, 3, 4]);
        let single = make_folds(10, 10, 1).unwrap();
        assert!((0..10).all(|f| single.validation_rows(f).len() == 1));
    }

    #[test]
    fn rejects_bad_fold_counts() {
        assert!(make_folds(5, 6, 0).is_err());
        assert!(make_folds(5, 1, 0).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_folds(37, 5, 9).unwrap(), make_folds(37, 5, 9).unwrap());
        assert_ne!(make_folds(37, 5, 9).unwrap(), make_folds(37, 5, 10).unwrap());
    }
}
