use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FirError, Result};

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Rows of fold `i`.
    pub fn test_rows(&self, i: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&r| self.assignments[r] == i)
            .collect()
    }

    /// Rows outside fold `i`.
    pub fn train_rows(&self, i: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&r| self.assignments[r] != i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Shuffled k-fold split; stratified by class when `labels` is given.
///
/// Rows are dealt round-robin, class by class, so fold sizes differ by at
/// most one and each class is spread evenly.
pub fn kfold(n: usize, k: usize, labels: Option<&[usize]>, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > n {
        return Err(FirError::Argument(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match labels {
        None => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            rows
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(FirError::Argument(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for (row, &c) in labels.iter().enumerate() {
                by_class[c].push(row);
            }
            by_class
                .into_iter()
                .flat_map(|mut rows| {
                    rows.shuffle(&mut rng);
                    rows
                })
                .collect()
        }
    };
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}
