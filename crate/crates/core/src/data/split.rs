use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train/test row partition; serialised as `{"train": [...], "test": [...]}`
/// with 0-based row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Random partition with `round(train_fraction · n)` training rows, both
    /// sides sorted.
    pub fn random(n: usize, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::param("train_fraction", format!("must be in [0, 1], got {train_fraction}")));
        }
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_fraction * n as f64).round() as usize;
        let mut train = rows[..n_train].to_vec();
        let mut test = rows[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }

    /// Disjoint, in range, no duplicates.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if seen[i] {
                return Err(Error::Format(format!("row {i} appears twice in the split")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    /// `k` folds over `rows`, each fold as (fit rows, held-out rows).
    pub fn k_fold(rows: &[usize], k: usize, seed: u64) -> Result<Vec<Split>> {
        if k < 2 || k > rows.len() {
            return Err(Error::param("folds", format!("need 2 ≤ k ≤ {}, got {k}", rows.len())));
        }
        let mut shuffled = rows.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok((0..k)
            .map(|f| {
                let mut train = Vec::new();
                let mut test = Vec::new();
                for (i, &r) in shuffled.iter().enumerate() {
                    if i % k == f {
                        test.push(r);
                    } else {
                        train.push(r);
                    }
                }
                train.sort_unstable();
                test.sort_unstable();
                Split { train, test }
            })
            .collect())
    }
}
