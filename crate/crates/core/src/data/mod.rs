//! Datasets for single-label (multi-way) and multi-task / multi-label data.

mod features;
mod libsvm;
mod multilabel;
mod split;
mod synth;

pub use features::{Features, SparseRow};
pub use libsvm::{load_libsvm, read_libsvm, write_libsvm};
pub use multilabel::{load_multilabel_csv, read_multilabel_csv, write_multilabel_csv, LABEL_PREFIX};
pub use split::Split;
pub use synth::{synth_classification, synth_multitask, SynthParams, SynthTruth};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-label data: features, class indices and a train/test partition.
///
/// Class indices are 0-based; `classes[i]` holds the original label value of
/// class `i` (sorted ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Features,
    pub labels: Option<Vec<usize>>,
    pub classes: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset with every row in the training set.
    pub fn new(features: Features, labels: Option<Vec<usize>>, classes: Vec<f64>) -> Result<Self> {
        let n = features.nrows();
        let ds = Dataset {
            features,
            labels,
            classes,
            train: (0..n).collect(),
            test: Vec::new(),
            feature_names: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Replaces the train/test partition.
    pub fn with_split(mut self, split: &Split) -> Result<Self> {
        split.validate(self.len())?;
        self.train = split.train.clone();
        self.test = split.test.clone();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        Split {
            train: self.train.clone(),
            test: self.test.clone(),
        }
        .validate(n)?;
        match &self.labels {
            Some(labels) => {
                if labels.len() != n {
                    return Err(Error::DimensionMismatch(format!("{} labels for {n} rows", labels.len())));
                }
                if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes.len()) {
                    return Err(Error::IndexOutOfRange {
                        index: bad,
                        len: self.classes.len(),
                    });
                }
            }
            None if !self.train.is_empty() => {
                return Err(Error::Format("training rows need labels".into()));
            }
            None => {}
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    self.dim()
                )));
            }
        }
        Ok(())
    }

    /// Standardises every column with mean and variance of the training rows.
    pub fn standardized(mut self) -> Self {
        self.features = self.features.standardized(&self.train);
        self
    }

    /// A new dataset holding `rows` (in that order), all of them training rows.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::IndexOutOfRange { index: bad, len: self.len() });
        }
        let mut ds = Dataset::new(
            self.features.select_rows(rows),
            self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
            self.classes.clone(),
        )?;
        ds.feature_names = self.feature_names.clone();
        Ok(ds)
    }
}

/// Multi-task binary data sharing one feature matrix.
///
/// `labels[m][n]` is the ±1 label of row `n` for task `m`, or `None` when
/// missing. `train[m]`/`test[m]` index rows of the shared matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub features: Features,
    pub labels: Vec<Vec<Option<i8>>>,
    pub task_names: Vec<String>,
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub feature_names: Option<Vec<String>>,
}

impl TaskSet {
    /// Builds a task set with every labelled row in each task's training set.
    pub fn new(features: Features, labels: Vec<Vec<Option<i8>>>, task_names: Vec<String>) -> Result<Self> {
        let n = features.nrows();
        let split = Split {
            train: (0..n).collect(),
            test: Vec::new(),
        };
        let mut ts = TaskSet {
            features,
            train: vec![Vec::new(); labels.len()],
            test: vec![Vec::new(); labels.len()],
            labels,
            task_names,
            feature_names: None,
        };
        ts.apply_split(&split)?;
        Ok(ts)
    }

    pub fn num_tasks(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Applies one row partition to every task. Training rows lacking a label
    /// for a task are left out of that task.
    pub fn with_split(mut self, split: &Split) -> Result<Self> {
        self.apply_split(split)?;
        Ok(self)
    }

    fn apply_split(&mut self, split: &Split) -> Result<()> {
        split.validate(self.len())?;
        for m in 0..self.num_tasks() {
            self.train[m] = split.train.iter().copied().filter(|&n| self.labels[m][n].is_some()).collect();
            self.test[m] = split.test.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let m = self.num_tasks();
        if self.task_names.len() != m || self.train.len() != m || self.test.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} label columns, {} names, {} train sets, {} test sets",
                self.task_names.len(),
                self.train.len(),
                self.test.len()
            )));
        }
        for (t, col) in self.labels.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "task {t} has {} labels for {n} rows",
                    col.len()
                )));
            }
            if col.iter().flatten().any(|&y| y != 1 && y != -1) {
                return Err(Error::Format(format!("task {t}: labels must be -1 or +1")));
            }
            Split {
                train: self.train[t].clone(),
                test: self.test[t].clone(),
            }
            .validate(n)?;
            if self.train[t].iter().any(|&i| col[i].is_none()) {
                return Err(Error::Format(format!("task {t}: training row without label")));
            }
        }
        Ok(())
    }

    /// Union of all tasks' training rows, sorted.
    pub fn train_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.train.iter().flatten().copied().collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// Standardises every column with statistics of the training rows.
    pub fn standardized(mut self) -> Self {
        let rows = self.train_rows();
        self.features = self.features.standardized(&rows);
        self
    }

    /// A new task set holding `rows` (in that order); every labelled row is
    /// a training row.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::IndexOutOfRange { index: bad, len: self.len() });
        }
        let labels = self.labels.iter().map(|col| rows.iter().map(|&r| col[r]).collect()).collect();
        let mut ts = TaskSet::new(self.features.select_rows(rows), labels, self.task_names.clone())?;
        ts.feature_names = self.feature_names.clone();
        Ok(ts)
    }
}
