//! Model files, evaluation and cross-validated hyperparameter selection.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, TaskSet};
use crate::error::{Error, Result};
use crate::ilsvm::{self, IlsvmModel, Mode};
use crate::inference::{FitConfig, TraceEntry};
use crate::metrics::{explained_variance, EvalReport};
use crate::mt_ilsvm::{self, MtModel};

/// Either fitted model, tagged by kind in JSON (`{"model": "ilsvm", ...}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    Ilsvm(IlsvmModel),
    MtIlsvm(MtModel),
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn trace(&self) -> &[TraceEntry] {
        match self {
            Model::Ilsvm(m) => &m.trace,
            Model::MtIlsvm(m) => &m.trace,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            Model::Ilsvm(m) => m.converged,
            Model::MtIlsvm(m) => m.converged,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Ilsvm(m) => m.dim,
            Model::MtIlsvm(m) => m.dim,
        }
    }
}

fn eval_rows(ds: &Dataset) -> Vec<usize> {
    if ds.test.is_empty() {
        ds.train.clone()
    } else {
        ds.test.clone()
    }
}

/// Scores `model` on the test rows of `ds` (its training rows when there are
/// none). Also reports the explained variance of the reconstruction `Φψ_n`.
pub fn evaluate_ilsvm(model: &IlsvmModel, ds: &Dataset) -> Result<EvalReport> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::Format("evaluation needs labelled data".into()))?;
    if ds.num_classes() != model.state.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} classes, data has {}",
            model.state.num_classes(),
            ds.num_classes()
        )));
    }
    let x = ds.features.to_dense();
    let psi = model.feature_means(&x)?;
    let rows = eval_rows(ds);
    if rows.is_empty() {
        return Err(Error::Empty("no rows to evaluate".into()));
    }
    let pred: Vec<usize> = rows
        .iter()
        .map(|&n| {
            let scores = model.state.mu.dot(&psi.row(n));
            (0..scores.len()).fold(0, |b, y| if scores[y] > scores[b] { y } else { b })
        })
        .collect();
    let truth: Vec<usize> = rows.iter().map(|&n| labels[n]).collect();
    let mut report = EvalReport::multiclass(&pred, &truth, ds.num_classes())?;
    let sub = x.select(Axis(0), &rows);
    let recon = psi.select(Axis(0), &rows).dot(&model.state.phi.t());
    report.explained_variance_pct = explained_variance(
        recon.iter().copied().collect::<Vec<_>>().as_slice(),
        sub.iter().copied().collect::<Vec<_>>().as_slice(),
    )
    .ok();
    Ok(report)
}

/// Scores `model` per task on each task's labelled test rows (training rows
/// when no task has test rows).
pub fn evaluate_mt(model: &MtModel, ts: &TaskSet) -> Result<EvalReport> {
    if ts.num_tasks() != model.state.num_tasks() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} tasks, data has {}",
            model.state.num_tasks(),
            ts.num_tasks()
        )));
    }
    let pred = model.predict(&ts.features.to_dense())?;
    let use_test = ts.test.iter().any(|t| !t.is_empty());
    let mut p = Vec::with_capacity(ts.num_tasks());
    let mut t = Vec::with_capacity(ts.num_tasks());
    for m in 0..ts.num_tasks() {
        let rows = if use_test { &ts.test[m] } else { &ts.train[m] };
        let labelled: Vec<usize> = rows.iter().copied().filter(|&n| ts.labels[m][n].is_some()).collect();
        p.push(labelled.iter().map(|&n| pred[m][n]).collect());
        t.push(labelled.iter().map(|&n| ts.labels[m][n].expect("filtered")).collect());
    }
    EvalReport::multitask(&ts.task_names, &p, &t)
}

/// Values swept by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            alpha: vec![0.5, 1.0, 2.0],
            c: vec![0.1, 1.0, 10.0],
        }
    }
}

/// Mean held-out accuracy of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub alpha: f64,
    pub c: f64,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Outcome of a sweep: every grid point and the chosen configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub scores: Vec<CvScore>,
    pub best: FitConfig,
}

fn sweep(
    base: &FitConfig,
    grid: &Grid,
    folds: usize,
    mut score_fold: impl FnMut(&FitConfig, usize) -> Result<f64>,
) -> Result<CvReport> {
    if grid.alpha.is_empty() || grid.c.is_empty() {
        return Err(Error::param("grid", "needs at least one alpha and one C"));
    }
    let mut scores = Vec::new();
    let mut best: Option<(f64, FitConfig)> = None;
    for &alpha in &grid.alpha {
        for &c in &grid.c {
            let cfg = FitConfig { alpha, c, ..base.clone() };
            let fold_accuracy = (0..folds).map(|f| score_fold(&cfg, f)).collect::<Result<Vec<_>>>()?;
            let mean = fold_accuracy.iter().sum::<f64>() / folds as f64;
            // first grid point wins ties
            if best.as_ref().map_or(true, |(b, _)| mean > *b) {
                best = Some((mean, cfg));
            }
            scores.push(CvScore {
                alpha,
                c,
                fold_accuracy,
                mean_accuracy: mean,
            });
        }
    }
    Ok(CvReport {
        folds,
        scores,
        best: best.expect("nonempty grid").1,
    })
}

/// k-fold cross-validation of the single-task model over the training rows
/// of `ds`. Held-out rows take part in inference without margins.
pub fn cross_validate_ilsvm(ds: &Dataset, base: &FitConfig, mode: Mode, grid: &Grid, folds: usize) -> Result<CvReport> {
    let sub = ds.select(&ds.train)?;
    let all: Vec<usize> = (0..sub.len()).collect();
    let splits = Split::k_fold(&all, folds, base.seed)?;
    sweep(base, grid, folds, |cfg, f| {
        let fold = sub.clone().with_split(&splits[f])?;
        let model = match mode {
            Mode::Full => ilsvm::fit(&fold, cfg)?,
            Mode::Decoupled => ilsvm::decoupled_baseline(&fold, cfg)?,
        };
        Ok(evaluate_ilsvm(&model, &fold)?.accuracy)
    })
}

/// k-fold cross-validation of the multi-task model over the union of the
/// tasks' training rows.
pub fn cross_validate_mt(ts: &TaskSet, base: &FitConfig, mode: Mode, grid: &Grid, folds: usize) -> Result<CvReport> {
    let rows = ts.train_rows();
    let sub = ts.select(&rows)?;
    let all: Vec<usize> = (0..sub.len()).collect();
    let splits = Split::k_fold(&all, folds, base.seed)?;
    sweep(base, grid, folds, |cfg, f| {
        let fold = sub.clone().with_split(&splits[f])?;
        let model = match mode {
            Mode::Full => mt_ilsvm::fit_mt(&fold, cfg)?,
            Mode::Decoupled => mt_ilsvm::decoupled_baseline(&fold, cfg)?,
        };
        Ok(evaluate_mt(&model, &fold)?.accuracy)
    })
}
