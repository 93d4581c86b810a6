//! Accuracy, F1 and explained variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(pred: usize, truth: usize) -> Result<()> {
    if pred != truth {
        return Err(Error::DimensionMismatch(format!("{pred} predictions for {truth} labels")));
    }
    if truth == 0 {
        return Err(Error::Empty("no examples to score".into()));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Confusion counts for the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn of<T: PartialEq>(pred: &[T], truth: &[T], positive: &T) -> Self {
        let mut c = Counts::default();
        for (p, t) in pred.iter().zip(truth) {
            match (p == positive, t == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        c
    }

    /// `2PR / (P + R)`, 0 when undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Macro and micro F1 over binary tasks with ±1 entries. Tasks may differ in
/// length but each task's predictions and labels must match.
pub fn f1_scores(pred: &[Vec<i8>], truth: &[Vec<i8>]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted tasks for {} labelled tasks",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no tasks to score".into()));
    }
    let mut pooled = Counts::default();
    let mut macro_sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch(format!("{} predictions for {} labels", p.len(), t.len())));
        }
        if p.iter().chain(t).any(|&v| v != 1 && v != -1) {
            return Err(Error::Format("binary labels must be -1 or +1".into()));
        }
        let c = Counts::of(p, t, &1);
        macro_sum += c.f1();
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn_ += c.fn_;
    }
    Ok((macro_sum / truth.len() as f64, pooled.f1()))
}

/// Mean one-vs-rest F1 over the classes `0..num_classes`.
pub fn multiclass_f1(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    if num_classes == 0 {
        return Err(Error::param("num_classes", "must be positive"));
    }
    let total: f64 = (0..num_classes).map(|c| Counts::of(pred, truth, &c).f1()).sum();
    Ok(total / num_classes as f64)
}

/// `100 · (1 - SSE / Σ(y - ȳ)²)`.
pub fn explained_variance(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let total: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if !(total > 0.0) {
        return Err(Error::Format("explained variance needs truth with nonzero variance".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(100.0 * (1.0 - sse / total))
}

/// Scores for one task (or the single task of a multi-way problem).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub name: String,
    pub examples: usize,
    pub accuracy: f64,
    pub f1: f64,
}

/// Evaluation summary written by `eval`.
///
/// For multi-task data `accuracy` is the mean of the per-task accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained_variance_pct: Option<f64>,
    pub per_task: Vec<TaskReport>,
}

impl EvalReport {
    /// Report for multi-way predictions. Micro F1 over one-vs-rest decisions
    /// equals accuracy.
    pub fn multiclass(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        let acc = accuracy(pred, truth)?;
        let f1 = multiclass_f1(pred, truth, num_classes)?;
        Ok(EvalReport {
            examples: truth.len(),
            accuracy: acc,
            f1_macro: f1,
            f1_micro: acc,
            explained_variance_pct: None,
            per_task: vec![TaskReport {
                name: "all".into(),
                examples: truth.len(),
                accuracy: acc,
                f1,
            }],
        })
    }

    /// Report for binary tasks; tasks without examples are skipped.
    pub fn multitask(names: &[String], pred: &[Vec<i8>], truth: &[Vec<i8>]) -> Result<Self> {
        if names.len() != truth.len() || pred.len() != truth.len() {
            return Err(Error::DimensionMismatch("task names, predictions and labels differ in count".into()));
        }
        let keep: Vec<usize> = (0..truth.len()).filter(|&m| !truth[m].is_empty()).collect();
        if keep.is_empty() {
            return Err(Error::Empty("no labelled examples in any task".into()));
        }
        let pred: Vec<Vec<i8>> = keep.iter().map(|&m| pred[m].clone()).collect();
        let truth: Vec<Vec<i8>> = keep.iter().map(|&m| truth[m].clone()).collect();
        let (f1_macro, f1_micro) = f1_scores(&pred, &truth)?;
        let per_task = keep
            .iter()
            .zip(pred.iter().zip(&truth))
            .map(|(&m, (p, t))| {
                Ok(TaskReport {
                    name: names[m].clone(),
                    examples: t.len(),
                    accuracy: accuracy(p, t)?,
                    f1: Counts::of(p, t, &1).f1(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let acc = per_task.iter().map(|t| t.accuracy).sum::<f64>() / per_task.len() as f64;
        Ok(EvalReport {
            examples: truth.iter().map(Vec::len).sum(),
            accuracy: acc,
            f1_macro,
            f1_micro,
            explained_variance_pct: None,
            per_task,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[2, 3], &[1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 1, 2], &[1, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
        assert!(accuracy::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn f1_examples() {
        let t = vec![vec![1, -1, 1], vec![-1, 1]];
        assert_eq!(f1_scores(&t, &t).unwrap(), (1.0, 1.0));
        let all_pos = vec![vec![1, 1, 1]];
        let all_neg = vec![vec![-1, -1, -1]];
        assert_eq!(f1_scores(&all_neg, &all_pos).unwrap(), (0.0, 0.0));
        // task 1: TP=1, FP=1, FN=0; task 2: TP=0, FP=0, FN=2
        let pred = vec![vec![1, 1], vec![-1, -1]];
        let truth = vec![vec![1, -1], vec![1, 1]];
        let (ma, mi) = f1_scores(&pred, &truth).unwrap();
        assert!((ma - 1.0 / 3.0).abs() < 1e-12);
        assert!((mi - 0.4).abs() < 1e-12);
        assert!(f1_scores(&pred, &truth[..1]).is_err());
        assert!(f1_scores(&[vec![0]], &[vec![1]]).is_err());
    }

    #[test]
    fn explained_variance_examples() {
        let y = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(explained_variance(&y, &y).unwrap(), 100.0);
        let mean = [3.5; 4];
        assert!(explained_variance(&mean, &y).unwrap().abs() < 1e-12);
        let total: f64 = y.iter().map(|v| (v - 3.5f64).powi(2)).sum();
        let c = (total / 4.0).sqrt();
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let expected = 100.0 * (1.0 - 4.0 * c * c / total);
        assert!((explained_variance(&shifted, &y).unwrap() - expected).abs() < 1e-10);
        assert!(explained_variance(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn multiclass_f1_one_vs_rest() {
        // class 0: TP=1 FP=1 FN=0 → 2/3; class 1: TP=1 FP=0 FN=1 → 2/3; class 2 absent → 0
        let f = multiclass_f1(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        assert!((f - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn multitask_report_skips_empty_tasks() {
        let names = vec!["a".to_owned(), "b".to_owned()];
        let r = EvalReport::multitask(&names, &[vec![1, -1], vec![]], &[vec![1, 1], vec![]]).unwrap();
        assert_eq!(r.per_task.len(), 1);
        assert_eq!(r.accuracy, 0.5);
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn metrics_permutation_invariant(
            pairs in prop::collection::vec((prop::bool::ANY, prop::bool::ANY), 1..40),
            shift in 0usize..40,
        ) {
            let s = |b: bool| if b { 1i8 } else { -1 };
            let pred: Vec<i8> = pairs.iter().map(|p| s(p.0)).collect();
            let truth: Vec<i8> = pairs.iter().map(|p| s(p.1)).collect();
            let mut rp = pred.clone();
            let mut rt = truth.clone();
            let k = shift % pred.len();
            rp.rotate_left(k);
            rt.rotate_left(k);
            prop_assert_eq!(accuracy(&pred, &truth).unwrap(), accuracy(&rp, &rt).unwrap());
            let a = f1_scores(&[pred.clone(), truth.clone()], &[truth.clone(), pred.clone()]).unwrap();
            let b = f1_scores(&[rt.clone(), rp.clone()], &[rp, rt]).unwrap();
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.0) && (0.0..=1.0).contains(&a.1));
        }
    }
}
