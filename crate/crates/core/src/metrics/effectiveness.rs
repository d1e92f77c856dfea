use serde::{Deserialize, Serialize};

use crate::curriculum::AccuracyMatrix;
use crate::error::{Error, Result};

/// Lower bound on the denominator of F, so `beta = -1, alpha = 1` stays finite.
pub const F_DENOMINATOR_FLOOR: f64 = 1e-9;

/// Average seen-class accuracy and first-task forgetting after task `t`
/// (0-based row of `acc`).
///
/// Alpha weights each task's accuracy by its class count; `task_sizes`
/// lists those counts in curriculum order.
pub fn alpha_beta(acc: &AccuracyMatrix, t: usize, task_sizes: &[usize]) -> Result<(f64, f64)> {
    let row = acc.row(t).ok_or(Error::UndefinedAccuracy { row: t, col: 0 })?;
    if task_sizes.len() <= t {
        return Err(Error::LengthMismatch(t + 1, task_sizes.len()));
    }
    let weights = &task_sizes[..=t];
    let total: usize = weights.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("task sizes"));
    }
    let weighted: f64 = row.iter().zip(weights).map(|(a, &w)| a * w as f64).sum();
    let alpha = weighted / total as f64;
    let first = acc.get(0, 0).ok_or(Error::UndefinedAccuracy { row: 0, col: 0 })?;
    let beta = first - row[0];
    Ok((alpha, beta))
}

/// `F = 2 / (beta + 1 / alpha)`, zero when `alpha` is zero.
pub fn effectiveness(alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange {
            what: "alpha",
            value: alpha,
            range: "[0, 1]",
        });
    }
    if !(-1.0..=1.0).contains(&beta) {
        return Err(Error::OutOfRange {
            what: "beta",
            value: beta,
            range: "[-1, 1]",
        });
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 / (beta + 1.0 / alpha).max(F_DENOMINATOR_FLOOR))
}

/// F after every task, alongside the two analytic reference learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FOverTime {
    pub f: Vec<f64>,
    /// Guesses uniformly among the classes seen so far.
    pub random: Vec<f64>,
    /// Perfect on the current task, zero on every earlier one.
    pub overfitting: Vec<f64>,
}

/// Accuracy table of a learner that guesses uniformly over seen classes.
pub fn random_accuracy(task_sizes: &[usize]) -> AccuracyMatrix {
    let mut acc = AccuracyMatrix::new();
    let mut seen = 0usize;
    for (t, &size) in task_sizes.iter().enumerate() {
        seen += size;
        let chance = 1.0 / seen as f64;
        acc.push_row(vec![chance; t + 1]).expect("row shape is fixed by construction");
    }
    acc
}

/// Accuracy table of a learner that forgets every earlier task completely.
pub fn overfitting_accuracy(n_tasks: usize) -> AccuracyMatrix {
    let mut acc = AccuracyMatrix::new();
    for t in 0..n_tasks {
        let mut row = vec![0.0; t + 1];
        row[t] = 1.0;
        acc.push_row(row).expect("row shape is fixed by construction");
    }
    acc
}

fn f_curve(acc: &AccuracyMatrix, task_sizes: &[usize]) -> Result<Vec<f64>> {
    (0..acc.n_tasks())
        .map(|t| {
            let (a, b) = alpha_beta(acc, t, task_sizes)?;
            effectiveness(a, b)
        })
        .collect()
}

pub fn f_over_time(acc: &AccuracyMatrix, task_sizes: &[usize]) -> Result<FOverTime> {
    let n = acc.n_tasks();
    if task_sizes.len() < n {
        return Err(Error::LengthMismatch(n, task_sizes.len()));
    }
    let sizes = &task_sizes[..n];
    Ok(FOverTime {
        f: f_curve(acc, sizes)?,
        random: f_curve(&random_accuracy(sizes), sizes)?,
        overfitting: f_curve(&overfitting_accuracy(n), sizes)?,
    })
}
