//! Curriculum Designer: scores every curriculum from the prototype distance
//! matrix and ranks them, plus a seeded random designer as a baseline.
//!
//! With `M(i, j)` the distance between the tasks at curriculum positions `i`
//! and `j` (1-based) and `T` tasks, the advantage of step `t` is
//!
//! ```text
//! v_1 = 1 - Var{ M(1, j) : j = 2..T }          (population variance)
//! v_t = M(t, t - 1)            for 1 < t <= floor(T / 2)
//! v_t = 1 - M(t, T - t + 1)    for floor(T / 2) < t <= T
//! ```
//!
//! and a curriculum's score is `s = v_1 + ... + v_T`. For odd `T` the middle
//! step pairs a position with itself, so it always contributes exactly 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::{enumerate_curricula, factorial, Curriculum, TaskSpec};
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// Default cap on the number of enumerated curricula (10!).
pub const DEFAULT_ENUMERATION_LIMIT: usize = 3_628_800;

/// Per-step advantages of one curriculum and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBreakdown {
    pub v: Vec<f64>,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSource {
    Designer,
    Empirical,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub curriculum: Curriculum,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantages: Option<Vec<f64>>,
}

/// Curricula sorted by score, highest first.
///
/// Equal scores keep the canonical (enumeration) order they were given in,
/// which is lexicographic order of the task-index permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCurricula {
    pub source: RankSource,
    pub entries: Vec<RankedEntry>,
}

impl RankedCurricula {
    /// Sorts entries given in canonical order by descending score.
    pub fn from_canonical(source: RankSource, mut entries: Vec<RankedEntry>) -> Self {
        // stable: ties stay in canonical order
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        RankedCurricula { source, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn curricula(&self) -> impl Iterator<Item = &Curriculum> {
        self.entries.iter().map(|e| &e.curriculum)
    }

    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn check_order(order: &[usize], d: &DistanceMatrix) -> Result<()> {
    if !d.normalized {
        return Err(Error::NotNormalized);
    }
    if order.len() < 2 {
        return Err(Error::TooFewTasks {
            min: 2,
            found: order.len(),
        });
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= d.n) {
        return Err(Error::ClassOutOfRange {
            class: bad,
            n_classes: d.n,
        });
    }
    Ok(())
}

/// Advantage of 1-based `step` for the curriculum whose matrix indices, in
/// presentation order, are `order`.
pub fn advantage_of_order(step: usize, order: &[usize], d: &DistanceMatrix) -> Result<f64> {
    check_order(order, d)?;
    let len = order.len();
    if step == 0 || step > len {
        return Err(Error::StepOutOfRange { step, len });
    }
    Ok(advantage_unchecked(step, order, d))
}

fn advantage_unchecked(step: usize, order: &[usize], d: &DistanceMatrix) -> f64 {
    let len = order.len();
    // 1-based curriculum positions, as in the piecewise rule
    let m = |i: usize, j: usize| d.get(order[i - 1], order[j - 1]);
    if step == 1 {
        let first_row: Vec<f64> = (2..=len).map(|j| m(1, j)).collect();
        1.0 - population_variance(&first_row)
    } else if step <= len / 2 {
        m(step, step - 1)
    } else {
        1.0 - m(step, len - step + 1)
    }
}

/// Scores an order of matrix indices: `s` accumulated step by step.
pub fn score_order(order: &[usize], d: &DistanceMatrix) -> Result<AdvantageBreakdown> {
    check_order(order, d)?;
    let mut v = Vec::with_capacity(order.len());
    let mut s = 0.0;
    for step in 1..=order.len() {
        let a = advantage_unchecked(step, order, d);
        s += a;
        v.push(a);
    }
    Ok(AdvantageBreakdown { v, s })
}

/// Matrix index of each task of `c`, where `tasks[i]` owns row `i` of `d`.
pub fn matrix_order(c: &Curriculum, tasks: &[TaskSpec]) -> Result<Vec<usize>> {
    c.order_in(tasks).ok_or(Error::UniverseMismatch)
}

/// Advantage of 1-based `step` for curriculum `c`.
pub fn advantage(step: usize, c: &Curriculum, tasks: &[TaskSpec], d: &DistanceMatrix) -> Result<f64> {
    advantage_of_order(step, &matrix_order(c, tasks)?, d)
}

pub fn score_curriculum(c: &Curriculum, tasks: &[TaskSpec], d: &DistanceMatrix) -> Result<AdvantageBreakdown> {
    score_order(&matrix_order(c, tasks)?, d)
}

/// Scores every ordering of `tasks` and ranks them by descending score.
///
/// `tasks[i]` must correspond to row `i` of `d` (class prototypes for
/// single-class tasks, task prototypes otherwise).
pub fn rank_all(tasks: &[TaskSpec], d: &DistanceMatrix, limit: usize) -> Result<RankedCurricula> {
    if tasks.len() != d.n {
        return Err(Error::DimensionMismatch {
            expected: d.n,
            found: tasks.len(),
        });
    }
    match factorial(tasks.len()) {
        Some(count) if count <= limit => {}
        _ => {
            return Err(Error::EnumerationLimit {
                tasks: tasks.len(),
                limit,
            })
        }
    }
    let curricula = enumerate_curricula(tasks)?;
    let entries = curricula
        .into_par_iter()
        .map(|c| {
            let b = score_curriculum(&c, tasks, d)?;
            Ok(RankedEntry {
                curriculum: c,
                score: b.s,
                advantages: Some(b.v),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankedCurricula::from_canonical(RankSource::Designer, entries))
}

/// Uniformly random ranking of `curricula`, reproducible from `seed`.
///
/// Scores are rank positions counted from the bottom, so the first entry
/// scores `n` and the last scores `1`.
pub fn random_rank(curricula: &[Curriculum], seed: u64) -> Result<RankedCurricula> {
    if curricula.is_empty() {
        return Err(Error::EmptyInput("curricula"));
    }
    let mut order: Vec<usize> = (0..curricula.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let entries = order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| RankedEntry {
            curriculum: curricula[i].clone(),
            score: (n - pos) as f64,
            advantages: None,
        })
        .collect();
    Ok(RankedCurricula {
        source: RankSource::Random,
        entries,
    })
}
