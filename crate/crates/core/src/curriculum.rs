//! Classes, tasks, curricula and run records.
//!
//! A curriculum is an ordered list of tasks that together cover every class
//! exactly once. Curricula are produced by permuting a base list of tasks;
//! the enumeration index of a permutation doubles as its canonical tie-break
//! key because [`enumerate_curricula`] yields permutations in lexicographic
//! order of their task-index sequences.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a dataset's class list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One step of a class-incremental sequence: the classes trained together.
///
/// Class order inside a task is fixed as given.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskSpec {
    pub classes: Vec<ClassId>,
}

impl TaskSpec {
    pub fn new(classes: impl IntoIterator<Item = usize>) -> Self {
        TaskSpec {
            classes: classes.into_iter().map(ClassId).collect(),
        }
    }

    pub fn single(class: usize) -> Self {
        TaskSpec::new([class])
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.classes.contains(&class)
    }
}

/// Paradigm-I task list: one task per class, in class order.
pub fn one_class_tasks(n_classes: usize) -> Vec<TaskSpec> {
    (0..n_classes).map(TaskSpec::single).collect()
}

/// Temporal order of task presentation.
///
/// Serializes as an array of arrays of class ids, e.g. `[[0],[2],[1]]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curriculum {
    pub tasks: Vec<TaskSpec>,
}

impl Curriculum {
    pub fn new(tasks: Vec<TaskSpec>) -> Self {
        Curriculum { tasks }
    }

    /// Builds the curriculum that presents `base[order[0]]`, `base[order[1]]`, ...
    pub fn from_order(base: &[TaskSpec], order: &[usize]) -> Self {
        Curriculum {
            tasks: order.iter().map(|&i| base[i].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.tasks.iter().map(TaskSpec::len).sum()
    }

    /// Classes in presentation order, task by task.
    pub fn class_sequence(&self) -> Vec<ClassId> {
        self.tasks.iter().flat_map(|t| t.classes.iter().copied()).collect()
    }

    /// Number of classes in each task, in presentation order.
    pub fn task_sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(TaskSpec::len).collect()
    }

    /// Recovers the task-index permutation relative to `base`, if every task
    /// of this curriculum appears in `base`.
    pub fn order_in(&self, base: &[TaskSpec]) -> Option<Vec<usize>> {
        self.tasks
            .iter()
            .map(|t| base.iter().position(|b| b == t))
            .collect()
    }
}

impl fmt::Display for Curriculum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match curriculum_to_string(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => {
                let parts: Vec<String> = self
                    .tasks
                    .iter()
                    .map(|t| {
                        let ids: Vec<String> = t.classes.iter().map(|c| c.to_string()).collect();
                        format!("({})", ids.join(","))
                    })
                    .collect();
                f.write_str(&parts.join(""))
            }
        }
    }
}

fn check_disjoint(tasks: &[TaskSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, task) in tasks.iter().enumerate() {
        if task.is_empty() {
            return Err(Error::EmptyTask(i));
        }
        for &c in &task.classes {
            if !seen.insert(c) {
                return Err(Error::DuplicateClass(c.0));
            }
        }
    }
    Ok(())
}

/// Calls `visit` with every permutation of `0..n` in lexicographic order.
pub(crate) fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        visit(&perm);
        // next lexicographic permutation
        let Some(pivot) = (1..n).rev().find(|&i| perm[i - 1] < perm[i]).map(|i| i - 1) else {
            return;
        };
        let succ = (pivot + 1..n).rev().find(|&j| perm[j] > perm[pivot]).unwrap();
        perm.swap(pivot, succ);
        perm[pivot + 1..].reverse();
    }
}

pub(crate) fn factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// All `|tasks|!` orderings of `tasks`, lexicographic in task index.
pub fn enumerate_curricula(tasks: &[TaskSpec]) -> Result<Vec<Curriculum>> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    check_disjoint(tasks)?;
    let mut out = Vec::with_capacity(factorial(tasks.len()).unwrap_or(0));
    for_each_permutation(tasks.len(), |perm| out.push(Curriculum::from_order(tasks, perm)));
    Ok(out)
}

/// Checks every curriculum invariant against a dataset of `n_classes`.
pub fn validate_curriculum(c: &Curriculum, n_classes: usize) -> Result<()> {
    check_disjoint(&c.tasks)?;
    for &class in c.tasks.iter().flat_map(|t| &t.classes) {
        if class.0 >= n_classes {
            return Err(Error::ClassOutOfRange {
                class: class.0,
                n_classes,
            });
        }
    }
    let covered: HashSet<ClassId> = c.class_sequence().into_iter().collect();
    if let Some(missing) = (0..n_classes).find(|&k| !covered.contains(&ClassId(k))) {
        return Err(Error::MissingClass(missing));
    }
    if c.len() < 2 {
        return Err(Error::TooFewTasks {
            min: 2,
            found: c.len(),
        });
    }
    Ok(())
}

/// Letter encoding: class k becomes the k-th uppercase letter, emitted in
/// presentation order.
pub fn curriculum_to_string(c: &Curriculum) -> Result<String> {
    let seq = c.class_sequence();
    let max = seq.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    if seq.len() > 26 || max > 26 {
        return Err(Error::UnsupportedSize(seq.len().max(max)));
    }
    Ok(seq.iter().map(|c| (b'A' + c.0 as u8) as char).collect())
}

/// Inverse of [`curriculum_to_string`] given the task shape (classes per task).
pub fn curriculum_from_string(s: &str, task_sizes: &[usize]) -> Result<Curriculum> {
    let bad = || Error::BadCurriculumString(s.to_string());
    if task_sizes.iter().sum::<usize>() != s.len() {
        return Err(bad());
    }
    let mut classes = s.bytes().map(|b| match b {
        b'A'..=b'Z' => Ok(ClassId((b - b'A') as usize)),
        _ => Err(bad()),
    });
    let mut tasks = Vec::with_capacity(task_sizes.len());
    for &size in task_sizes {
        let task: Result<Vec<ClassId>> = classes.by_ref().take(size).collect();
        tasks.push(TaskSpec { classes: task? });
    }
    Ok(Curriculum::new(tasks))
}

/// Lower-triangular accuracy table: row `t` holds accuracies on the test
/// sets of tasks `0..=t` measured after training task `t`.
///
/// Undefined entries (j > t) are not stored at all.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a matrix from ragged rows, checking shape and range.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut acc = AccuracyMatrix::new();
        for row in rows {
            acc.push_row(row)?;
        }
        Ok(acc)
    }

    /// Appends the row for the next task; it must have exactly one more
    /// entry than the previous row.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let expected = self.rows.len() + 1;
        if row.len() != expected {
            return Err(Error::LengthMismatch(expected, row.len()));
        }
        if let Some(&bad) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::OutOfRange {
                what: "accuracy",
                value: bad,
                range: "[0, 1]",
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Number of completed tasks.
    pub fn n_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.rows.get(row).and_then(|r| r.get(col)).copied()
    }

    pub fn row(&self, t: usize) -> Option<&[f64]> {
        self.rows.get(t).map(Vec::as_slice)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// One learner run over one curriculum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub curriculum: Curriculum,
    pub strategy: String,
    pub seed: u64,
    pub acc: AccuracyMatrix,
    pub alpha: f64,
    pub beta: f64,
    pub f: f64,
}

impl RunRecord {
    /// Derives alpha, beta and F from the final row of `acc`.
    pub fn new(curriculum: Curriculum, strategy: String, seed: u64, acc: AccuracyMatrix) -> Result<Self> {
        let last = acc
            .n_tasks()
            .checked_sub(1)
            .ok_or(Error::EmptyInput("accuracy matrix"))?;
        let (alpha, beta) = crate::metrics::alpha_beta(&acc, last, &curriculum.task_sizes())?;
        let f = crate::metrics::effectiveness(alpha, beta)?;
        Ok(RunRecord {
            curriculum,
            strategy,
            seed,
            acc,
            alpha,
            beta,
            f,
        })
    }

    /// Recomputes alpha, beta and F from the stored accuracies and reports
    /// whether they match the stored values exactly.
    pub fn is_consistent(&self) -> bool {
        let Some(last) = self.acc.n_tasks().checked_sub(1) else {
            return false;
        };
        let Ok((alpha, beta)) = crate::metrics::alpha_beta(&self.acc, last, &self.curriculum.task_sizes()) else {
            return false;
        };
        let Ok(f) = crate::metrics::effectiveness(alpha, beta) else {
            return false;
        };
        alpha == self.alpha && beta == self.beta && f == self.f
    }
}
