//! Curriculum ranking and evaluation for online class-incremental learning.
//!
//! * [`curriculum`]: tasks, curricula, accuracy matrices and run records.
//! * [`distance`]: class prototypes and the prototype distance matrix.
//! * [`designer`]: the Curriculum Designer score and rankings.
//! * [`learner`]: linear-head continual learners trained on frozen features.
//! * [`metrics`]: alpha/beta/F, Recall@K, tiers, discrepancy H, Spearman, t-tests.
//! * [`data`]: synthetic feature datasets and CSV ingestion.
//! * [`harness`]: config-driven experiments and reports.

pub mod curriculum;
pub mod data;
pub mod designer;
pub mod distance;
mod error;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod seed;

pub use error::{CsvFault, Error, Result};
