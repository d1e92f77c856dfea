//! Effectiveness of a single run (alpha, beta, F), agreement between
//! curriculum rankings (Recall@K, tiers, discrepancy H, Spearman) and the
//! two-sample t-test used to compare top and bottom curricula.

mod agreement;
mod effectiveness;
mod stats;

pub use agreement::{
    discrepancy_h, discrepancy_h_sets, interleave_concat, recall_at_k, spearman, tier_partition, TierPartition,
    DEFAULT_TIERS,
};
pub use effectiveness::{
    alpha_beta, effectiveness, f_over_time, overfitting_accuracy, random_accuracy, FOverTime, F_DENOMINATOR_FLOOR,
};
pub use stats::{ln_gamma, regularized_incomplete_beta, student_t_two_sided, two_sample_ttest, TTest, TTestKind};
