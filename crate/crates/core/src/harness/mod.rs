//! Config-driven experiments: data, prototypes, designer and random
//! rankings, learner runs over every curriculum, and the analysis report.

mod analysis;
mod config;
mod pipeline;

pub use analysis::{
    analyze, build_report, records_digest, verify_report, write_csv_exports, AgreementTable, CurriculumStats,
    DesignerSummary, ExperimentReport, MeanCurves, PairValue, Provenance, RecallCurve, ReportBody, StrategySummary,
    TopBottom,
};
pub use config::{DatasetConfig, DesignerConfig, ExperimentConfig, ExperimentSettings, LearnerConfig, Paradigm};
pub use pipeline::{
    build_prototypes, canonicalize, prepare, prepare_with, random_designers, read_records, run_experiment,
    write_records, ExperimentOutcome, Prepared, PrototypeSet, RunFailure, RunId, RunOptions, FAILURES_FILE,
    PARTIAL_FILE, RECORDS_FILE,
};
