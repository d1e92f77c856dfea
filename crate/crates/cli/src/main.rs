use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use curforge::data::{write_feature_csv, DataSource, DatasetManifest};
use curforge::harness::{
    build_report, prepare, read_records, run_experiment, verify_report, write_csv_exports, ExperimentConfig,
    ExperimentReport, RunOptions, RECORDS_FILE,
};

const DEFAULT_CONFIG: &str = "[learner.vanilla]\n";

#[derive(Parser)]
#[command(name = "curforge", version, about = "Rank and evaluate class-incremental curricula")]
struct Cli {
    /// Experiment config (TOML). Without one, the hub-twin preset and a
    /// vanilla learner are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for the learner runs.
    #[arg(long, global = true, env = "CURFORGE_WORKERS")]
    workers: Option<usize>,

    /// Output directory; overrides `experiment.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dataset preset; overrides the config's dataset source.
    #[arg(long, global = true)]
    preset: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset as a feature CSV plus JSON manifest.
    Gen,
    /// Compute class prototypes and the distance matrix.
    Prototypes,
    /// Score and rank every curriculum with the designer.
    Rank,
    /// Train every learner on every curriculum and seed.
    Run {
        /// Skip runs already present in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop at the first failed run.
        #[arg(long)]
        fail_fast: bool,
    },
    /// Compute the metrics report from stored run records.
    Analyze {
        /// Check the stored report against a recomputation instead of
        /// writing a new one.
        #[arg(long)]
        verify: bool,
        /// Records file; defaults to the one in the output directory.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Export plot-ready CSV tables from the report.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::from_toml_str(DEFAULT_CONFIG)?,
    };
    if let Some(p) = &cli.preset {
        cfg.dataset.preset = Some(p.clone());
        cfg.dataset.spec = None;
        cfg.dataset.csv = None;
    }
    if let Some(out) = &cli.out {
        cfg.experiment.out = out.clone();
        if out.is_relative() {
            // flags are relative to the working directory, not the config
            cfg.experiment.out = std::env::current_dir()?.join(out);
        }
    }
    if cli.workers.is_some() {
        cfg.experiment.workers = cli.workers;
    }
    if cfg.experiment.workers == Some(0) {
        bail!("workers must be positive");
    }
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn records_path(cfg: &ExperimentConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out_dir().join(RECORDS_FILE))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Gen => {
            let data = cfg.dataset.resolve(&cfg.base_dir)?;
            let csv = out.join("features.csv");
            write_feature_csv(&data, &csv)?;
            let manifest = DatasetManifest {
                source: match data.manifest.source {
                    s @ DataSource::Synthetic { .. } => s,
                    DataSource::File { .. } => DataSource::File { path: csv.clone() },
                },
                ..data.manifest
            };
            manifest.write(&out.join("features.json"))?;
            eprintln!("wrote {} and features.json", csv.display());
        }
        Command::Prototypes => {
            let prep = prepare(&cfg)?;
            write_json(&out.join("prototypes.json"), &prep.prototypes.tasks)?;
            write_json(&out.join("distance.json"), &prep.prototypes.distance)?;
            println!("{}", serde_json::to_string_pretty(&prep.prototypes.distance)?);
        }
        Command::Rank => {
            let prep = prepare(&cfg)?;
            write_json(&out.join("ranking.json"), &prep.designer.entries)?;
            println!("{}", serde_json::to_string_pretty(&prep.designer.entries)?);
        }
        Command::Run { resume, fail_fast } => {
            let prep = prepare(&cfg)?;
            let opts = RunOptions {
                workers: cfg.experiment.workers,
                resume,
                fail_fast: fail_fast || cfg.experiment.fail_fast,
                out: Some(out.clone()),
            };
            let outcome = run_experiment(&cfg, &prep, &opts)?;
            eprintln!("{} runs recorded in {}", outcome.records.len(), out.join(RECORDS_FILE).display());
            if !outcome.failures.is_empty() {
                for f in &outcome.failures {
                    eprintln!("failed: {} {} seed {}: {}", f.strategy, f.curriculum, f.seed, f.error);
                }
                bail!("{} runs failed", outcome.failures.len());
            }
        }
        Command::Analyze { verify, records } => {
            let path = records_path(&cfg, &records);
            let recs = read_records(&path).with_context(|| format!("reading {}", path.display()))?;
            let prep = prepare(&cfg)?;
            let report_path = out.join("report.json");
            if verify {
                let text = fs::read_to_string(&report_path)
                    .with_context(|| format!("reading {}", report_path.display()))?;
                let report: ExperimentReport = serde_json::from_str(&text)?;
                verify_report(&report, &cfg, &prep.curricula, &prep.designer, &recs)?;
                eprintln!("report matches {} records", recs.len());
            } else {
                let report = build_report(&cfg, &prep.curricula, &prep.designer, &recs)?;
                write_json(&report_path, &report)?;
                eprintln!("wrote {}", report_path.display());
            }
        }
        Command::Report { records } => {
            let path = records_path(&cfg, &records);
            let recs = read_records(&path).with_context(|| format!("reading {}", path.display()))?;
            let prep = prepare(&cfg)?;
            let report = build_report(&cfg, &prep.curricula, &prep.designer, &recs)?;
            let dir = out.join("csv");
            for f in write_csv_exports(&report, &recs, &dir)? {
                println!("{}", dir.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut stderr = std::io::stderr().lock();
            let _ = writeln!(stderr, "error: {e:#}");
            ExitCode::from(1)
        }
    }
}
