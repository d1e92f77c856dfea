use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::curriculum::{enumerate_curricula, Curriculum, RunRecord, TaskSpec};
use crate::data::Dataset;
use crate::designer::{random_rank, rank_all, RankedCurricula, DEFAULT_ENUMERATION_LIMIT};
use crate::distance::{build_distance_matrix, compute_prototype, task_prototype, DistanceMatrix, Prototype};
use crate::error::{Error, Result};
use crate::learner::{run_curriculum, RunSeeds};
use crate::seed::{mix, str_key};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const PARTIAL_FILE: &str = "records.partial.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

/// Class prototypes, task prototypes and their distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub classes: Vec<Prototype>,
    /// One per base task, in base-task order.
    pub tasks: Vec<Prototype>,
    pub distance: DistanceMatrix,
}

pub fn build_prototypes(cfg: &ExperimentConfig, dataset: &Dataset, tasks: &[TaskSpec]) -> Result<PrototypeSet> {
    let d = &cfg.designer;
    let classes = dataset
        .train
        .iter()
        .enumerate()
        .map(|(c, feats)| {
            let size = if d.sample_size == 0 { feats.len() } else { d.sample_size };
            compute_prototype(c, feats, size, mix(&[d.seed, c as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    let task_protos = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let members: Vec<Prototype> = t.classes.iter().map(|c| classes[c.0].clone()).collect();
            task_prototype(i, &members)
        })
        .collect::<Result<Vec<_>>>()?;
    let distance = build_distance_matrix(&task_protos, d.metric, d.normalize)?;
    Ok(PrototypeSet {
        classes,
        tasks: task_protos,
        distance,
    })
}

/// Everything the runs and the analysis share.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub tasks: Vec<TaskSpec>,
    /// Every curriculum in canonical (enumeration) order.
    pub curricula: Vec<Curriculum>,
    pub prototypes: PrototypeSet,
    pub designer: RankedCurricula,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dataset = cfg.dataset.resolve(&cfg.base_dir)?;
    prepare_with(cfg, dataset)
}

pub fn prepare_with(cfg: &ExperimentConfig, dataset: Dataset) -> Result<Prepared> {
    let tasks = cfg.experiment.paradigm.tasks(dataset.n_classes());
    let curricula = enumerate_curricula(&tasks)?;
    if let Some(c) = curricula.first() {
        crate::curriculum::validate_curriculum(c, dataset.n_classes())?;
    }
    let prototypes = build_prototypes(cfg, &dataset, &tasks)?;
    let designer = rank_all(&tasks, &prototypes.distance, DEFAULT_ENUMERATION_LIMIT)?;
    Ok(Prepared {
        dataset,
        tasks,
        curricula,
        prototypes,
        designer,
    })
}

/// The `r`-th seeded random designer.
pub fn random_designers(cfg: &ExperimentConfig, curricula: &[Curriculum]) -> Result<Vec<RankedCurricula>> {
    (0..cfg.experiment.random_repeats)
        .into_par_iter()
        .map(|r| random_rank(curricula, mix(&[cfg.experiment.master_seed, str_key("random"), r as u64])))
        .collect()
}

/// Identity of a run: indices into the canonical curricula, the strategy
/// names and the seed list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunId {
    pub curriculum: usize,
    pub strategy: usize,
    pub seed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub curriculum: Curriculum,
    pub strategy: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub resume: bool,
    pub fail_fast: bool,
    /// Where partial and final records go; `None` keeps everything in memory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Successful runs in canonical order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

struct Indexer<'a> {
    curricula: HashMap<&'a Curriculum, usize>,
    strategies: HashMap<&'a str, usize>,
    seeds: HashMap<u64, usize>,
}

impl<'a> Indexer<'a> {
    fn new(cfg: &'a ExperimentConfig, curricula: &'a [Curriculum]) -> Self {
        Indexer {
            curricula: curricula.iter().enumerate().map(|(i, c)| (c, i)).collect(),
            strategies: cfg.strategy_names().into_iter().enumerate().map(|(i, s)| (s, i)).collect(),
            seeds: cfg.experiment.seeds.iter().enumerate().map(|(i, &s)| (s, i)).collect(),
        }
    }

    fn id(&self, r: &RunRecord) -> Option<RunId> {
        Some(RunId {
            curriculum: *self.curricula.get(&r.curriculum)?,
            strategy: *self.strategies.get(r.strategy.as_str())?,
            seed: *self.seeds.get(&r.seed)?,
        })
    }
}

/// Parses JSON lines, skipping a torn final line left by an interrupted
/// writer.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Sorts `records` into canonical run order and drops runs the config does
/// not describe.
pub fn canonicalize(cfg: &ExperimentConfig, curricula: &[Curriculum], records: Vec<RunRecord>) -> Vec<RunRecord> {
    let idx = Indexer::new(cfg, curricula);
    let mut keyed: Vec<(RunId, RunRecord)> = records.into_iter().filter_map(|r| Some((idx.id(&r)?, r))).collect();
    keyed.sort_by_key(|(id, _)| *id);
    keyed.dedup_by_key(|(id, _)| *id);
    keyed.into_iter().map(|(_, r)| r).collect()
}

/// Runs every (curriculum, strategy, seed) triple once.
///
/// Runs are spread over a work-stealing pool. Each completed run is appended
/// to the partial file as soon as it finishes; with `resume`, runs already
/// there (or in a previous final file) are skipped. The final record file is
/// written in canonical order, so its bytes do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, prep: &Prepared, opts: &RunOptions) -> Result<ExperimentOutcome> {
    let names = cfg.strategy_names();
    let seeds = &cfg.experiment.seeds;
    let idx = Indexer::new(cfg, &prep.curricula);

    let mut done: Vec<RunRecord> = Vec::new();
    let partial_path = opts.out.as_ref().map(|o| o.join(PARTIAL_FILE));
    if let Some(out) = &opts.out {
        fs::create_dir_all(out)?;
        if opts.resume {
            for p in [out.join(RECORDS_FILE), out.join(PARTIAL_FILE)] {
                if p.exists() {
                    done.extend(read_records(&p)?);
                }
            }
        }
    }
    let finished: HashSet<RunId> = done.iter().filter_map(|r| idx.id(r)).collect();

    let partial = match &partial_path {
        Some(p) => {
            // rewrite what we keep so a torn tail never precedes new lines
            let kept = canonicalize(cfg, &prep.curricula, done.clone());
            write_records(p, &kept)?;
            Some(Mutex::new(BufWriter::new(OpenOptions::new().append(true).open(p)?)))
        }
        None => None,
    };

    let mut jobs = Vec::new();
    for ci in 0..prep.curricula.len() {
        for si in 0..names.len() {
            for ki in 0..seeds.len() {
                let id = RunId {
                    curriculum: ci,
                    strategy: si,
                    seed: ki,
                };
                if !finished.contains(&id) {
                    jobs.push(id);
                }
            }
        }
    }

    let stop = AtomicBool::new(false);
    let work = || -> Vec<(RunId, Result<RunRecord>)> {
        jobs.par_iter()
            .filter_map(|&id| {
                if stop.load(Ordering::Relaxed) {
                    return None;
                }
                let name = names[id.strategy];
                let learner = &cfg.learner[name];
                let run_seeds = RunSeeds {
                    seed: seeds[id.seed],
                    stream: mix(&[
                        cfg.experiment.master_seed,
                        id.curriculum as u64,
                        str_key(name),
                        id.seed as u64,
                    ]),
                };
                let result = run_curriculum(
                    &prep.dataset,
                    &prep.curricula[id.curriculum],
                    name,
                    &learner.strategy,
                    &learner.train,
                    run_seeds,
                )
                .and_then(|r| {
                    if let Some(w) = &partial {
                        let mut w = w.lock().expect("partial writer poisoned");
                        serde_json::to_writer(&mut *w, &r)?;
                        w.write_all(b"\n")?;
                        w.flush()?;
                    }
                    Ok(r)
                });
                if result.is_err() && opts.fail_fast {
                    stop.store(true, Ordering::Relaxed);
                }
                Some((id, result))
            })
            .collect()
    };
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut failures = Vec::new();
    let mut first_error = None;
    let mut records = done;
    for (id, result) in results {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                failures.push(RunFailure {
                    curriculum: prep.curricula[id.curriculum].clone(),
                    strategy: names[id.strategy].to_string(),
                    seed: seeds[id.seed],
                    error: e.to_string(),
                });
                first_error.get_or_insert((id, e));
            }
        }
    }
    failures.sort_by(|a, b| (&a.curriculum, &a.strategy, a.seed).cmp(&(&b.curriculum, &b.strategy, b.seed)));
    let records = canonicalize(cfg, &prep.curricula, records);

    if let Some(out) = &opts.out {
        drop(partial);
        let fail_path = out.join(FAILURES_FILE);
        if failures.is_empty() {
            if fail_path.exists() {
                fs::remove_file(&fail_path)?;
            }
        } else {
            let mut w = BufWriter::new(File::create(&fail_path)?);
            for f in &failures {
                serde_json::to_writer(&mut w, f)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        if !(opts.fail_fast && first_error.is_some()) {
            write_records(&out.join(RECORDS_FILE), &records)?;
            if failures.is_empty() {
                fs::remove_file(out.join(PARTIAL_FILE))?;
            }
        }
    }
    if opts.fail_fast {
        if let Some((_, e)) = first_error {
            return Err(e);
        }
    }
    Ok(ExperimentOutcome { records, failures })
}
