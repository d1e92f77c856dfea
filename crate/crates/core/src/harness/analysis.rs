use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::pipeline::random_designers;
use crate::curriculum::{Curriculum, RunRecord};
use crate::designer::{RankSource, RankedCurricula, RankedEntry};
use crate::error::{Error, Result};
use crate::metrics::{
    discrepancy_h, f_over_time, recall_at_k, spearman, tier_partition, two_sample_ttest, TTest, TierPartition,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStats {
    pub curriculum: Curriculum,
    /// Means over seeds.
    pub f: f64,
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    /// 1-based tier, 1 lowest.
    pub tier: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopBottom {
    pub k: usize,
    pub top_mean: f64,
    pub bottom_mean: f64,
    #[serde(flatten)]
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurves {
    pub f: Vec<f64>,
    pub random: Vec<f64>,
    pub overfitting: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub name: String,
    /// Best first; ties in canonical order.
    pub ranking: Vec<CurriculumStats>,
    pub tier_bounds: Vec<f64>,
    pub top_tier_size: usize,
    pub mean_f: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub ttest: TopBottom,
    pub f_over_time: MeanCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignerSummary {
    pub ranking: Vec<RankedEntry>,
    pub tier_bounds: Vec<f64>,
    pub top_tier_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub k: Vec<usize>,
    pub designer: Vec<f64>,
    pub random_mean: Vec<f64>,
    pub random_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub a: String,
    pub b: String,
    pub value: f64,
}

/// One agreement statistic between algorithms, against the designer and
/// against random designers (averaged over repeats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub between_algorithms: Vec<PairValue>,
    pub algorithm_designer: Vec<PairValue>,
    pub algorithm_random: Vec<PairValue>,
    /// `None` when the group is empty.
    pub mean_between_algorithms: Option<f64>,
    pub mean_algorithm_designer: Option<f64>,
    pub mean_algorithm_random: Option<f64>,
}

/// Everything `analyze` derives from the run records; a pure function of
/// the records, the designer ranking and the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub n_records: usize,
    pub n_curricula: usize,
    pub tiers: usize,
    pub random_repeats: usize,
    pub agreement_strategies: Vec<String>,
    pub strategies: Vec<StrategySummary>,
    pub designer: DesignerSummary,
    pub recall_at_k: RecallCurve,
    pub discrepancy: AgreementTable,
    pub spearman: AgreementTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub records_sha256: String,
    pub version: String,
    pub created: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub body: ReportBody,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn tier_index(p: &TierPartition) -> HashMap<&Curriculum, usize> {
    p.tiers
        .iter()
        .enumerate()
        .flat_map(|(i, t)| t.iter().map(move |(c, _)| (c, i + 1)))
        .collect()
}

fn ordered(r: &RankedCurricula) -> Vec<Curriculum> {
    r.curricula().cloned().collect()
}

/// F, random-baseline and overfitting-baseline curves of one run.
type Curve = (Vec<f64>, Vec<f64>, Vec<f64>);

fn summarize_strategy(
    name: &str,
    curricula: &[Curriculum],
    by_curriculum: &HashMap<&Curriculum, Vec<&RunRecord>>,
    cfg: &ExperimentConfig,
) -> Result<(StrategySummary, RankedCurricula)> {
    let missing = curricula.iter().filter(|c| !by_curriculum.contains_key(c)).count();
    if missing > 0 {
        return Err(Error::IncompleteRecords {
            strategy: name.to_string(),
            missing,
        });
    }
    let mut stats = Vec::with_capacity(curricula.len());
    let mut curves: Vec<Curve> = Vec::new();
    for c in curricula {
        let runs = &by_curriculum[c];
        let fs: Vec<f64> = runs.iter().map(|r| r.f).collect();
        let alphas: Vec<f64> = runs.iter().map(|r| r.alpha).collect();
        let betas: Vec<f64> = runs.iter().map(|r| r.beta).collect();
        for r in runs {
            let f = f_over_time(&r.acc, &c.task_sizes())?;
            curves.push((f.f, f.random, f.overfitting));
        }
        stats.push((c.clone(), mean(&fs), mean(&alphas), mean(&betas), runs.len()));
    }
    let pairs: Vec<(Curriculum, f64)> = stats.iter().map(|s| (s.0.clone(), s.1)).collect();
    let partition = tier_partition(&pairs, cfg.experiment.tiers)?;
    let tiers = tier_index(&partition);
    let ranked = RankedCurricula::from_canonical(
        RankSource::Empirical,
        pairs
            .iter()
            .map(|(c, f)| RankedEntry {
                curriculum: c.clone(),
                score: *f,
                advantages: None,
            })
            .collect(),
    );
    let by_c: HashMap<&Curriculum, &(Curriculum, f64, f64, f64, usize)> = stats.iter().map(|s| (&s.0, s)).collect();
    let ranking: Vec<CurriculumStats> = ranked
        .curricula()
        .map(|c| {
            let s = by_c[c];
            CurriculumStats {
                curriculum: c.clone(),
                f: s.1,
                alpha: s.2,
                beta: s.3,
                runs: s.4,
                tier: tiers[c],
            }
        })
        .collect();

    let n = ranking.len();
    let k = cfg.experiment.ttest_k.min(n / 2);
    if k < 2 {
        return Err(Error::EmptyInput("curricula for the top/bottom t-test"));
    }
    let top: Vec<f64> = ranking[..k].iter().map(|s| s.f).collect();
    let bottom: Vec<f64> = ranking[n - k..].iter().map(|s| s.f).collect();
    let test = two_sample_ttest(&top, &bottom, cfg.experiment.ttest)?;

    let steps = curves.iter().map(|c| c.0.len()).max().unwrap_or(0);
    let avg = |pick: fn(&Curve) -> &Vec<f64>| -> Vec<f64> {
        (0..steps)
            .map(|t| mean(&curves.iter().filter_map(|c| pick(c).get(t).copied()).collect::<Vec<_>>()))
            .collect()
    };
    let fs: Vec<f64> = ranking.iter().map(|s| s.f).collect();
    let summary = StrategySummary {
        name: name.to_string(),
        top_tier_size: partition.top().len(),
        tier_bounds: partition.bounds.clone(),
        mean_f: mean(&stats.iter().map(|s| s.1).collect::<Vec<_>>()),
        f_min: fs.iter().copied().fold(f64::INFINITY, f64::min),
        f_max: fs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ttest: TopBottom {
            k,
            top_mean: mean(&top),
            bottom_mean: mean(&bottom),
            test,
        },
        f_over_time: MeanCurves {
            f: avg(|c| &c.0),
            random: avg(|c| &c.1),
            overfitting: avg(|c| &c.2),
        },
        ranking,
    };
    Ok((summary, ranked))
}

/// Computes the report body from run records.
///
/// `curricula` is the canonical universe and `designer` the designer's
/// ranking of it. Every configured strategy needs at least one record per
/// curriculum.
pub fn analyze(
    cfg: &ExperimentConfig,
    curricula: &[Curriculum],
    designer: &RankedCurricula,
    records: &[RunRecord],
) -> Result<ReportBody> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records"));
    }
    let mut grouped: HashMap<&str, HashMap<&Curriculum, Vec<&RunRecord>>> = HashMap::new();
    for r in records {
        grouped
            .entry(r.strategy.as_str())
            .or_default()
            .entry(&r.curriculum)
            .or_default()
            .push(r);
    }
    let empty = HashMap::new();
    let mut strategies = Vec::new();
    let mut rankings: HashMap<String, (RankedCurricula, usize)> = HashMap::new();
    for name in cfg.strategy_names() {
        let (summary, ranked) = summarize_strategy(name, curricula, grouped.get(name).unwrap_or(&empty), cfg)?;
        rankings.insert(name.to_string(), (ranked, summary.top_tier_size));
        strategies.push(summary);
    }

    let d_pairs: Vec<(Curriculum, f64)> = designer.entries.iter().map(|e| (e.curriculum.clone(), e.score)).collect();
    let d_part = tier_partition(&d_pairs, cfg.experiment.tiers)?;
    let designer_summary = DesignerSummary {
        ranking: designer.entries.clone(),
        tier_bounds: d_part.bounds.clone(),
        top_tier_size: d_part.top().len(),
    };
    let randoms = random_designers(cfg, curricula)?;

    let agree: Vec<&str> = cfg.agreement_names();
    let empirical: Vec<RankedCurricula> = agree.iter().map(|a| rankings[*a].0.clone()).collect();
    let ks: Vec<usize> = (1..=cfg.experiment.k_max.min(curricula.len())).collect();
    let mut recall = RecallCurve {
        k: ks.clone(),
        designer: Vec::new(),
        random_mean: Vec::new(),
        random_std: Vec::new(),
    };
    for &k in &ks {
        recall.designer.push(recall_at_k(designer, &empirical, k)?);
        let rs = randoms
            .iter()
            .map(|r| recall_at_k(r, &empirical, k))
            .collect::<Result<Vec<_>>>()?;
        recall.random_mean.push(mean(&rs));
        recall.random_std.push(std_dev(&rs));
    }

    let d_list = ordered(designer);
    let r_lists: Vec<Vec<Curriculum>> = randoms.iter().map(ordered).collect();
    let mut h = AgreementTable::default_named();
    let mut rho = AgreementTable::default_named();
    for (i, a) in agree.iter().enumerate() {
        let (ra, na) = &rankings[*a];
        let la = ordered(ra);
        for b in &agree[i + 1..] {
            let (rb, nb) = &rankings[*b];
            h.between_algorithms.push(pair(a, b, discrepancy_h(&la, *na, &ordered(rb), *nb)?));
            rho.between_algorithms.push(pair(a, b, spearman(ra, rb)?));
        }
        h.algorithm_designer
            .push(pair(a, "designer", discrepancy_h(&la, *na, &d_list, designer_summary.top_tier_size)?));
        rho.algorithm_designer.push(pair(a, "designer", spearman(ra, designer)?));
        let hs = r_lists
            .iter()
            .map(|rl| discrepancy_h(&la, *na, rl, *na))
            .collect::<Result<Vec<_>>>()?;
        h.algorithm_random.push(pair(a, "random", mean(&hs)));
        let ss = randoms.iter().map(|r| spearman(ra, r)).collect::<Result<Vec<_>>>()?;
        rho.algorithm_random.push(pair(a, "random", mean(&ss)));
    }
    h.finish();
    rho.finish();

    Ok(ReportBody {
        n_records: records.len(),
        n_curricula: curricula.len(),
        tiers: cfg.experiment.tiers,
        random_repeats: cfg.experiment.random_repeats,
        agreement_strategies: agree.iter().map(|s| s.to_string()).collect(),
        strategies,
        designer: designer_summary,
        recall_at_k: recall,
        discrepancy: h,
        spearman: rho,
    })
}

fn pair(a: &str, b: &str, value: f64) -> PairValue {
    PairValue {
        a: a.to_string(),
        b: b.to_string(),
        value,
    }
}

impl AgreementTable {
    fn default_named() -> Self {
        AgreementTable {
            between_algorithms: Vec::new(),
            algorithm_designer: Vec::new(),
            algorithm_random: Vec::new(),
            mean_between_algorithms: None,
            mean_algorithm_designer: None,
            mean_algorithm_random: None,
        }
    }

    fn finish(&mut self) {
        let m = |v: &[PairValue]| (!v.is_empty()).then(|| mean(&v.iter().map(|p| p.value).collect::<Vec<_>>()));
        self.mean_between_algorithms = m(&self.between_algorithms);
        self.mean_algorithm_designer = m(&self.algorithm_designer);
        self.mean_algorithm_random = m(&self.algorithm_random);
    }
}

/// SHA-256 of the records in their JSON-lines form.
pub fn records_digest(records: &[RunRecord]) -> Result<String> {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(serde_json::to_vec(r)?);
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn build_report(
    cfg: &ExperimentConfig,
    curricula: &[Curriculum],
    designer: &RankedCurricula,
    records: &[RunRecord],
) -> Result<ExperimentReport> {
    let body = analyze(cfg, curricula, designer, records)?;
    Ok(ExperimentReport {
        provenance: Provenance {
            config_hash: cfg.hash(),
            records_sha256: records_digest(records)?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            created: chrono::Utc::now().to_rfc3339(),
        },
        body,
    })
}

/// Recomputes the body from `records` and checks it against `report`.
pub fn verify_report(
    report: &ExperimentReport,
    cfg: &ExperimentConfig,
    curricula: &[Curriculum],
    designer: &RankedCurricula,
    records: &[RunRecord],
) -> Result<()> {
    let digest = records_digest(records)?;
    if digest != report.provenance.records_sha256 {
        return Err(Error::VerifyMismatch("records digest differs".into()));
    }
    if cfg.hash() != report.provenance.config_hash {
        return Err(Error::VerifyMismatch("config hash differs".into()));
    }
    let fresh = serde_json::to_value(analyze(cfg, curricula, designer, records)?)?;
    let stored = serde_json::to_value(&report.body)?;
    if fresh != stored {
        let field = match (fresh.as_object(), stored.as_object()) {
            (Some(f), Some(s)) => f
                .iter()
                .find(|(k, v)| s.get(*k) != Some(v))
                .map(|(k, _)| k.clone())
                .unwrap_or_default(),
            _ => String::new(),
        };
        return Err(Error::VerifyMismatch(format!("field `{field}` differs")));
    }
    Ok(())
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(dir.join(name)).map_err(|e| Error::Io(e.into()))
}

fn flush(mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

macro_rules! row {
    ($w:expr, $($v:expr),+ $(,)?) => {
        $w.write_record(&[$($v.to_string()),+]).map_err(|e| Error::Io(e.into()))?
    };
}

/// Flat CSV tables for plotting: per-run alpha/beta/F, per-curriculum
/// rankings, Recall@K curves, H and Spearman tables, t-tests and F over time.
pub fn write_csv_exports(report: &ExperimentReport, records: &[RunRecord], dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let body = &report.body;

    let mut w = csv_writer(dir, "alpha_beta.csv")?;
    row!(w, "strategy", "curriculum", "seed", "alpha", "beta", "f");
    for r in records {
        row!(w, r.strategy, r.curriculum, r.seed, r.alpha, r.beta, r.f);
    }
    flush(w)?;

    let mut w = csv_writer(dir, "curricula.csv")?;
    row!(w, "strategy", "rank", "curriculum", "f", "alpha", "beta", "tier");
    for s in &body.strategies {
        for (i, c) in s.ranking.iter().enumerate() {
            row!(w, s.name, i + 1, c.curriculum, c.f, c.alpha, c.beta, c.tier);
        }
    }
    flush(w)?;

    let mut w = csv_writer(dir, "designer.csv")?;
    row!(w, "rank", "curriculum", "score");
    for (i, e) in body.designer.ranking.iter().enumerate() {
        row!(w, i + 1, e.curriculum, e.score);
    }
    flush(w)?;

    let mut w = csv_writer(dir, "recall_at_k.csv")?;
    row!(w, "k", "designer", "random_mean", "random_std");
    let rc = &body.recall_at_k;
    for i in 0..rc.k.len() {
        row!(w, rc.k[i], rc.designer[i], rc.random_mean[i], rc.random_std[i]);
    }
    flush(w)?;

    for (file, table) in [("discrepancy.csv", &body.discrepancy), ("spearman.csv", &body.spearman)] {
        let mut w = csv_writer(dir, file)?;
        row!(w, "group", "a", "b", "value");
        for (group, rows) in [
            ("between_algorithms", &table.between_algorithms),
            ("algorithm_designer", &table.algorithm_designer),
            ("algorithm_random", &table.algorithm_random),
        ] {
            for p in rows {
                row!(w, group, p.a, p.b, p.value);
            }
        }
        flush(w)?;
    }

    let mut w = csv_writer(dir, "ttest.csv")?;
    row!(w, "strategy", "k", "top_mean", "bottom_mean", "t", "df", "p");
    for s in &body.strategies {
        let t = &s.ttest;
        row!(w, s.name, t.k, t.top_mean, t.bottom_mean, t.test.t, t.test.df, t.test.p);
    }
    flush(w)?;

    let mut w = csv_writer(dir, "f_over_time.csv")?;
    row!(w, "strategy", "task", "f", "random", "overfitting");
    for s in &body.strategies {
        let c = &s.f_over_time;
        for t in 0..c.f.len() {
            row!(w, s.name, t + 1, c.f[t], c.random[t], c.overfitting[t]);
        }
    }
    flush(w)?;

    Ok([
        "alpha_beta.csv",
        "curricula.csv",
        "designer.csv",
        "recall_at_k.csv",
        "discrepancy.csv",
        "spearman.csv",
        "ttest.csv",
        "f_over_time.csv",
    ]
    .map(String::from)
    .to_vec())
}
