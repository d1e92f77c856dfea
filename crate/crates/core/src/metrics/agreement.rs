use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::curriculum::{curriculum_to_string, Curriculum};
use crate::designer::RankedCurricula;
use crate::error::{Error, Result};

pub const DEFAULT_TIERS: usize = 5;

fn universe(r: &RankedCurricula) -> HashSet<&Curriculum> {
    r.curricula().collect()
}

/// Fraction of the designer's top-`k` found in the union of every empirical
/// ranking's top-`k`.
pub fn recall_at_k(designer: &RankedCurricula, empirical: &[RankedCurricula], k: usize) -> Result<f64> {
    if k == 0 || k > designer.len() {
        return Err(Error::OutOfRange {
            what: "k",
            value: k as f64,
            range: "1..=number of curricula",
        });
    }
    let base = universe(designer);
    for r in empirical {
        if universe(r) != base {
            return Err(Error::UniverseMismatch);
        }
    }
    let union: HashSet<&Curriculum> = empirical
        .iter()
        .flat_map(|r| r.top(k).iter().map(|e| &e.curriculum))
        .collect();
    let hits = designer.top(k).iter().filter(|e| union.contains(&e.curriculum)).count();
    Ok(hits as f64 / k as f64)
}

/// Curricula binned into equal-width F ranges; `tiers[0]` is the lowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierPartition {
    pub bounds: Vec<f64>,
    /// Members of each tier, highest F first.
    pub tiers: Vec<Vec<(Curriculum, f64)>>,
}

impl TierPartition {
    pub fn top(&self) -> &[(Curriculum, f64)] {
        self.tiers.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// 1-based tier of every member, in input order of curricula.
    pub fn tier_of(&self, c: &Curriculum) -> Option<usize> {
        self.tiers
            .iter()
            .position(|t| t.iter().any(|(m, _)| m == c))
            .map(|i| i + 1)
    }
}

/// Splits `[min F, max F]` into `n_tiers` equal bins. A value on a bin
/// boundary goes to the higher bin; the maximum lands in the top bin.
pub fn tier_partition(records: &[(Curriculum, f64)], n_tiers: usize) -> Result<TierPartition> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records to tier"));
    }
    if n_tiers == 0 {
        return Err(Error::EmptyInput("tier count"));
    }
    let min = records.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = records.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let bounds: Vec<f64> = (0..=n_tiers)
        .map(|i| if i == n_tiers { max } else { min + range * i as f64 / n_tiers as f64 })
        .collect();
    let mut tiers = vec![Vec::new(); n_tiers];
    for (c, f) in records {
        let idx = if range == 0.0 {
            n_tiers - 1
        } else {
            (0..n_tiers).rev().find(|&i| *f >= bounds[i]).unwrap_or(0)
        };
        tiers[idx].push((c.clone(), *f));
    }
    for t in &mut tiers {
        t.sort_by(|a, b| b.1.total_cmp(&a.1));
    }
    Ok(TierPartition { bounds, tiers })
}

/// Letter strings of the set read position by position: all first letters
/// in set order, then all second letters, and so on.
pub fn interleave_concat(set: &[Curriculum]) -> Result<String> {
    let strings: Vec<Vec<u8>> = set
        .iter()
        .map(|c| curriculum_to_string(c).map(String::into_bytes))
        .collect::<Result<_>>()?;
    let Some(len) = strings.first().map(Vec::len) else {
        return Ok(String::new());
    };
    if let Some(bad) = strings.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch(len, bad.len()));
    }
    let mut out = String::with_capacity(len * strings.len());
    for p in 0..len {
        for s in &strings {
            out.push(s[p] as char);
        }
    }
    Ok(out)
}

fn hamming_fraction(a: &str, b: &str) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let diff = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count();
    diff as f64 / a.len() as f64
}

fn h_pass(a: &[Curriculum], b: &[Curriculum], n: usize) -> Result<f64> {
    let n = n.min(a.len()).min(b.len());
    let sa = interleave_concat(&a[..n])?;
    let sb = interleave_concat(&b[..n])?;
    if sa.len() != sb.len() {
        return Err(Error::LengthMismatch(sa.len(), sb.len()));
    }
    Ok(hamming_fraction(&sa, &sb))
}

/// Curriculum discrepancy between two ranked lists.
///
/// `a` and `b` are rankings (best first) and `n_a`, `n_b` the sizes of the
/// sets being compared, typically their top-tier counts. One pass compares
/// the top `n_a` of both rankings, the other the top `n_b`; each pass is a
/// per-position Hamming fraction of the interleaved letter strings, and the
/// result is the mean of the two. A ranking shorter than the reference
/// count truncates both sides of that pass.
pub fn discrepancy_h(a: &[Curriculum], n_a: usize, b: &[Curriculum], n_b: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() || n_a == 0 || n_b == 0 {
        return Err(Error::EmptyInput("curriculum set"));
    }
    let (la, lb) = (a[0].n_classes(), b[0].n_classes());
    if la != lb {
        return Err(Error::LengthMismatch(la, lb));
    }
    Ok(0.5 * (h_pass(a, b, n_a)? + h_pass(a, b, n_b)?))
}

/// [`discrepancy_h`] with each whole list as its own reference set.
pub fn discrepancy_h_sets(a: &[Curriculum], b: &[Curriculum]) -> Result<f64> {
    discrepancy_h(a, a.len(), b, b.len())
}

/// Ranks (1 = best) from descending scores, ties sharing their average rank.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho between two rankings of the same curricula, computed as
/// the Pearson correlation of average ranks.
pub fn spearman(a: &RankedCurricula, b: &RankedCurricula) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::UniverseMismatch);
    }
    let pos_b: HashMap<&Curriculum, usize> = b.curricula().enumerate().map(|(i, c)| (c, i)).collect();
    let b_scores = b.scores();
    let mut paired_b = Vec::with_capacity(a.len());
    for c in a.curricula() {
        let &i = pos_b.get(c).ok_or(Error::UniverseMismatch)?;
        paired_b.push(b_scores[i]);
    }
    let ra = average_ranks(&a.scores());
    let rb = average_ranks(&paired_b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(cov / (va * vb).sqrt())
}
