//! Class prototypes and the inter-class distance matrix.
//!
//! The matrix is stored once in class order. A curriculum's view of it is an
//! index remapping, see [`DistanceMatrix::get`] and the designer module.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FeatureVector = Vec<f64>;

/// Which pairwise distance builds the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::Cosine => cosine_distance(a, b),
            Metric::Euclidean => euclidean_distance(a, b),
        }
    }
}

/// Mean feature vector of a class (or of a multi-class task).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    /// Class id, or task index for task prototypes.
    pub id: usize,
    pub mean: FeatureVector,
    pub sample_count: usize,
}

fn check_dim(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

fn mean_of<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> (FeatureVector, usize) {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    let n_f = n as f64;
    sum.iter_mut().for_each(|s| *s /= n_f);
    (sum, n)
}

/// Prototype of class `id` from its feature vectors.
///
/// When `sample_size` is smaller than the population, averages a uniform
/// sample without replacement drawn from `rng_seed`; otherwise averages
/// everything and the seed is irrelevant.
pub fn compute_prototype(id: usize, features: &[FeatureVector], sample_size: usize, rng_seed: u64) -> Result<Prototype> {
    let first = features.first().ok_or(Error::EmptyInput("feature list"))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::EmptyInput("feature vector"));
    }
    for v in features {
        check_dim(dim, v)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
    }
    if sample_size == 0 {
        return Err(Error::EmptyInput("prototype sample"));
    }
    let (mean, sample_count) = if sample_size >= features.len() {
        mean_of(features.iter().map(Vec::as_slice), dim)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut picked = index::sample(&mut rng, features.len(), sample_size).into_vec();
        // summation order must not depend on the sampler's output order
        picked.sort_unstable();
        mean_of(picked.iter().map(|&i| features[i].as_slice()), dim)
    };
    Ok(Prototype { id, mean, sample_count })
}

/// Prototype of a multi-class task: the mean of its members' means.
pub fn task_prototype(id: usize, members: &[Prototype]) -> Result<Prototype> {
    let first = members.first().ok_or(Error::EmptyInput("task member prototypes"))?;
    let dim = first.mean.len();
    for m in members {
        check_dim(dim, &m.mean)?;
    }
    let (mean, _) = mean_of(members.iter().map(|m| m.mean.as_slice()), dim);
    Ok(Prototype {
        id,
        mean,
        sample_count: members.iter().map(|m| m.sample_count).sum(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b)?;
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    // parallel vectors round to a few ulps rather than 0
    let d = 1.0 - cos;
    Ok(if d < 8.0 * f64::EPSILON { 0.0 } else { d })
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Symmetric prototype distance table with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub metric: Metric,
    pub normalized: bool,
    pub n: usize,
    /// Row-major `n * n` entries.
    pub d: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a row-major table after checking symmetry, zero diagonal and
    /// (when `normalized`) the `[0, 1]` range.
    pub fn from_rows(metric: Metric, normalized: bool, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut d = Vec::with_capacity(n * n);
        for row in rows {
            check_dim(n, row)?;
            d.extend_from_slice(row);
        }
        let m = DistanceMatrix { metric, normalized, n, d };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::OutOfRange {
                    what: "diagonal distance",
                    value: self.get(i, i),
                    range: "{0}",
                });
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 || v != self.get(j, i) {
                    return Err(Error::OutOfRange {
                        what: "distance",
                        value: v,
                        range: "symmetric non-negative reals",
                    });
                }
                if self.normalized && v > 1.0 {
                    return Err(Error::NotNormalized);
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Largest off-diagonal entry.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut max = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    max = max.max(self.get(i, j));
                }
            }
        }
        max
    }

    /// Divides every entry by the largest off-diagonal entry; identity when
    /// that maximum is zero.
    pub fn normalize(mut self) -> Self {
        let max = self.max_off_diagonal();
        if max > 0.0 {
            self.d.iter_mut().for_each(|v| *v /= max);
        }
        self.normalized = true;
        self
    }

    /// Same matrix with classes relabelled so that new index `i` is old
    /// index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        DistanceMatrix { d, ..self.clone() }
    }
}

/// Pairwise distances between prototypes, optionally max-normalized.
pub fn build_distance_matrix(prototypes: &[Prototype], metric: Metric, normalize: bool) -> Result<DistanceMatrix> {
    let n = prototypes.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two prototypes"));
    }
    let dim = prototypes[0].mean.len();
    for p in prototypes {
        check_dim(dim, &p.mean)?;
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| metric.distance(&prototypes[i].mean, &prototypes[j].mean))
        .collect::<Result<_>>()?;
    let mut d = vec![0.0; n * n];
    for (&(i, j), &v) in pairs.iter().zip(&dists) {
        d[i * n + j] = v;
        d[j * n + i] = v;
    }
    let m = DistanceMatrix {
        metric,
        normalized: false,
        n,
        d,
    };
    Ok(if normalize { m.normalize() } else { m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn proto(id: usize, mean: &[f64]) -> Prototype {
        Prototype {
            id,
            mean: mean.to_vec(),
            sample_count: 1,
        }
    }

    #[test]
    fn prototype_of_identical_vectors() {
        let v = vec![0.3, -1.2, 4.0];
        let features = vec![v.clone(); 10];
        let p = compute_prototype(0, &features, 5, 7).unwrap();
        assert_eq!(p.sample_count, 5);
        for (a, b) in p.mean.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn prototype_full_mean() {
        let p = compute_prototype(0, &[vec![0.0, 0.0], vec![2.0, 0.0]], 2, 0).unwrap();
        assert_eq!(p.mean, vec![1.0, 0.0]);
    }

    #[test]
    fn prototype_errors() {
        assert!(matches!(compute_prototype(0, &[], 3, 0), Err(Error::EmptyInput(_))));
        assert!(matches!(
            compute_prototype(0, &[vec![1.0, 2.0], vec![1.0]], 3, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_cases() {
        assert_abs_diff_eq!(cosine_distance(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn euclidean_cases() {
        assert_eq!(euclidean_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(matches!(
            euclidean_distance(&[1.0, 1.0], &[1.0, 1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identical_prototypes_give_zero_matrix() {
        let ps = vec![proto(0, &[1.0, 2.0]), proto(1, &[1.0, 2.0]), proto(2, &[1.0, 2.0])];
        let m = build_distance_matrix(&ps, Metric::Cosine, true).unwrap();
        assert!(m.d.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn normalized_cosine_example() {
        let ps = vec![proto(0, &[1.0, 0.0]), proto(1, &[0.0, 1.0]), proto(2, &[-1.0, 0.0])];
        let m = build_distance_matrix(&ps, Metric::Cosine, true).unwrap();
        assert_abs_diff_eq!(m.get(0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(0, 2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(1, 2), 0.5, epsilon = 1e-15);
        assert_eq!(m.get(2, 0), m.get(0, 2));
        assert!(m.normalized);
    }

    #[test]
    fn task_prototype_cases() {
        let a = proto(0, &[0.0, 0.0]);
        let b = proto(1, &[2.0, 2.0]);
        assert_eq!(task_prototype(9, std::slice::from_ref(&a)).unwrap().mean, a.mean);
        let t = task_prototype(9, &[a, b]).unwrap();
        assert_eq!(t.mean, vec![1.0, 1.0]);
        assert_eq!(t.sample_count, 2);
        let v = proto(0, &[0.5, -3.0]);
        assert_eq!(task_prototype(0, &[v.clone(), v.clone(), v.clone()]).unwrap().mean, v.mean);
        assert!(task_prototype(0, &[]).is_err());
    }

    #[test]
    fn json_layout() {
        let ps = vec![proto(0, &[1.0, 0.0]), proto(1, &[0.0, 1.0])];
        let m = build_distance_matrix(&ps, Metric::Euclidean, false).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["metric"], "euclidean");
        assert_eq!(v["normalized"], false);
        assert_eq!(v["n"], 2);
        assert_eq!(v["d"].as_array().unwrap().len(), 4);
    }
}
