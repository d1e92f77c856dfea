use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter initialization family for the head's weights. Biases start at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Init {
    Gaussian { std: f64 },
    Uniform { limit: f64 },
    /// Glorot uniform, `limit = sqrt(6 / (fan_in + fan_out))`.
    Xavier,
}

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian { std: 0.01 }
    }
}

/// Linear softmax head: `logits = W x + b` with a fixed `n_classes` rows.
///
/// Also used as the gradient and moment container, since those share the
/// parameter shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub n_classes: usize,
    pub dim: usize,
    /// Row-major `n_classes * dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        HeadParams {
            n_classes,
            dim,
            w: vec![0.0; n_classes * dim],
            b: vec![0.0; n_classes],
        }
    }

    pub fn init(n_classes: usize, dim: usize, init: Init, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = HeadParams::zeros(n_classes, dim);
        match init {
            Init::Gaussian { std } => {
                let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
                h.w.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
            }
            Init::Uniform { limit } => {
                h.w.iter_mut().for_each(|w| *w = rng.random_range(-limit..=limit));
            }
            Init::Xavier => {
                let limit = (6.0 / (dim + n_classes) as f64).sqrt();
                h.w.iter_mut().for_each(|w| *w = rng.random_range(-limit..=limit));
            }
        }
        h
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.w[k * self.dim..(k + 1) * self.dim]
    }

    /// Weights followed by biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(&self.b)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &HeadParams) -> bool {
        self.n_classes == other.n_classes && self.dim == other.dim
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Logits `W x + b`.
pub fn forward(h: &HeadParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.dim {
        return Err(Error::DimensionMismatch {
            expected: h.dim,
            found: x.len(),
        });
    }
    Ok(forward_unchecked(h, x))
}

pub(crate) fn forward_unchecked(h: &HeadParams, x: &[f64]) -> Vec<f64> {
    (0..h.n_classes)
        .map(|k| h.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + h.b[k])
        .collect()
}

/// Index of the largest logit among classes with `mask[k]` set; ties go to
/// the lowest index.
pub fn masked_argmax(logits: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &z) in logits.iter().enumerate() {
        if mask[k] && best.is_none_or(|b| z > logits[b]) {
            best = Some(k);
        }
    }
    best
}

/// Softmax of `logits / temperature` restricted to `mask`; masked-out
/// entries are exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool], temperature: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(z, _)| *z / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(z, &m)| if m { (z / temperature - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}
