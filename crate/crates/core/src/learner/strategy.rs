//! Strategy-specific state and the combined training loss.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::{forward_unchecked, masked_softmax, HeadParams};
use crate::data::Example;
use crate::error::{Error, Result};

/// Diagonal-Fisher anchor recorded after a completed task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcAnchor {
    pub theta: HeadParams,
    pub fisher: HeadParams,
    pub lambda: f64,
}

/// Frozen copy of the head from before the current task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwfSnapshot {
    pub head: HeadParams,
    /// Classes seen before the current task; distillation runs over these.
    pub old_classes: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BufferPolicy {
    /// One reservoir of fixed capacity, a fraction of the whole training set.
    #[default]
    GlobalFixed,
    /// Each completed task contributes a uniform sample of a fraction of its
    /// own training set.
    PerTask,
}

/// Memory of past examples for naive replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub policy: BufferPolicy,
    /// Reservoir size under [`BufferPolicy::GlobalFixed`]; ignored otherwise.
    pub capacity: usize,
    /// Fraction of each task kept under [`BufferPolicy::PerTask`].
    pub fraction: f64,
    pub items: Vec<Example>,
    /// Examples offered to the reservoir so far.
    pub offered: usize,
}

impl ReplayBuffer {
    pub fn global(capacity: usize) -> Self {
        ReplayBuffer {
            policy: BufferPolicy::GlobalFixed,
            capacity,
            fraction: 0.0,
            items: Vec::new(),
            offered: 0,
        }
    }

    pub fn per_task(fraction: f64) -> Self {
        ReplayBuffer {
            policy: BufferPolicy::PerTask,
            capacity: 0,
            fraction,
            items: Vec::new(),
            offered: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Up to `n` distinct buffer entries drawn uniformly.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Example> {
        let n = n.min(self.items.len());
        let mut idx = index::sample(rng, self.items.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}

/// Stores a uniform random sample of `task_data` according to the buffer's
/// policy. The global policy is a reservoir over every example offered so far.
pub fn update_replay_buffer(buf: &mut ReplayBuffer, task_data: &[Example], rng: &mut impl Rng) {
    match buf.policy {
        BufferPolicy::GlobalFixed => {
            for ex in task_data {
                buf.offered += 1;
                if buf.items.len() < buf.capacity {
                    buf.items.push(ex.clone());
                } else if buf.capacity > 0 {
                    let j = rng.random_range(0..buf.offered);
                    if j < buf.capacity {
                        buf.items[j] = ex.clone();
                    }
                }
            }
        }
        BufferPolicy::PerTask => {
            let quota = ((buf.fraction * task_data.len() as f64).round() as usize).clamp(1, task_data.len().max(1));
            let quota = quota.min(task_data.len());
            let mut idx = index::sample(rng, task_data.len(), quota).into_vec();
            idx.sort_unstable();
            buf.items.extend(idx.into_iter().map(|i| task_data[i].clone()));
            buf.offered += task_data.len();
        }
    }
}

/// Strategy state carried across task boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategyState {
    Vanilla,
    Ewc {
        lambda: f64,
        anchors: Vec<EwcAnchor>,
    },
    Lwf {
        lambda: f64,
        temperature: f64,
        snapshot: Option<LwfSnapshot>,
    },
    Replay(ReplayBuffer),
}

/// Per-example cross-entropy gradient with respect to the logits, masked to
/// `seen`; returns the loss alongside.
fn ce_logit_grad(logits: &[f64], label: usize, seen: &[bool]) -> (f64, Vec<f64>) {
    let mut p = masked_softmax(logits, seen, 1.0);
    let loss = -p[label].ln();
    p[label] -= 1.0;
    (loss, p)
}

fn accumulate(grads: &mut HeadParams, x: &[f64], dz: &[f64], scale: f64) {
    let dim = grads.dim;
    for (k, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let g = g * scale;
        for (w, xi) in grads.w[k * dim..(k + 1) * dim].iter_mut().zip(x) {
            *w += g * xi;
        }
        grads.b[k] += g;
    }
}

/// Mean masked cross-entropy over `batch` plus the strategy's regularizer,
/// with its exact gradient.
///
/// EWC adds `lambda / 2 * sum F_i (theta_i - theta*_i)^2` per anchor. LwF
/// adds `lambda * T^2 * KL(softmax(old / T) || softmax(new / T))` over the
/// previously seen classes, averaged over the batch.
pub fn loss_and_grad(
    h: &HeadParams,
    batch: &[&Example],
    seen: &[bool],
    strategy: &StrategyState,
) -> Result<(f64, HeadParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if seen.len() != h.n_classes {
        return Err(Error::LengthMismatch(h.n_classes, seen.len()));
    }
    let mut grads = HeadParams::zeros(h.n_classes, h.dim);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        if ex.features.len() != h.dim {
            return Err(Error::DimensionMismatch {
                expected: h.dim,
                found: ex.features.len(),
            });
        }
        if ex.label >= h.n_classes || !seen[ex.label] {
            return Err(Error::LabelNotSeen(ex.label));
        }
        let z = forward_unchecked(h, &ex.features);
        let (l, mut dz) = ce_logit_grad(&z, ex.label, seen);
        loss += l * scale;

        if let StrategyState::Lwf {
            lambda,
            temperature,
            snapshot: Some(snap),
        } = strategy
        {
            if snap.old_classes.iter().any(|&m| m) {
                let tau = *temperature;
                let z_old = forward_unchecked(&snap.head, &ex.features);
                let q = masked_softmax(&z_old, &snap.old_classes, tau);
                let p = masked_softmax(&z, &snap.old_classes, tau);
                let kl: f64 = q
                    .iter()
                    .zip(&p)
                    .filter(|(qk, _)| **qk > 0.0)
                    .map(|(qk, pk)| qk * (qk.ln() - pk.ln()))
                    .sum();
                loss += lambda * tau * tau * kl * scale;
                for k in 0..dz.len() {
                    if snap.old_classes[k] {
                        dz[k] += lambda * tau * (p[k] - q[k]);
                    }
                }
            }
        }
        accumulate(&mut grads, &ex.features, &dz, scale);
    }

    if let StrategyState::Ewc { anchors, .. } = strategy {
        for a in anchors {
            if !a.theta.same_shape(h) {
                return Err(Error::DimensionMismatch {
                    expected: h.len(),
                    found: a.theta.len(),
                });
            }
            let mut penalty = 0.0;
            for (((g, p), t), f) in grads.iter_mut().zip(h.iter()).zip(a.theta.iter()).zip(a.fisher.iter()) {
                let diff = p - t;
                penalty += f * diff * diff;
                *g += a.lambda * f * diff;
            }
            loss += 0.5 * a.lambda * penalty;
        }
    }
    Ok((loss, grads))
}

/// Diagonal Fisher estimate at `h`: the mean over `task_data` of squared
/// per-example cross-entropy gradients. `h` itself becomes the anchor.
pub fn consolidate_ewc(h: &HeadParams, task_data: &[Example], seen: &[bool], lambda: f64) -> Result<EwcAnchor> {
    if task_data.is_empty() {
        return Err(Error::EmptyInput("task data for Fisher estimate"));
    }
    let mut fisher = HeadParams::zeros(h.n_classes, h.dim);
    let scale = 1.0 / task_data.len() as f64;
    for ex in task_data {
        let (_, g) = loss_and_grad(h, &[ex], seen, &StrategyState::Vanilla)?;
        for (f, gi) in fisher.iter_mut().zip(g.iter()) {
            *f += gi * gi * scale;
        }
    }
    Ok(EwcAnchor {
        theta: h.clone(),
        fisher,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::head::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex(features: &[f64], label: usize) -> Example {
        Example {
            features: features.to_vec(),
            label,
        }
    }

    #[test]
    fn ewc_penalty_vanishes_at_anchor() {
        let h = HeadParams::init(3, 2, Init::default(), 5);
        let data = [ex(&[1.0, 2.0], 0), ex(&[-1.0, 0.5], 1)];
        let seen = [true, true, false];
        let anchor = consolidate_ewc(&h, &data, &seen, 100.0).unwrap();
        let batch: Vec<&Example> = data.iter().collect();
        let (plain, g0) = loss_and_grad(&h, &batch, &seen, &StrategyState::Vanilla).unwrap();
        let ewc = StrategyState::Ewc {
            lambda: 100.0,
            anchors: vec![anchor],
        };
        let (with, g1) = loss_and_grad(&h, &batch, &seen, &ewc).unwrap();
        assert_eq!(plain, with);
        assert_eq!(g0, g1);
    }

    #[test]
    fn lwf_identical_heads_add_nothing() {
        let h = HeadParams::init(3, 2, Init::default(), 5);
        let batch = [ex(&[1.0, 2.0], 2)];
        let refs: Vec<&Example> = batch.iter().collect();
        let seen = [true, true, true];
        let lwf = StrategyState::Lwf {
            lambda: 1.0,
            temperature: 2.0,
            snapshot: Some(LwfSnapshot {
                head: h.clone(),
                old_classes: vec![true, true, false],
            }),
        };
        let (plain, g0) = loss_and_grad(&h, &refs, &seen, &StrategyState::Vanilla).unwrap();
        let (with, g1) = loss_and_grad(&h, &refs, &seen, &lwf).unwrap();
        assert!((plain - with).abs() < 1e-15);
        for (a, b) in g0.iter().zip(g1.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unseen_label_rejected() {
        let h = HeadParams::zeros(3, 1);
        let e = ex(&[1.0], 2);
        assert!(matches!(
            loss_and_grad(&h, &[&e], &[true, true, false], &StrategyState::Vanilla),
            Err(Error::LabelNotSeen(2))
        ));
    }

    #[test]
    fn zero_gradient_gives_zero_fisher() {
        // a single seen class: softmax is identically 1, gradient 0
        let h = HeadParams::init(2, 2, Init::default(), 9);
        let data = [ex(&[1.0, 1.0], 0), ex(&[3.0, -1.0], 0)];
        let a = consolidate_ewc(&h, &data, &[true, false], 1.0).unwrap();
        assert!(a.fisher.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn single_example_fisher_is_squared_gradient() {
        let h = HeadParams::init(3, 2, Init::default(), 2);
        let e = ex(&[0.5, -1.5], 1);
        let seen = [true, true, true];
        let a = consolidate_ewc(&h, std::slice::from_ref(&e), &seen, 1.0).unwrap();
        let (_, g) = loss_and_grad(&h, &[&e], &seen, &StrategyState::Vanilla).unwrap();
        for (f, gi) in a.fisher.iter().zip(g.iter()) {
            assert_eq!(*f, gi * gi);
        }
    }

    #[test]
    fn consolidate_rejects_empty() {
        let h = HeadParams::zeros(2, 2);
        assert!(consolidate_ewc(&h, &[], &[true, true], 1.0).is_err());
    }

    #[test]
    fn buffer_holds_everything_when_large() {
        let data: Vec<Example> = (0..20).map(|i| ex(&[i as f64], 0)).collect();
        let mut buf = ReplayBuffer::global(100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        update_replay_buffer(&mut buf, &data[..10], &mut rng);
        update_replay_buffer(&mut buf, &data[10..], &mut rng);
        assert_eq!(buf.items, data);
    }

    #[test]
    fn global_buffer_size_is_constant() {
        let total = 500;
        let data: Vec<Example> = (0..total).map(|i| ex(&[i as f64], i / 100)).collect();
        let capacity = (0.02 * total as f64) as usize;
        let mut buf = ReplayBuffer::global(capacity);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for task in data.chunks(100) {
            update_replay_buffer(&mut buf, task, &mut rng);
            assert_eq!(buf.len(), capacity);
        }
    }

    #[test]
    fn per_task_buffer_keeps_a_fraction_of_each_task() {
        let data: Vec<Example> = (0..300).map(|i| ex(&[i as f64], i / 100)).collect();
        let mut buf = ReplayBuffer::per_task(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (t, task) in data.chunks(100).enumerate() {
            update_replay_buffer(&mut buf, task, &mut rng);
            assert_eq!(buf.len(), 10 * (t + 1));
        }
        for t in 0..3 {
            assert_eq!(buf.items.iter().filter(|e| e.label == t).count(), 10);
        }
    }
}
