//! Independent reference implementations shared by the oracle and
//! acceptance tests. Nothing here calls into the code under test except to
//! read plain data out of its types.

#![allow(dead_code, clippy::needless_range_loop)]

use curforge::data::Example;
use curforge::distance::{DistanceMatrix, Metric};
use curforge::learner::{loss_and_grad, EwcAnchor, HeadParams, LwfSnapshot, StrategyState};
use rand::Rng;

/// Random symmetric matrix with zero diagonal, normalized by its maximum.
pub fn random_normalized(n: usize, rng: &mut impl Rng) -> DistanceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(0.01..1.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    DistanceMatrix::from_rows(Metric::Cosine, false, &rows).unwrap().normalize()
}

/// Designer score written out term by term from the piecewise advantage
/// definition.
pub fn direct_score(order: &[usize], d: &DistanceMatrix) -> f64 {
    let t = order.len();
    let m = |i: usize, j: usize| d.get(order[i - 1], order[j - 1]);
    let mut s = 0.0;
    for step in 1..=t {
        let v = if step == 1 {
            let xs: Vec<f64> = (2..=t).map(|j| m(1, j)).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            1.0 - xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
        } else if 2 * step <= t {
            m(step, step - 1)
        } else {
            1.0 - m(step, t - step + 1)
        };
        s += v;
    }
    s
}

/// All permutations of `0..n` by Heap's algorithm (order irrelevant).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            go(k - 1, a, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            a.swap(j, k - 1);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    go(n, &mut a, &mut out);
    out
}

pub fn random_head(n_classes: usize, dim: usize, rng: &mut impl Rng) -> HeadParams {
    let mut h = HeadParams::zeros(n_classes, dim);
    h.iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
    h
}

/// Which regularizer a finite-difference configuration exercises.
#[derive(Debug, Clone, Copy)]
pub enum Reg {
    None,
    Ewc,
    Lwf,
}

/// One random loss configuration: head, batch, seen mask and strategy
/// state.
pub fn random_config(reg: Reg, rng: &mut impl Rng) -> (HeadParams, Vec<Example>, Vec<bool>, StrategyState) {
    let n = rng.random_range(2..=6);
    let dim = rng.random_range(1..=6);
    let h = random_head(n, dim, rng);
    let n_seen = rng.random_range(2..=n);
    let mut seen = vec![false; n];
    seen[..n_seen].iter_mut().for_each(|s| *s = true);
    let batch: Vec<Example> = (0..rng.random_range(1..=5))
        .map(|_| Example {
            features: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            label: rng.random_range(0..n_seen),
        })
        .collect();
    let state = match reg {
        Reg::None => StrategyState::Vanilla,
        Reg::Ewc => {
            let anchors = (0..rng.random_range(1..=2))
                .map(|_| {
                    let mut fisher = random_head(n, dim, rng);
                    fisher.iter_mut().for_each(|f| *f = f.abs());
                    EwcAnchor {
                        theta: random_head(n, dim, rng),
                        fisher,
                        lambda: rng.random_range(0.1..5.0),
                    }
                })
                .collect();
            StrategyState::Ewc { lambda: 1.0, anchors }
        }
        Reg::Lwf => {
            let mut old = vec![false; n];
            old[..rng.random_range(1..n_seen)].iter_mut().for_each(|s| *s = true);
            StrategyState::Lwf {
                lambda: rng.random_range(0.1..3.0),
                temperature: rng.random_range(0.5..4.0),
                snapshot: Some(LwfSnapshot {
                    head: random_head(n, dim, rng),
                    old_classes: old,
                }),
            }
        }
    };
    (h, batch, seen, state)
}

/// Largest relative error between the analytic gradient and central
/// differences with step `1e-5`.
pub fn max_fd_error(h: &HeadParams, batch: &[Example], seen: &[bool], state: &StrategyState) -> f64 {
    const STEP: f64 = 1e-5;
    let refs: Vec<&Example> = batch.iter().collect();
    let loss = |p: &HeadParams| loss_and_grad(p, &refs, seen, state).unwrap().0;
    let (_, grad) = loss_and_grad(h, &refs, seen, state).unwrap();
    let analytic: Vec<f64> = grad.iter().copied().collect();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = h.clone();
        let mut minus = h.clone();
        *plus.iter_mut().nth(i).unwrap() += STEP;
        *minus.iter_mut().nth(i).unwrap() -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// Two-sided tail probability of Student's t by quadrature.
///
/// With `x = sqrt(df) tan(theta)` the density becomes proportional to
/// `cos(theta)^(df - 1)` on `[0, pi/2)`, so the tail is a ratio of two
/// finite integrals, each done by composite Simpson.
pub fn t_two_sided_quadrature(t: f64, df: f64) -> f64 {
    let f = |th: f64| th.cos().powf(df - 1.0);
    let simpson = |a: f64, b: f64| {
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / df.sqrt()).atan();
    simpson(theta0, half_pi) / simpson(0.0, half_pi)
}

/// Welch statistic and degrees of freedom, written out directly.
pub fn welch(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (n, m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    };
    let (nx, mx, vx) = stats(xs);
    let (ny, my, vy) = stats(ys);
    let (a, b) = (vx / nx, vy / ny);
    let t = (mx - my) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (nx - 1.0) + b * b / (ny - 1.0));
    (t, df)
}
