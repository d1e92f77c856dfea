use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_x + n_y - 2` degrees of freedom.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sample t-test of equal means.
pub fn two_sample_ttest(xs: &[f64], ys: &[f64], kind: TTestKind) -> Result<TTest> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::EmptyInput("t-test needs at least two values per sample"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test sample"));
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    if vx == 0.0 && vy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (a, b) = (vx / nx, vy / ny);
            let df = (a + b) * (a + b) / (a * a / (nx - 1.0) + b * b / (ny - 1.0));
            (a + b, df)
        }
        TTestKind::Pooled => {
            let df = nx + ny - 2.0;
            let pooled = ((nx - 1.0) * vx + (ny - 1.0) * vy) / df;
            (pooled * (1.0 / nx + 1.0 / ny), df)
        }
    };
    let t = (mx - my) / se2.sqrt();
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a
        assert_abs_diff_eq!(regularized_incomplete_beta(1.0, 1.0, 0.3), 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(regularized_incomplete_beta(3.0, 1.0, 0.6), 0.216, epsilon = 1e-14);
        // symmetry I_x(a, b) = 1 - I_{1-x}(b, a)
        let l = regularized_incomplete_beta(2.5, 0.5, 0.7);
        let r = 1.0 - regularized_incomplete_beta(0.5, 2.5, 0.3);
        assert_abs_diff_eq!(l, r, epsilon = 1e-14);
    }

    #[test]
    fn cauchy_case() {
        // df = 1 is Cauchy: P(|T| >= 1) = 0.5
        assert_abs_diff_eq!(student_t_two_sided(1.0, 1.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn identical_samples() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let r = two_sample_ttest(&xs, &xs, TTestKind::Welch).unwrap();
        assert_eq!(r.t, 0.0);
        assert_abs_diff_eq!(r.p, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn separated_samples_are_significant() {
        let r = two_sample_ttest(&[0.0, 0.0, 0.0], &[10.0, 10.1, 9.9], TTestKind::Welch).unwrap();
        assert!(r.p < 0.001, "{r:?}");
        assert!(r.t < 0.0);
    }

    #[test]
    fn pooled_equals_welch_for_equal_sizes_and_variances() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 3.0, 4.0, 5.0, 6.0];
        let w = two_sample_ttest(&xs, &ys, TTestKind::Welch).unwrap();
        let p = two_sample_ttest(&xs, &ys, TTestKind::Pooled).unwrap();
        assert_abs_diff_eq!(w.t, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.df, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.p, p.p, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            two_sample_ttest(&[1.0, 1.0], &[2.0, 2.0], TTestKind::Welch),
            Err(Error::DegenerateVariance)
        ));
        assert!(two_sample_ttest(&[1.0], &[2.0, 3.0], TTestKind::Welch).is_err());
    }
}
