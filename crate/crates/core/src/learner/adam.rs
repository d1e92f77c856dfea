use serde::{Deserialize, Serialize};

use super::head::HeadParams;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: HeadParams,
    pub v: HeadParams,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(like: &HeadParams, lr: f64) -> Self {
        AdamState {
            m: HeadParams::zeros(like.n_classes, like.dim),
            v: HeadParams::zeros(like.n_classes, like.dim),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, eps: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.eps = eps;
        self
    }
}

/// One bias-corrected Adam update of `h` in place.
///
/// Rejects non-finite gradients before touching any state.
pub fn adam_step(h: &mut HeadParams, grads: &HeadParams, st: &mut AdamState) -> Result<()> {
    if !h.same_shape(grads) || !h.same_shape(&st.m) {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            found: grads.len(),
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    st.step_count += 1;
    let t = st.step_count as i32;
    let c1 = 1.0 - st.beta1.powi(t);
    let c2 = 1.0 - st.beta2.powi(t);
    let (b1, b2, lr, eps) = (st.beta1, st.beta2, st.lr, st.eps);
    for (((p, g), m), v) in h.iter_mut().zip(grads.iter()).zip(st.m.iter_mut()).zip(st.v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
