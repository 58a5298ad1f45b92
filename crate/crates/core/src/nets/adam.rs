use serde::{Deserialize, Serialize};

use super::{NetError, ParamVector};

/// Denominator guard in the Adam update.
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.5, beta2: 0.999 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidAdam(*self))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step_count: 0 }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One bias-corrected Adam update, moving `params` against `grads`.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NetError> {
    cfg.validate()?;
    if grads.len() != params.len() {
        return Err(NetError::LengthMismatch { what: "gradient", expected: params.len(), got: grads.len() });
    }
    if state.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(NetError::LengthMismatch { what: "adam state", expected: params.len(), got: state.len() });
    }
    if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(NetError::NonFiniteGradient { index, value });
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let p = params.as_mut_slice();
    for i in 0..p.len() {
        let g = grads[i];
        let m = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
    Ok(())
}
