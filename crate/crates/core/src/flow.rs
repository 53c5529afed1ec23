//! Rectified-flow primitives: interpolation path, conditional target,
//! flow-matching loss, noisy-source construction and guidance.

use crate::error::{FlowError, Result};
use crate::field::VelocityField;
use crate::rng::Rng64;
use crate::tensor::{Condition, TensorState};

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

/// `(1 - t) x0 + t x1`.
pub fn interpolate(x0: &TensorState, x1: &TensorState, t: f64) -> Result<TensorState> {
    check_time(t)?;
    x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b)
}

/// Constant rectified-flow target `x1 - x0`.
pub fn conditional_velocity(x0: &TensorState, x1: &TensorState) -> Result<TensorState> {
    x1.zip_map(x0, |b, a| b - a)
}

/// Noised source `(1 - t) x_src + t eps`; same path as [`interpolate`].
pub fn noisy_source(x_src: &TensorState, eps: &TensorState, t: f64) -> Result<TensorState> {
    interpolate(x_src, eps, t)
}

/// Classifier-free guidance `v_uncond + scale * (v_cond - v_uncond)`.
pub fn cfg_combine(v_cond: &TensorState, v_uncond: &TensorState, scale: f64) -> Result<TensorState> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(FlowError::InvalidConfig(format!(
            "guidance scale must be finite and >= 0, got {scale}"
        )));
    }
    v_uncond.zip_map(v_cond, |u, c| u + scale * (c - u))
}

/// Monte Carlo flow-matching loss.
///
/// For each `(x0, c)` in the batch one `x1 ~ N(0, I)` is drawn (all
/// coordinates), then `t ~ U[0, 1)`, and the squared error
/// `||v(x_t, c, t) - (x1 - x0)||^2` is averaged over the batch.
pub fn fm_loss<F: VelocityField + ?Sized>(
    field: &F,
    batch: &[(TensorState, Condition)],
    rng: &mut Rng64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(FlowError::InvalidInput("empty batch".into()));
    }
    let mut total = 0.0;
    for (x0, c) in batch {
        let x1 = rng.normal_state(x0.shape(), x0.modality());
        let t = rng.uniform();
        let xt = interpolate(x0, &x1, t)?;
        let target = conditional_velocity(x0, &x1)?;
        let v = field.velocity(&xt, c, t)?;
        total += v
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}
