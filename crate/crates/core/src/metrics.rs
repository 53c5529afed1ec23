//! Probes for bias, smoothness, structure preservation and distribution error.

use nalgebra::DMatrix;

use crate::error::{FlowError, Result};
use crate::gaussian::{gaussian_marginal_velocity, w2_gaussian_moments, GaussianSpec};
use crate::sampler::{NoiseMode, SequenceMode, Trajectory};
use crate::tensor::TensorState;

/// Euler steps per unit time of the dense edit integration.
pub const DENSE_STEPS_PER_UNIT: usize = 100_000;
/// RK4 steps of the full-horizon reference.
pub const REFERENCE_STEPS: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Noised source states.
    Source,
    /// Target or edit states.
    Current,
}

/// Mean squared second difference of a point sequence, per interior point and
/// coordinate: `sum_k ||x_{k+1} - 2 x_k + x_{k-1}||^2 / ((n - 2) dim)`.
pub fn smoothness_of(points: &[&TensorState]) -> Result<f64> {
    if points.len() < 3 {
        return Err(FlowError::InvalidInput(format!(
            "smoothness needs >= 3 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    for p in points {
        points[0].check_same_shape(p)?;
    }
    let total: f64 = points
        .windows(3)
        .map(|w| {
            w[0].data()
                .iter()
                .zip(w[1].data())
                .zip(w[2].data())
                .map(|((a, b), c)| (c - 2.0 * b + a).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / ((points.len() - 2) * dim.max(1)) as f64)
}

pub fn smoothness(traj: &Trajectory, stream: Stream) -> Result<f64> {
    match stream {
        Stream::Source => smoothness_of(&traj.source_stream()),
        Stream::Current => smoothness_of(&traj.current_stream()),
    }
}

fn check_pair(src: &GaussianSpec, tar: &GaussianSpec, x_src: &TensorState, eps: &TensorState) -> Result<()> {
    if src.dim() != tar.dim() {
        return Err(FlowError::shape(&[src.dim()], &[tar.dim()]));
    }
    if x_src.len() != src.dim() {
        return Err(FlowError::shape(&[src.dim()], x_src.shape()));
    }
    x_src.check_same_shape(eps)
}

/// Right-hand side of the edit ODE in the offset `D = X^tar - X^src`:
/// `dD/dt = V_tar(X^src_t + D, t) - V_src(X^src_t, t)` with
/// `X^src_t = (1 - t) x_src + t eps`.
fn edit_rhs(
    src: &GaussianSpec,
    tar: &GaussianSpec,
    x_src: &TensorState,
    eps: &TensorState,
    d: &TensorState,
    t: f64,
) -> Result<TensorState> {
    let xs = x_src.zip_map(eps, |x, e| (1.0 - t) * x + t * e)?;
    let vs = gaussian_marginal_velocity(src, &xs, t)?;
    let vt = gaussian_marginal_velocity(tar, &xs.add(d)?, t)?;
    vt.sub(&vs)
}

/// Full-horizon edit reference `X^tar,exact`: the edit ODE integrated with
/// RK4 from `t = 1` (offset 0) to `t = 0`, returned as `x_src + D_0`.
pub fn exact_edit_reference(
    src: &GaussianSpec,
    tar: &GaussianSpec,
    x_src: &TensorState,
    eps: &TensorState,
    steps: usize,
) -> Result<TensorState> {
    check_pair(src, tar, x_src, eps)?;
    if steps == 0 {
        return Err(FlowError::InvalidConfig("reference needs >= 1 step".into()));
    }
    let h = -1.0 / steps as f64;
    let mut d = TensorState::zeros(x_src.shape(), x_src.modality());
    for k in 0..steps {
        let t = 1.0 - k as f64 / steps as f64;
        let k1 = edit_rhs(src, tar, x_src, eps, &d, t)?;
        let k2 = edit_rhs(src, tar, x_src, eps, &d.axpy(h / 2.0, &k1)?, t + h / 2.0)?;
        let k3 = edit_rhs(src, tar, x_src, eps, &d.axpy(h / 2.0, &k2)?, t + h / 2.0)?;
        let t_next = if k + 1 == steps { 0.0 } else { t + h };
        let k4 = edit_rhs(src, tar, x_src, eps, &d.axpy(h, &k3)?, t_next)?;
        let incr = k1.add(&k2.scale(2.0))?.add(&k3.scale(2.0))?.add(&k4)?;
        d = d.axpy(h / 6.0, &incr)?;
    }
    x_src.add(&d)
}

/// Edit-sequence result integrated densely from `t_max` with Euler, starting
/// at `x_src`, with a fixed noise `eps` for the source path.
pub fn dense_edit(
    src: &GaussianSpec,
    tar: &GaussianSpec,
    x_src: &TensorState,
    t_max: f64,
    eps: &TensorState,
    steps: usize,
) -> Result<TensorState> {
    check_pair(src, tar, x_src, eps)?;
    if !(t_max > 0.0 && t_max <= 1.0) {
        return Err(FlowError::InvalidInput(format!("t_max must lie in (0, 1], got {t_max}")));
    }
    if steps == 0 {
        return Err(FlowError::InvalidConfig("dense integration needs >= 1 step".into()));
    }
    let mut d = TensorState::zeros(x_src.shape(), x_src.modality());
    for k in (1..=steps).rev() {
        let t = t_max * k as f64 / steps as f64;
        let t_prev = t_max * (k - 1) as f64 / steps as f64;
        let rhs = edit_rhs(src, tar, x_src, eps, &d, t)?;
        d = d.axpy(t_prev - t, &rhs)?;
    }
    x_src.add(&d)
}

/// Truncation bias `X^edit - X^tar,exact` of an edit started at `t_max`.
///
/// `X^edit` uses [`dense_edit`] with `ceil(t_max * DENSE_STEPS_PER_UNIT)`
/// Euler steps; the reference is [`exact_edit_reference`] with
/// [`REFERENCE_STEPS`] RK4 steps, both driven by the same `eps`.
pub fn truncation_bias(
    src: &GaussianSpec,
    tar: &GaussianSpec,
    x_src: &TensorState,
    t_max: f64,
    eps: &TensorState,
) -> Result<TensorState> {
    let dense = (t_max * DENSE_STEPS_PER_UNIT as f64).ceil().max(1.0) as usize;
    truncation_bias_with_steps(src, tar, x_src, t_max, eps, dense, REFERENCE_STEPS)
}

pub fn truncation_bias_with_steps(
    src: &GaussianSpec,
    tar: &GaussianSpec,
    x_src: &TensorState,
    t_max: f64,
    eps: &TensorState,
    dense_steps: usize,
    reference_steps: usize,
) -> Result<TensorState> {
    let edit = dense_edit(src, tar, x_src, t_max, eps, dense_steps)?;
    let exact = exact_edit_reference(src, tar, x_src, eps, reference_steps)?;
    edit.sub(&exact)
}

/// Root-mean-square coordinate deviation.
pub fn structure_distance(x_src: &TensorState, x_out: &TensorState) -> Result<f64> {
    x_src.check_same_shape(x_out)?;
    if x_src.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = x_src
        .data()
        .iter()
        .zip(x_out.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((ss / x_src.len() as f64).sqrt())
}

/// Sample mean and unbiased covariance.
pub fn empirical_moments(samples: &[TensorState]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if samples.len() < 2 {
        return Err(FlowError::InvalidInput(format!(
            "moments need >= 2 samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].len();
    for s in samples {
        samples[0].check_same_shape(s)?;
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.data()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c: Vec<f64> = s.data().iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= n - 1.0;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok((mean, cov))
}

/// W2 between the Gaussian fitted to `samples` and `target`.
pub fn fitted_w2(samples: &[TensorState], target: &GaussianSpec) -> Result<f64> {
    let (mean, cov) = empirical_moments(samples)?;
    w2_gaussian_moments(&mean, &cov, target.mean(), target.cov())
}

/// Mean and standard error of the mean (`s / sqrt(n)`, zero for one value).
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(FlowError::InvalidInput("no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Settings a metric value was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEcho {
    pub seed: u64,
    pub steps: usize,
    pub n_max: usize,
    pub sequence_mode: SequenceMode,
    pub noise_mode: NoiseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    /// Per-step or per-coordinate breakdown.
    pub aux: Vec<f64>,
    pub echo: ConfigEcho,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 8] =
        ["metric", "value", "seed", "T", "n_max", "seq_mode", "noise_mode", "aux"];

    pub fn new(name: impl Into<String>, value: f64, aux: Vec<f64>, echo: ConfigEcho) -> Result<Self> {
        let name = name.into();
        if !value.is_finite() || aux.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput(format!("metric {name} is not finite")));
        }
        Ok(Self { name, value, aux, echo })
    }

    /// Fields in [`MetricReport::CSV_HEADER`] order; `aux` is `;`-joined.
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.name.clone(),
            format!("{:?}", self.value),
            self.echo.seed.to_string(),
            self.echo.steps.to_string(),
            self.echo.n_max.to_string(),
            self.echo.sequence_mode.name().to_string(),
            self.echo.noise_mode.name().to_string(),
            self.aux.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";"),
        ]
    }
}

#[cfg(test)]
mod tests;
