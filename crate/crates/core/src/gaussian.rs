//! Closed-form Gaussian oracles.
//!
//! For data `x0 ~ N(mu, Sigma)` and noise `eps ~ N(0, I)` on the rectified path
//! `x_t = (1 - t) x0 + t eps`, the marginal velocity
//! `V(x, t) = E[eps - x0 | x_t = x]` is
//!
//! ```text
//! S_t    = (1 - t)^2 Sigma + t^2 I
//! V(x,t) = (t I - (1 - t) Sigma) S_t^{-1} (x - (1 - t) mu) - mu
//! ```
//!
//! with the limit `V(x, 1) = x - mu`. Everything here is exact up to floating
//! point and is used as ground truth by the metrics and acceptance tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FlowError, Result};
use crate::field::VelocityField;
use crate::rng::Rng64;
use crate::tensor::{Condition, Modality, TensorState};

#[derive(Debug, Clone)]
pub struct GaussianSpec {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    // Sigma = Q diag(lambda) Q^T
    eig_vectors: DMatrix<f64>,
    eig_values: Vec<f64>,
    diagonal: bool,
}

impl PartialEq for GaussianSpec {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(FlowError::OracleConstruction("empty mean".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(FlowError::OracleConstruction(format!(
                "covariance is {}x{} but mean has dimension {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(FlowError::OracleConstruction("non-finite parameters".into()));
        }
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(FlowError::OracleConstruction(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| {
                FlowError::OracleConstruction("covariance is not positive definite".into())
            })?
            .l();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov[(i, j)] == 0.0));
        let (eig_vectors, eig_values) = if diagonal {
            (DMatrix::identity(d, d), cov.diagonal().iter().copied().collect())
        } else {
            let eig = SymmetricEigen::new(cov.clone());
            (eig.eigenvectors, eig.eigenvalues.iter().copied().collect::<Vec<_>>())
        };
        if eig_values.iter().any(|&l| l <= 0.0) {
            return Err(FlowError::OracleConstruction(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self {
            mean,
            cov,
            chol,
            eig_vectors,
            eig_values,
            diagonal,
        })
    }

    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(FlowError::OracleConstruction(format!(
                "{} variances for dimension {}",
                variances.len(),
                mean.len()
            )));
        }
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
        Self::new(mean, cov)
    }

    /// `N(mean * 1, variance * I)` in `dim` dimensions.
    pub fn isotropic(dim: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::diagonal(vec![mean; dim], &vec![variance; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    fn check_state(&self, x: &TensorState) -> Result<()> {
        if x.len() != self.dim() {
            return Err(FlowError::shape(&[self.dim()], x.shape()));
        }
        Ok(())
    }
}

/// Exact marginal velocity of the rectified flow toward `spec`.
pub fn gaussian_marginal_velocity(spec: &GaussianSpec, x: &TensorState, t: f64) -> Result<TensorState> {
    spec.check_state(x)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    let mut out = vec![0.0; spec.dim()];
    marginal_velocity_into(spec, x.data(), t, &mut out);
    Ok(TensorState::from_parts(out, x.shape().to_vec(), x.modality()))
}

pub(crate) fn marginal_velocity_into(spec: &GaussianSpec, x: &[f64], t: f64, out: &mut [f64]) {
    let mu = &spec.mean;
    if t == 1.0 {
        for ((o, xi), m) in out.iter_mut().zip(x).zip(mu) {
            *o = xi - m;
        }
        return;
    }
    let s = 1.0 - t;
    let gain = |lambda: f64| (t - s * lambda) / (s * s * lambda + t * t);
    if spec.diagonal {
        for k in 0..x.len() {
            out[k] = gain(spec.eig_values[k]) * (x[k] - s * mu[k]) - mu[k];
        }
        return;
    }
    let d = x.len();
    let q = &spec.eig_vectors;
    // z = diag(gain) Q^T (x - s mu)
    let mut z = vec![0.0; d];
    for (k, zk) in z.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..d {
            acc += q[(i, k)] * (x[i] - s * mu[i]);
        }
        *zk = gain(spec.eig_values[k]) * acc;
    }
    for i in 0..d {
        let mut acc = 0.0;
        for (k, zk) in z.iter().enumerate() {
            acc += q[(i, k)] * zk;
        }
        out[i] = acc - mu[i];
    }
}

/// Kernel estimate of `E[eps - x0 | x_t = x]` with its standard error.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub value: TensorState,
    /// Per-coordinate standard error of `value`.
    pub std_err: Vec<f64>,
    /// Kish effective sample size of the kernel weights.
    pub effective_samples: f64,
}

pub const MIN_MC_SAMPLES: usize = 10_000;
pub const MIN_EFFECTIVE_SAMPLES: f64 = 30.0;

/// Default kernel bandwidth `0.05 * sqrt(t)`.
pub fn default_bandwidth(t: f64) -> f64 {
    0.05 * t.sqrt()
}

/// Brute-force Nadaraya–Watson estimate of the marginal velocity.
///
/// Draws `n` pairs `(x0, eps)`, forms `x_t`, and averages `eps - x0` with
/// Gaussian kernel weights on `|x_t - x|`.
pub fn mc_conditional_velocity(
    spec: &GaussianSpec,
    x: &TensorState,
    t: f64,
    n: usize,
    bandwidth: f64,
    rng: &mut Rng64,
) -> Result<McEstimate> {
    spec.check_state(x)?;
    if n < MIN_MC_SAMPLES {
        return Err(FlowError::InvalidInput(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(FlowError::InvalidInput(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    let d = spec.dim();
    let inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let (mut sw, mut sw2) = (0.0, 0.0);
    let mut swy = vec![0.0; d];
    let mut sw2y = vec![0.0; d];
    let mut sw2yy = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut x0 = vec![0.0; d];
    let mut eps = vec![0.0; d];
    for _ in 0..n {
        draw_into(spec, rng, &mut z, &mut x0);
        for e in eps.iter_mut() {
            *e = rng.normal();
        }
        let mut r2 = 0.0;
        for k in 0..d {
            let xt = (1.0 - t) * x0[k] + t * eps[k];
            r2 += (xt - x.data()[k]).powi(2);
        }
        let w = (-r2 * inv_two_h2).exp();
        if w == 0.0 {
            continue;
        }
        sw += w;
        sw2 += w * w;
        for k in 0..d {
            let y = eps[k] - x0[k];
            swy[k] += w * y;
            sw2y[k] += w * w * y;
            sw2yy[k] += w * w * y * y;
        }
    }
    let ess = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
    if ess < MIN_EFFECTIVE_SAMPLES {
        return Err(FlowError::InsufficientSamples {
            ess,
            min: MIN_EFFECTIVE_SAMPLES,
        });
    }
    let mut value = vec![0.0; d];
    let mut std_err = vec![0.0; d];
    for k in 0..d {
        let m = swy[k] / sw;
        // sum w^2 (y - m)^2, expanded
        let resid = (sw2yy[k] - 2.0 * m * sw2y[k] + m * m * sw2).max(0.0);
        value[k] = m;
        std_err[k] = resid.sqrt() / sw;
    }
    Ok(McEstimate {
        value: TensorState::from_parts(value, x.shape().to_vec(), x.modality()),
        std_err,
        effective_samples: ess,
    })
}

fn draw_into(spec: &GaussianSpec, rng: &mut Rng64, z: &mut [f64], out: &mut [f64]) {
    let d = spec.dim();
    for zi in z.iter_mut() {
        *zi = rng.normal();
    }
    for i in 0..d {
        let mut acc = spec.mean[i];
        for j in 0..=i {
            acc += spec.chol[(i, j)] * z[j];
        }
        out[i] = acc;
    }
}

/// `n` iid draws `mu + L z` with `Sigma = L L^T`.
pub fn sample_gaussian(spec: &GaussianSpec, n: usize, rng: &mut Rng64) -> Result<Vec<TensorState>> {
    if n == 0 {
        return Err(FlowError::InvalidInput("sample count must be >= 1".into()));
    }
    let d = spec.dim();
    let mut z = vec![0.0; d];
    Ok((0..n)
        .map(|_| {
            let mut x = vec![0.0; d];
            draw_into(spec, rng, &mut z, &mut x);
            TensorState::from_parts(x, vec![d], Modality::Generic)
        })
        .collect())
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let q = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    q * s * q.transpose()
}

/// Closed-form 2-Wasserstein distance between two Gaussians.
pub fn w2_gaussian(a: &GaussianSpec, b: &GaussianSpec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(FlowError::shape(&[a.dim()], &[b.dim()]));
    }
    if a == b {
        return Ok(0.0);
    }
    let mean_sq: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
    let cov_term = if a.diagonal && b.diagonal {
        a.eig_values
            .iter()
            .zip(&b.eig_values)
            .map(|(la, lb)| (la.sqrt() - lb.sqrt()).powi(2))
            .sum::<f64>()
    } else {
        psd_cov_term(&a.cov, &b.cov)
    };
    Ok((mean_sq + cov_term.max(0.0)).sqrt())
}

fn psd_cov_term(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let sb = sym_sqrt(b);
    let cross = sym_sqrt(&(&sb * a * &sb));
    a.trace() + b.trace() - 2.0 * cross.trace()
}

/// 2-Wasserstein distance between Gaussians given by raw moments.
///
/// Covariances only need to be symmetric positive semi-definite, so fitted
/// moments of degenerate samples are accepted.
pub fn w2_gaussian_moments(
    mean_a: &[f64],
    cov_a: &DMatrix<f64>,
    mean_b: &[f64],
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    let d = mean_a.len();
    for (m, c) in [(mean_b, cov_b), (mean_a, cov_a)] {
        if m.len() != d || c.nrows() != d || c.ncols() != d {
            return Err(FlowError::shape(&[d], &[m.len()]));
        }
    }
    let mean_sq: f64 = mean_a.iter().zip(mean_b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((mean_sq + psd_cov_term(cov_a, cov_b).max(0.0)).sqrt())
}

/// Analytic conditional field: one Gaussian target per condition vector.
///
/// Conditions are matched by exact vector equality. A null condition maps to
/// the optional unconditional spec.
#[derive(Debug, Clone)]
pub struct GaussianConditionalField {
    entries: Vec<(Vec<f64>, GaussianSpec)>,
    null_spec: Option<GaussianSpec>,
    condition_dim: usize,
    dim: usize,
}

impl GaussianConditionalField {
    pub fn new(condition_dim: usize, dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            null_spec: None,
            condition_dim,
            dim,
        }
    }

    pub fn with_spec(mut self, condition: &Condition, spec: GaussianSpec) -> Result<Self> {
        self.check_spec(&spec)?;
        condition.check_dim(self.condition_dim)?;
        if condition.is_null() {
            self.null_spec = Some(spec);
            return Ok(self);
        }
        if let Some(slot) = self.entries.iter_mut().find(|(k, _)| k == condition.vector()) {
            slot.1 = spec;
        } else {
            self.entries.push((condition.vector().to_vec(), spec));
        }
        Ok(self)
    }

    pub fn with_null_spec(mut self, spec: GaussianSpec) -> Result<Self> {
        self.check_spec(&spec)?;
        self.null_spec = Some(spec);
        Ok(self)
    }

    fn check_spec(&self, spec: &GaussianSpec) -> Result<()> {
        if spec.dim() != self.dim {
            return Err(FlowError::OracleConstruction(format!(
                "spec dimension {} differs from field dimension {}",
                spec.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn spec_for(&self, c: &Condition) -> Result<&GaussianSpec> {
        c.check_dim(self.condition_dim)?;
        if c.is_null() {
            if let Some(spec) = &self.null_spec {
                return Ok(spec);
            }
        }
        self.entries
            .iter()
            .find(|(k, _)| k.as_slice() == c.vector())
            .map(|(_, s)| s)
            .ok_or_else(|| {
                FlowError::InvalidInput(format!("no Gaussian registered for condition {:?}", c.vector()))
            })
    }
}

impl VelocityField for GaussianConditionalField {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn condition_dim(&self) -> usize {
        self.condition_dim
    }

    fn velocity(&self, x: &TensorState, c: &Condition, t: f64) -> Result<TensorState> {
        self.check_inputs(x, c)?;
        gaussian_marginal_velocity(self.spec_for(c)?, x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(x: f64) -> TensorState {
        TensorState::scalar(x).unwrap()
    }

    #[test]
    fn velocity_examples() {
        let spec = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
        for x in [-3.0, 0.0, 0.4, 2.0] {
            let v = gaussian_marginal_velocity(&spec, &s(x), 0.5).unwrap();
            assert_eq!(v.data()[0], 0.0);
        }
        let v = gaussian_marginal_velocity(&spec, &s(2.0), 1.0).unwrap();
        assert_eq!(v.data()[0], 2.0);
    }

    #[test]
    fn velocity_at_data_end_points_back_from_mean() {
        // V(x, 0) = E[eps] - x = -x
        let spec = GaussianSpec::diagonal(vec![1.0, -2.0], &[0.5, 3.0]).unwrap();
        let x = TensorState::vector(vec![0.3, 0.7]).unwrap();
        let v = gaussian_marginal_velocity(&spec, &x, 0.0).unwrap();
        assert!((v.data()[0] + 0.3).abs() < 1e-15);
        assert!((v.data()[1] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn full_and_diagonal_paths_agree() {
        let diag = GaussianSpec::diagonal(vec![0.5, -1.0], &[0.3, 2.0]).unwrap();
        // Same covariance, forced through the eigen path by a tiny rotation of 0.
        let mut full = diag.clone();
        full.diagonal = false;
        let x = TensorState::vector(vec![1.2, -0.4]).unwrap();
        for t in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let a = gaussian_marginal_velocity(&diag, &x, t).unwrap();
            let b = gaussian_marginal_velocity(&full, &x, t).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn full_covariance_matches_direct_inverse() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 0.5]);
        let mu = vec![1.0, -0.5];
        let spec = GaussianSpec::new(mu.clone(), cov.clone()).unwrap();
        let x = TensorState::vector(vec![0.2, 0.9]).unwrap();
        for t in [0.05f64, 0.3, 0.77] {
            let s_t = &cov * (1.0 - t).powi(2) + DMatrix::identity(2, 2) * t * t;
            let a = DMatrix::identity(2, 2) * t - &cov * (1.0 - t);
            let y = DVector::from_vec(vec![0.2 - (1.0 - t) * mu[0], 0.9 - (1.0 - t) * mu[1]]);
            let direct = a * s_t.try_inverse().unwrap() * y - DVector::from_vec(mu.clone());
            let v = gaussian_marginal_velocity(&spec, &x, t).unwrap();
            assert!((v.data()[0] - direct[0]).abs() < 1e-12);
            assert!((v.data()[1] - direct[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_covariance() {
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianSpec::new(vec![0.0, 0.0], not_pd),
            Err(FlowError::OracleConstruction(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianSpec::new(vec![0.0, 0.0], asym).is_err());
        assert!(GaussianSpec::diagonal(vec![0.0], &[-1.0]).is_err());
    }

    #[test]
    fn mc_symmetric_case() {
        let spec = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
        let est = mc_conditional_velocity(&spec, &s(0.0), 0.5, 1_000_000, default_bandwidth(0.5), &mut Rng64::new(1))
            .unwrap();
        assert!(est.value.data()[0].abs() < 3.0 * est.std_err[0], "{est:?}");
    }

    #[test]
    fn mc_agrees_with_closed_form() {
        let spec = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
        let t = 0.3;
        let exact = gaussian_marginal_velocity(&spec, &s(1.0), t).unwrap();
        let est = mc_conditional_velocity(&spec, &s(1.0), t, 400_000, default_bandwidth(t), &mut Rng64::new(2))
            .unwrap();
        let z = (est.value.data()[0] - exact.data()[0]) / est.std_err[0];
        assert!(z.abs() < 3.0, "z = {z}");
    }

    #[test]
    fn mc_is_deterministic_and_validates() {
        let spec = GaussianSpec::isotropic(1, 1.0, 0.5).unwrap();
        let run = |seed| {
            mc_conditional_velocity(&spec, &s(0.5), 0.4, 20_000, 0.1, &mut Rng64::new(seed)).unwrap()
        };
        assert_eq!(run(4).value, run(4).value);
        assert!(mc_conditional_velocity(&spec, &s(0.5), 0.4, 100, 0.1, &mut Rng64::new(0)).is_err());
        assert!(mc_conditional_velocity(&spec, &s(0.5), 0.4, 20_000, 0.0, &mut Rng64::new(0)).is_err());
        // A point far in the tail leaves almost no kernel mass.
        assert!(matches!(
            mc_conditional_velocity(&spec, &s(40.0), 0.4, 20_000, 0.01, &mut Rng64::new(0)),
            Err(FlowError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn sampling_examples() {
        let spec = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
        let xs = sample_gaussian(&spec, 100_000, &mut Rng64::new(3)).unwrap();
        let mean = xs.iter().map(|x| x.data()[0]).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");

        let tight = GaussianSpec::isotropic(1, 3.0, 1e-12).unwrap();
        for x in sample_gaussian(&tight, 5, &mut Rng64::new(3)).unwrap() {
            assert!((x.data()[0] - 3.0).abs() < 1e-5);
        }
        let a = sample_gaussian(&spec, 10, &mut Rng64::new(8)).unwrap();
        let b = sample_gaussian(&spec, 10, &mut Rng64::new(8)).unwrap();
        assert_eq!(a, b);
        assert!(sample_gaussian(&spec, 0, &mut Rng64::new(8)).is_err());
    }

    #[test]
    fn w2_examples() {
        let a = GaussianSpec::isotropic(2, 0.0, 1.0).unwrap();
        let b = GaussianSpec::diagonal(vec![1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((w2_gaussian(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(w2_gaussian(&a, &a).unwrap(), 0.0);
        let n1 = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
        let n4 = GaussianSpec::isotropic(1, 0.0, 4.0).unwrap();
        assert!((w2_gaussian(&n1, &n4).unwrap() - 1.0).abs() < 1e-12);
        assert!(w2_gaussian(&a, &n1).is_err());
    }

    #[test]
    fn w2_full_matches_diagonal_formula() {
        let a = GaussianSpec::diagonal(vec![0.0, 1.0], &[0.5, 2.0]).unwrap();
        let b = GaussianSpec::diagonal(vec![1.0, 1.0], &[1.5, 0.25]).unwrap();
        let mut fa = a.clone();
        fa.diagonal = false;
        let d1 = w2_gaussian(&a, &b).unwrap();
        let d2 = w2_gaussian(&fa, &b).unwrap();
        assert!((d1 - d2).abs() < 1e-10, "{d1} vs {d2}");
    }

    fn spd2() -> impl Strategy<Value = GaussianSpec> {
        (
            prop::collection::vec(-3.0f64..3.0, 2),
            0.1f64..3.0,
            0.1f64..3.0,
            -0.9f64..0.9,
        )
            .prop_map(|(mu, a, b, rho)| {
                let off = rho * (a * b).sqrt();
                let cov = DMatrix::from_row_slice(2, 2, &[a, off, off, b]);
                GaussianSpec::new(mu, cov).unwrap()
            })
    }

    proptest! {
        #[test]
        fn w2_symmetric_and_separating(a in spd2(), b in spd2()) {
            let ab = w2_gaussian(&a, &b).unwrap();
            let ba = w2_gaussian(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-9 * (1.0 + ab));
            prop_assert_eq!(w2_gaussian(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }

    #[test]
    fn conditional_field_lookup() {
        let c0 = Condition::one_hot(0, 2).unwrap();
        let c1 = Condition::one_hot(1, 2).unwrap();
        let field = GaussianConditionalField::new(2, 1)
            .with_spec(&c0, GaussianSpec::isotropic(1, 0.0, 1.0).unwrap())
            .unwrap()
            .with_spec(&c1, GaussianSpec::isotropic(1, 2.0, 1.0).unwrap())
            .unwrap();
        let v = field.velocity(&s(0.0), &c1, 1.0).unwrap();
        assert_eq!(v.data(), &[-2.0]);
        assert!(field.velocity(&s(0.0), &Condition::null(2), 0.5).is_err());
        let field = field
            .with_null_spec(GaussianSpec::isotropic(1, 1.0, 2.0).unwrap())
            .unwrap();
        assert!(field.velocity(&s(0.0), &Condition::null(2), 0.5).is_ok());
        assert!(GaussianConditionalField::new(2, 1)
            .with_spec(&c0, GaussianSpec::isotropic(2, 0.0, 1.0).unwrap())
            .is_err());
    }
}
