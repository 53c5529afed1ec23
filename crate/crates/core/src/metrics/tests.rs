use super::*;
use crate::gaussian::sample_gaussian;
use crate::rng::Rng64;
use crate::sampler::{flowedit, EditConfig};
use crate::tensor::{Condition, Modality};
use proptest::prelude::*;

fn v(x: &[f64]) -> TensorState {
    TensorState::vector(x.to_vec()).unwrap()
}

fn refs(xs: &[TensorState]) -> Vec<&TensorState> {
    xs.iter().collect()
}

#[test]
fn smoothness_of_collinear_points_is_zero() {
    let pts: Vec<_> = (0..6).map(|k| v(&[k as f64, 3.0 - 2.0 * k as f64])).collect();
    assert_eq!(smoothness_of(&refs(&pts)).unwrap(), 0.0);
}

#[test]
fn smoothness_of_alternating_sequence() {
    // second differences are +-4, squared 16, averaged per point and coordinate
    let pts: Vec<_> = (0..7).map(|k| v(&[if k % 2 == 0 { 1.0 } else { -1.0 }])).collect();
    assert_eq!(smoothness_of(&refs(&pts)).unwrap(), 16.0);
    // a second, constant coordinate halves the per-coordinate mean
    let pts: Vec<_> = (0..7).map(|k| v(&[if k % 2 == 0 { 1.0 } else { -1.0 }, 5.0])).collect();
    assert_eq!(smoothness_of(&refs(&pts)).unwrap(), 8.0);
}

#[test]
fn smoothness_needs_three_points() {
    let pts = vec![v(&[0.0]), v(&[1.0])];
    assert!(matches!(smoothness_of(&refs(&pts)), Err(FlowError::InvalidInput(_))));
}

proptest! {
    #[test]
    fn smoothness_is_shift_invariant_and_quadratic_in_scale(
        raw in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..12),
        shift in prop::collection::vec(-10.0f64..10.0, 2),
        scale in 0.1f64..10.0,
    ) {
        let pts: Vec<_> = raw.iter().map(|p| v(p)).collect();
        let s = v(&shift);
        let base = smoothness_of(&refs(&pts)).unwrap();
        let shifted: Vec<_> = pts.iter().map(|p| p.add(&s).unwrap()).collect();
        let scaled: Vec<_> = pts.iter().map(|p| p.scale(scale)).collect();
        let tol = 1e-9 * (1.0 + base);
        prop_assert!((smoothness_of(&refs(&shifted)).unwrap() - base).abs() < tol * 100.0);
        prop_assert!((smoothness_of(&refs(&scaled)).unwrap() - scale * scale * base).abs() < tol * scale * scale);
    }
}

/// Independent oracle for equal-variance scalar pairs N(m_s, s) -> N(m_t, s).
///
/// The offset D obeys `dD/dt = a(t) D - (m_t - m_s) t / S(t)` with
/// `S = (1-t)^2 s + t^2` and `a = (t - (1-t) s) / S`, independent of the
/// source path. Integrated with classic RK4 on a fine grid.
fn scalar_offset(s: f64, dm: f64, t_start: f64, steps: usize) -> f64 {
    let f = |t: f64, d: f64| {
        let st = (1.0 - t).powi(2) * s + t * t;
        (t - (1.0 - t) * s) / st * d - dm * t / st
    };
    let h = -t_start / steps as f64;
    let mut d = 0.0;
    for k in 0..steps {
        let t = t_start + k as f64 * h;
        let k1 = f(t, d);
        let k2 = f(t + h / 2.0, d + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, d + h / 2.0 * k2);
        let k4 = f(t + h, d + h * k3);
        d += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    d
}

fn unit_pair() -> (GaussianSpec, GaussianSpec) {
    (
        GaussianSpec::isotropic(1, 0.0, 1.0).unwrap(),
        GaussianSpec::isotropic(1, 2.0, 1.0).unwrap(),
    )
}

#[test]
fn truncation_bias_matches_independent_ode_oracle() {
    let (src, tar) = unit_pair();
    let oracle = scalar_offset(1.0, 2.0, 0.7, 20_000) - scalar_offset(1.0, 2.0, 1.0, 20_000);
    assert!(oracle < -0.5, "oracle {oracle}");
    for (x, e) in [(0.3, -1.1), (-2.0, 0.4)] {
        let b = truncation_bias(&src, &tar, &v(&[x]), 0.7, &v(&[e])).unwrap();
        assert!((b.data()[0] - oracle).abs() < 1e-4, "{} vs {oracle}", b.data()[0]);
    }
}

#[test]
fn truncation_bias_vanishes_without_truncation() {
    let src = GaussianSpec::diagonal(vec![0.0, 1.0], &[1.0, 0.5]).unwrap();
    let tar = GaussianSpec::diagonal(vec![2.0, -1.0], &[0.25, 2.0]).unwrap();
    let b = truncation_bias(&src, &tar, &v(&[0.4, -0.2]), 1.0, &v(&[1.2, 0.3])).unwrap();
    assert!(b.norm() < 1e-3, "{b:?}");
}

#[test]
fn truncation_bias_is_zero_for_identical_specs() {
    let src = GaussianSpec::diagonal(vec![0.5, 1.0], &[1.0, 0.5]).unwrap();
    let b = truncation_bias(&src, &src.clone(), &v(&[0.4, -0.2]), 0.7, &v(&[1.2, 0.3])).unwrap();
    assert!(b.data().iter().all(|&x| x == 0.0));
}

#[test]
fn truncation_residual_halves_with_the_step() {
    // Unequal variances make the offset depend on the path, so Euler has a
    // first-order residual at t_max = 1.
    let src = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
    let tar = GaussianSpec::isotropic(1, 2.0, 0.25).unwrap();
    let (x, e) = (v(&[0.8]), v(&[-0.6]));
    let r1 = truncation_bias_with_steps(&src, &tar, &x, 1.0, &e, 500, REFERENCE_STEPS).unwrap().norm();
    let r2 = truncation_bias_with_steps(&src, &tar, &x, 1.0, &e, 1000, REFERENCE_STEPS).unwrap().norm();
    let r4 = truncation_bias_with_steps(&src, &tar, &x, 1.0, &e, 2000, REFERENCE_STEPS).unwrap().norm();
    assert!(r1 > 1e-5, "residual {r1}");
    for ratio in [r1 / r2, r2 / r4] {
        assert!((1.7..2.3).contains(&ratio), "ratio {ratio} ({r1}, {r2}, {r4})");
    }
}

#[test]
fn flowedit_reproduces_dense_bias() {
    let (src, tar) = unit_pair();
    let field = crate::gaussian::GaussianConditionalField::new(2, 1)
        .with_spec(&Condition::one_hot(0, 2).unwrap(), src.clone())
        .unwrap()
        .with_spec(&Condition::one_hot(1, 2).unwrap(), tar.clone())
        .unwrap();
    let x = v(&[0.2]);
    let cfg = EditConfig::lip_sync_default().with_modes(SequenceMode::Edit, NoiseMode::Random).with_seed(3);
    let r = flowedit(&field, &x, &Condition::one_hot(0, 2).unwrap(), &Condition::one_hot(1, 2).unwrap(), &cfg).unwrap();
    let eps = r.trajectory.records[0].eps.clone();
    let exact = exact_edit_reference(&src, &tar, &x, &eps, REFERENCE_STEPS).unwrap();
    let got = r.output.sub(&exact).unwrap().data()[0];
    let want = truncation_bias(&src, &tar, &x, 0.7, &eps).unwrap().data()[0];
    assert!(((got - want) / want).abs() < 0.1, "{got} vs {want}");
}

#[test]
fn truncation_bias_rejects_bad_inputs() {
    let (src, tar) = unit_pair();
    assert!(truncation_bias(&src, &tar, &v(&[0.0]), 0.0, &v(&[0.0])).is_err());
    assert!(truncation_bias(&src, &tar, &v(&[0.0]), 1.5, &v(&[0.0])).is_err());
    assert!(truncation_bias(&src, &tar, &v(&[0.0, 1.0]), 0.5, &v(&[0.0, 1.0])).is_err());
}

#[test]
fn structure_distance_examples() {
    let x = v(&[1.0, -2.0, 0.5]);
    assert_eq!(structure_distance(&x, &x).unwrap(), 0.0);
    assert_eq!(structure_distance(&x, &x.map(|a| a + 1.0)).unwrap(), 1.0);
    assert!(structure_distance(&x, &v(&[1.0])).is_err());
    assert!(structure_distance(&x, &v(&[1.0, -2.0, 0.6])).unwrap() > 0.0);
}

#[test]
fn empirical_moments_examples() {
    let c = vec![v(&[1.5, -2.0]); 4];
    let (m, cov) = empirical_moments(&c).unwrap();
    assert_eq!(m, vec![1.5, -2.0]);
    assert!(cov.iter().all(|&x| x == 0.0));
    let (m, cov) = empirical_moments(&[v(&[0.0]), v(&[2.0])]).unwrap();
    assert_eq!(m, vec![1.0]);
    assert_eq!(cov[(0, 0)], 2.0);
    assert!(empirical_moments(&[v(&[0.0])]).is_err());
    assert!(empirical_moments(&[v(&[0.0]), v(&[0.0, 1.0])]).is_err());
}

#[test]
fn empirical_moments_of_oracle_draws() {
    let spec = GaussianSpec::new(
        vec![1.0, -0.5],
        nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]),
    )
    .unwrap();
    let xs = sample_gaussian(&spec, 100_000, &mut Rng64::new(5)).unwrap();
    let (m, cov) = empirical_moments(&xs).unwrap();
    for i in 0..2 {
        assert!((m[i] - spec.mean()[i]).abs() < 0.05);
        for j in 0..2 {
            assert!((cov[(i, j)] - spec.cov()[(i, j)]).abs() < 0.05);
        }
    }
}

#[test]
fn empirical_mean_error_shrinks_at_root_n() {
    // RMS mean error over 40 replicates; each tenfold increase in n should
    // shrink it by about sqrt(10) ~ 3.16.
    let spec = GaussianSpec::isotropic(1, 0.0, 1.0).unwrap();
    let rms = |n: usize| {
        let sq: f64 = (0..40)
            .map(|r| {
                let xs = sample_gaussian(&spec, n, &mut Rng64::with_stream(r, n as u64)).unwrap();
                empirical_moments(&xs).unwrap().0[0].powi(2)
            })
            .sum();
        (sq / 40.0).sqrt()
    };
    let (a, b, c) = (rms(1_000), rms(10_000), rms(100_000));
    for ratio in [a / b, b / c] {
        assert!((2.0..5.0).contains(&ratio), "ratio {ratio}: {a} {b} {c}");
    }
}

#[test]
fn fitted_w2_accepts_degenerate_samples() {
    let tar = GaussianSpec::isotropic(1, 2.0, 1.0).unwrap();
    let xs = vec![v(&[2.0]); 5];
    // point mass at the mean: W2 = sqrt(trace(Sigma)) = 1
    assert!((fitted_w2(&xs, &tar).unwrap() - 1.0).abs() < 1e-12);
    let many = sample_gaussian(&tar, 50_000, &mut Rng64::new(1)).unwrap();
    assert!(fitted_w2(&many, &tar).unwrap() < 0.03);
}

#[test]
fn mean_stderr_examples() {
    assert_eq!(mean_stderr(&[3.0]).unwrap(), (3.0, 0.0));
    let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(m, 2.5);
    assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    assert!(mean_stderr(&[]).is_err());
}

#[test]
fn metric_report_row() {
    let echo = ConfigEcho {
        seed: 7,
        steps: 20,
        n_max: 14,
        sequence_mode: SequenceMode::Target,
        noise_mode: NoiseMode::Estimated,
    };
    let r = MetricReport::new("smoothness", 0.25, vec![1.0, 0.5], echo.clone()).unwrap();
    assert_eq!(r.csv_row().len(), MetricReport::CSV_HEADER.len());
    assert_eq!(
        r.csv_row(),
        vec!["smoothness", "0.25", "7", "20", "14", "target", "estimated", "1.0;0.5"]
    );
    assert!(MetricReport::new("x", f64::NAN, vec![], echo).is_err());
}

#[test]
fn smoothness_reads_the_selected_stream() {
    let mk = |k: usize| v(&[k as f64]);
    let traj = Trajectory {
        mode: SequenceMode::Target,
        records: (0..4)
            .map(|k| crate::sampler::StepRecord {
                t: 1.0 - k as f64 / 4.0,
                source: mk(k * k),
                current: mk(k),
                eps: TensorState::zeros(&[1], Modality::Generic),
                v_src: None,
                v_tar: None,
            })
            .collect(),
    };
    assert_eq!(smoothness(&traj, Stream::Current).unwrap(), 0.0);
    assert_eq!(smoothness(&traj, Stream::Source).unwrap(), 4.0);
}
