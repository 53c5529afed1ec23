//! Joint video/audio editing with a dual-stream field.
//!
//! With source audio, the noise of both streams is estimated at `t = 0` and
//! both streams follow the target-sequence rule. Without it, the two audio
//! streams start from one shared draw and are Euler-denoised from `t = 1`
//! down to `t_max` while the video is noised with fresh draws; the main loop
//! then keeps denoising audio by plain Euler while the video follows the
//! target-sequence rule.

use super::{step_target, EditConfig, NoiseMode, SequenceMode};
use crate::error::{FlowError, Result};
use crate::field::{DualStreamField, DualVelocity};
use crate::flow::{cfg_combine, noisy_source};
use crate::rng::Rng64;
use crate::tensor::{Condition, Modality, TensorState};

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub video: TensorState,
    pub audio: TensorState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvPhase {
    /// Audio pre-denoising when the source audio is missing.
    Pre,
    Main,
    /// Returned state at `t = 0`.
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvStepRecord {
    pub phase: AvPhase,
    pub t: f64,
    pub video_src: TensorState,
    pub video_tar: TensorState,
    pub audio_src: TensorState,
    pub audio_tar: TensorState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvEditResult {
    pub output: DualState,
    pub records: Vec<AvStepRecord>,
    pub draws: u64,
}

fn checked_pair<F: DualStreamField + ?Sized>(
    field: &F,
    video: &TensorState,
    audio: &TensorState,
    c: &Condition,
    t: f64,
    step: usize,
) -> Result<DualVelocity> {
    let v = field.velocity_pair(video, audio, c, t)?;
    if !v.video.is_finite() || !v.audio.is_finite() {
        return Err(FlowError::Numerical { step, t });
    }
    Ok(v)
}

fn target_pair<F: DualStreamField + ?Sized>(
    field: &F,
    video: &TensorState,
    audio: &TensorState,
    c: &Condition,
    t: f64,
    scale: f64,
    step: usize,
) -> Result<DualVelocity> {
    let v = checked_pair(field, video, audio, c, t, step)?;
    if scale == 1.0 {
        return Ok(v);
    }
    let u = checked_pair(field, video, audio, &Condition::null(c.dim()), t, step)?;
    Ok(DualVelocity {
        video: cfg_combine(&v.video, &u.video, scale)?,
        audio: cfg_combine(&v.audio, &u.audio, scale)?,
    })
}

fn euler(x: &TensorState, v: &TensorState, dt: f64) -> Result<TensorState> {
    x.axpy(dt, v)
}

fn estimate(x: &TensorState, v: &TensorState, t: f64) -> Result<TensorState> {
    super::estimate_noise(x, v, t)
}

/// Joint editing of a video state and an optional source audio state.
///
/// Returns the target video and audio at `t = 0`. Prompts must be non-null.
pub fn av_edit<F: DualStreamField + ?Sized>(
    field: &F,
    x_src: &TensorState,
    a_src: Option<&TensorState>,
    c_src: &Condition,
    c_tar: &Condition,
    cfg: &EditConfig,
) -> Result<AvEditResult> {
    if cfg.sequence_mode != SequenceMode::Target {
        return Err(FlowError::InvalidConfig("av_edit needs sequence mode target".into()));
    }
    if c_src.is_null() || c_tar.is_null() {
        return Err(FlowError::InvalidConfig("source and target prompts are required".into()));
    }
    for c in [c_src, c_tar] {
        if c.dim() != field.condition_dim() {
            return Err(FlowError::Shape {
                expected: vec![field.condition_dim()],
                got: vec![c.dim()],
            });
        }
    }
    if x_src.len() != field.video_dim() {
        return Err(FlowError::Shape {
            expected: vec![field.video_dim()],
            got: x_src.shape().to_vec(),
        });
    }
    if let Some(a) = a_src {
        if a.len() != field.audio_dim() {
            return Err(FlowError::Shape {
                expected: vec![field.audio_dim()],
                got: a.shape().to_vec(),
            });
        }
    }
    let schedule = cfg.schedule()?;
    let n_max = schedule.n_max();
    let mode = cfg.noise_mode;
    let mut rng = Rng64::new(cfg.seed);
    let video_noise = |rng: &mut Rng64| rng.normal_state(x_src.shape(), x_src.modality());
    let mut records = Vec::new();

    // Initial video noise and audio streams at t_max.
    let (mut eps_v, mut eps_a, mut a_src_t, mut a_tar) = match a_src {
        Some(a) => {
            let (eps_v, eps_a) = match mode {
                NoiseMode::Estimated => {
                    let v0 = checked_pair(field, x_src, a, c_src, 0.0, 0)?;
                    (estimate(x_src, &v0.video, 0.0)?, estimate(a, &v0.audio, 0.0)?)
                }
                NoiseMode::Random => {
                    let ev = video_noise(&mut rng);
                    (ev, rng.normal_state(a.shape(), a.modality()))
                }
            };
            let a_t = noisy_source(a, &eps_a, schedule.t_max())?;
            (eps_v, Some(eps_a), a_t.clone(), a_t)
        }
        None => {
            let init = rng.normal_state(&[field.audio_dim()], Modality::Audio);
            let (mut a_s, mut a_t) = (init.clone(), init);
            for i in ((n_max + 1)..=schedule.steps()).rev() {
                let (t, t_prev) = (schedule.t(i), schedule.t(i - 1));
                let eps = video_noise(&mut rng);
                let x_s = noisy_source(x_src, &eps, t)?;
                let x_t = noisy_source(x_src, &eps, t)?;
                let vs = checked_pair(field, &x_s, &a_s, c_src, t, i)?;
                let vt = target_pair(field, &x_t, &a_t, c_tar, t, cfg.cfg_scale, i)?;
                let next_s = euler(&a_s, &vs.audio, t_prev - t)?;
                let next_t = euler(&a_t, &vt.audio, t_prev - t)?;
                records.push(AvStepRecord {
                    phase: AvPhase::Pre,
                    t,
                    video_src: x_s,
                    video_tar: x_t,
                    audio_src: std::mem::replace(&mut a_s, next_s),
                    audio_tar: std::mem::replace(&mut a_t, next_t),
                });
            }
            (video_noise(&mut rng), None, a_s, a_t)
        }
    };

    let mut x_src_t = noisy_source(x_src, &eps_v, schedule.t_max())?;
    let mut x_tar = x_src_t.clone();
    for i in (1..=n_max).rev() {
        let (t, t_prev) = (schedule.t(i), schedule.t(i - 1));
        let dt = t_prev - t;
        let vs = checked_pair(field, &x_src_t, &a_src_t, c_src, t, i)?;
        let vt = target_pair(field, &x_tar, &a_tar, c_tar, t, cfg.cfg_scale, i)?;
        eps_v = match mode {
            NoiseMode::Estimated => estimate(&x_src_t, &vs.video, t)?,
            NoiseMode::Random => video_noise(&mut rng),
        };
        let x_src_prev = noisy_source(x_src, &eps_v, t_prev)?;
        let x_tar_prev = step_target(&x_tar, &x_src_t, &x_src_prev, &vt.video, &vs.video, t, t_prev)?;
        let (a_src_prev, a_tar_prev) = match (a_src, eps_a.as_mut()) {
            (Some(a), Some(eps_a)) => {
                *eps_a = match mode {
                    NoiseMode::Estimated => estimate(&a_src_t, &vs.audio, t)?,
                    NoiseMode::Random => rng.normal_state(a.shape(), a.modality()),
                };
                let a_prev = noisy_source(a, eps_a, t_prev)?;
                let tar_prev = step_target(&a_tar, &a_src_t, &a_prev, &vt.audio, &vs.audio, t, t_prev)?;
                (a_prev, tar_prev)
            }
            _ => (euler(&a_src_t, &vs.audio, dt)?, euler(&a_tar, &vt.audio, dt)?),
        };
        records.push(AvStepRecord {
            phase: AvPhase::Main,
            t,
            video_src: std::mem::replace(&mut x_src_t, x_src_prev),
            video_tar: std::mem::replace(&mut x_tar, x_tar_prev),
            audio_src: std::mem::replace(&mut a_src_t, a_src_prev),
            audio_tar: std::mem::replace(&mut a_tar, a_tar_prev),
        });
    }
    records.push(AvStepRecord {
        phase: AvPhase::Final,
        t: schedule.t(0),
        video_src: x_src_t,
        video_tar: x_tar.clone(),
        audio_src: a_src_t,
        audio_tar: a_tar.clone(),
    });
    Ok(AvEditResult {
        output: DualState {
            video: x_tar,
            audio: a_tar,
        },
        records,
        draws: rng.normals_drawn(),
    })
}
