//! Euler generation and the editing samplers.
//!
//! Every sampler walks the schedule from `n_max` down to 0 and updates with
//! `dt = t_{i-1} - t_i < 0`. No velocity is evaluated at `t = 0` inside a
//! loop; the last record of a trajectory holds the returned state.
//!
//! Two axes select the editing variant:
//!
//! * [`SequenceMode::Edit`] iterates `X^edit`, starting at the clean source
//!   ([`flowedit`]); [`SequenceMode::Target`] iterates `X^tar`, starting at
//!   the noised source ([`sync_edit`], [`av_edit`]).
//! * [`NoiseMode::Random`] draws a fresh `eps ~ N(0, I)` for every step;
//!   [`NoiseMode::Estimated`] reuses the model-implied noise
//!   `x_t + (1 - t) v_src` of the previous step.
//!
//! The initial noise is shared by both sequence modes: with estimated noise
//! and a source condition it is `V(x_src, c_src, 0) + x_src`, otherwise a
//! single standard-normal draw.

mod av;

pub use av::{av_edit, AvEditResult, AvPhase, AvStepRecord, DualState};

use crate::error::{FlowError, Result};
use crate::field::VelocityField;
use crate::flow::{cfg_combine, noisy_source};
use crate::rng::Rng64;
use crate::schedule::{make_schedule, ScheduleKind, TimeSchedule};
use crate::tensor::{Condition, TensorState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SequenceMode {
    Edit,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseMode {
    Random,
    Estimated,
}

impl SequenceMode {
    pub fn name(self) -> &'static str {
        match self {
            SequenceMode::Edit => "edit",
            SequenceMode::Target => "target",
        }
    }
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Random => "random",
            NoiseMode::Estimated => "estimated",
        }
    }
}

impl std::str::FromStr for SequenceMode {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edit" => Ok(SequenceMode::Edit),
            "target" => Ok(SequenceMode::Target),
            _ => Err(FlowError::InvalidConfig(format!(
                "sequence mode must be edit or target, got {s:?}"
            ))),
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(NoiseMode::Random),
            "estimated" => Ok(NoiseMode::Estimated),
            _ => Err(FlowError::InvalidConfig(format!(
                "noise mode must be random or estimated, got {s:?}"
            ))),
        }
    }
}

/// How a skip count maps to the start index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkipConvention {
    /// `skip` steps are skipped from pure noise: `n_max = T - skip`.
    #[default]
    FromNoise,
    /// `skip` is the start index itself: `n_max = skip`.
    AsIndex,
}

impl std::str::FromStr for SkipConvention {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "from-noise" => Ok(SkipConvention::FromNoise),
            "as-index" => Ok(SkipConvention::AsIndex),
            _ => Err(FlowError::InvalidConfig(format!(
                "skip convention must be from-noise or as-index, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub steps: usize,
    pub n_max: usize,
    pub sequence_mode: SequenceMode,
    pub noise_mode: NoiseMode,
    /// Guidance scale on the target velocity; 1.0 disables guidance.
    pub cfg_scale: f64,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self::lip_sync_default()
    }
}

impl EditConfig {
    /// Target sequence, estimated noise, no guidance, seed 0.
    pub fn new(steps: usize, n_max: usize) -> Result<Self> {
        let cfg = Self {
            steps,
            n_max,
            sequence_mode: SequenceMode::Target,
            noise_mode: NoiseMode::Estimated,
            cfg_scale: 1.0,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_skip(steps: usize, skip: usize, convention: SkipConvention) -> Result<Self> {
        let n_max = match convention {
            SkipConvention::FromNoise => steps.checked_sub(skip).ok_or_else(|| {
                FlowError::InvalidConfig(format!("skip {skip} exceeds step count {steps}"))
            })?,
            SkipConvention::AsIndex => skip,
        };
        Self::new(steps, n_max)
    }

    /// 20 steps, 6 skipped (`n_max = 14`, `t_max = 0.7`).
    pub fn lip_sync_default() -> Self {
        Self::with_skip(20, 6, SkipConvention::FromNoise).expect("valid default")
    }

    /// 40 steps, 12 skipped (`n_max = 28`, `t_max = 0.7`).
    pub fn av_default() -> Self {
        Self::with_skip(40, 12, SkipConvention::FromNoise).expect("valid default")
    }

    pub fn with_modes(mut self, sequence_mode: SequenceMode, noise_mode: NoiseMode) -> Self {
        self.sequence_mode = sequence_mode;
        self.noise_mode = noise_mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cfg_scale(mut self, scale: f64) -> Self {
        self.cfg_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(FlowError::InvalidConfig(format!("need T >= 2, got {}", self.steps)));
        }
        if self.n_max < 1 || self.n_max > self.steps {
            return Err(FlowError::InvalidConfig(format!(
                "n_max must lie in 1..={}, got {}",
                self.steps, self.n_max
            )));
        }
        if !(self.cfg_scale >= 0.0) || !self.cfg_scale.is_finite() {
            return Err(FlowError::InvalidConfig(format!(
                "cfg scale must be finite and >= 0, got {}",
                self.cfg_scale
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<TimeSchedule> {
        self.validate()?;
        make_schedule(self.steps, ScheduleKind::Linear)?.with_n_max(self.n_max)
    }

    pub fn t_max(&self) -> f64 {
        self.n_max as f64 / self.steps as f64
    }
}

/// State of one sampler step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Noised source `X^src_t`.
    pub source: TensorState,
    /// `X^tar_t` in target mode, `X^edit_t` in edit mode.
    pub current: TensorState,
    /// Noise that built `source`.
    pub eps: TensorState,
    /// Velocities evaluated at this step; `None` on the final record.
    pub v_src: Option<TensorState>,
    pub v_tar: Option<TensorState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: SequenceMode,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn source_stream(&self) -> Vec<&TensorState> {
        self.records.iter().map(|r| &r.source).collect()
    }

    pub fn current_stream(&self) -> Vec<&TensorState> {
        self.records.iter().map(|r| &r.current).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub output: TensorState,
    pub trajectory: Trajectory,
    /// Standard-normal scalars drawn by the sampler.
    pub draws: u64,
}

/// Velocity with a finiteness check that names the step.
pub(crate) fn checked_velocity<F: VelocityField + ?Sized>(
    field: &F,
    x: &TensorState,
    c: &Condition,
    t: f64,
    step: usize,
) -> Result<TensorState> {
    let v = field.velocity(x, c, t)?;
    if !v.is_finite() {
        return Err(FlowError::Numerical { step, t });
    }
    Ok(v)
}

/// Target velocity, guided toward `c` when `scale != 1`.
fn target_velocity<F: VelocityField + ?Sized>(
    field: &F,
    x: &TensorState,
    c: &Condition,
    t: f64,
    scale: f64,
    step: usize,
) -> Result<TensorState> {
    let v = checked_velocity(field, x, c, t, step)?;
    if scale == 1.0 {
        return Ok(v);
    }
    let u = checked_velocity(field, x, &Condition::null(c.dim()), t, step)?;
    cfg_combine(&v, &u, scale)
}

/// Explicit Euler from `t = 1` to `t = 0` over the whole schedule.
pub fn generate<F: VelocityField + ?Sized>(
    field: &F,
    x1: &TensorState,
    c: &Condition,
    schedule: &TimeSchedule,
) -> Result<TensorState> {
    generate_inner(field, x1, c, schedule, None)
}

/// As [`generate`], also returning the states at `t_T, ..., t_0`.
pub fn generate_trajectory<F: VelocityField + ?Sized>(
    field: &F,
    x1: &TensorState,
    c: &Condition,
    schedule: &TimeSchedule,
) -> Result<(TensorState, Vec<TensorState>)> {
    let mut states = Vec::with_capacity(schedule.steps() + 1);
    let out = generate_inner(field, x1, c, schedule, Some(&mut states))?;
    Ok((out, states))
}

fn generate_inner<F: VelocityField + ?Sized>(
    field: &F,
    x1: &TensorState,
    c: &Condition,
    schedule: &TimeSchedule,
    mut record: Option<&mut Vec<TensorState>>,
) -> Result<TensorState> {
    field.check_inputs(x1, c)?;
    let mut x = x1.clone();
    for i in (1..=schedule.steps()).rev() {
        if let Some(r) = record.as_deref_mut() {
            r.push(x.clone());
        }
        let (t, t_prev) = (schedule.t(i), schedule.t(i - 1));
        let v = checked_velocity(field, &x, c, t, i)?;
        x = x.axpy(t_prev - t, &v)?;
    }
    if let Some(r) = record {
        r.push(x.clone());
    }
    Ok(x)
}

/// Model-implied endpoint noise `x_t + (1 - t) v`.
///
/// `t = 1` is accepted and returns `x_t`, which full-horizon edits start from.
pub fn estimate_noise(x_src_t: &TensorState, v_src: &TensorState, t: f64) -> Result<TensorState> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::InvalidInput(format!("noise estimate needs t in [0, 1], got {t}")));
    }
    x_src_t.zip_map(v_src, |x, v| x + (1.0 - t) * v)
}

/// One target-sequence step:
/// `x_tar + (t_prev - t_i)(v_tar - v_src) + (x_src_prev - x_src_i)`.
///
/// Coordinates where the target equals the source are evaluated as
/// `x_src_prev + (t_prev - t_i)(v_tar - v_src)`, which is the same quantity
/// and keeps coinciding streams bit-identical.
pub fn step_target(
    x_tar_i: &TensorState,
    x_src_i: &TensorState,
    x_src_prev: &TensorState,
    v_tar: &TensorState,
    v_src: &TensorState,
    t_i: f64,
    t_prev: f64,
) -> Result<TensorState> {
    if !(t_prev < t_i) {
        return Err(FlowError::InvalidInput(format!(
            "target step needs t_prev < t_i, got {t_prev} >= {t_i}"
        )));
    }
    for other in [x_src_i, x_src_prev, v_tar, v_src] {
        x_tar_i.check_same_shape(other)?;
    }
    let dt = t_prev - t_i;
    let data = x_tar_i
        .data()
        .iter()
        .zip(x_src_i.data())
        .zip(x_src_prev.data())
        .zip(v_tar.data().iter().zip(v_src.data()))
        .map(|(((&tar, &src), &src_prev), (&vt, &vs))| {
            if tar == src {
                src_prev + dt * (vt - vs)
            } else {
                tar + dt * (vt - vs) + (src_prev - src)
            }
        })
        .collect();
    TensorState::new(data, x_tar_i.shape().to_vec(), x_tar_i.modality())
}

/// Initial noise shared by all editing samplers.
pub(crate) fn initial_noise<F: VelocityField + ?Sized>(
    field: &F,
    x_src: &TensorState,
    c_src: Option<&Condition>,
    mode: NoiseMode,
    rng: &mut Rng64,
) -> Result<TensorState> {
    match (mode, c_src) {
        (NoiseMode::Estimated, Some(c)) => {
            let v = checked_velocity(field, x_src, c, 0.0, 0)?;
            estimate_noise(x_src, &v, 0.0)
        }
        _ => Ok(rng.normal_state(x_src.shape(), x_src.modality())),
    }
}

/// Noise for the next step: fresh or re-estimated from the current source.
pub(crate) fn next_noise(
    mode: NoiseMode,
    x_src_t: &TensorState,
    v_src: &TensorState,
    t: f64,
    rng: &mut Rng64,
) -> Result<TensorState> {
    match mode {
        NoiseMode::Random => Ok(rng.normal_state(x_src_t.shape(), x_src_t.modality())),
        NoiseMode::Estimated => estimate_noise(x_src_t, v_src, t),
    }
}

/// Edit-sequence baseline.
///
/// `X^edit` starts at `x_src`; each step evaluates the source velocity at
/// `X^src_t = (1 - t) x_src + t eps` and the target velocity at
/// `X^tar_t = (X^edit_t - x_src) + X^src_t`, then moves `X^edit` by
/// `dt (v_tar - v_src)`.
pub fn flowedit<F: VelocityField + ?Sized>(
    field: &F,
    x_src: &TensorState,
    c_src: &Condition,
    c_tar: &Condition,
    cfg: &EditConfig,
) -> Result<EditResult> {
    if cfg.sequence_mode != SequenceMode::Edit {
        return Err(FlowError::InvalidConfig("flowedit needs sequence mode edit".into()));
    }
    let schedule = cfg.schedule()?;
    field.check_inputs(x_src, c_src)?;
    field.check_inputs(x_src, c_tar)?;
    let mut rng = Rng64::new(cfg.seed);
    let mut eps = initial_noise(field, x_src, Some(c_src), cfg.noise_mode, &mut rng)?;
    let mut x_edit = x_src.clone();
    let mut records = Vec::with_capacity(schedule.n_max() + 1);
    for i in (1..=schedule.n_max()).rev() {
        let (t, t_prev) = (schedule.t(i), schedule.t(i - 1));
        let x_src_t = noisy_source(x_src, &eps, t)?;
        let x_tar_t = x_edit.sub(x_src)?.add(&x_src_t)?;
        let v_src = checked_velocity(field, &x_src_t, c_src, t, i)?;
        let v_tar = target_velocity(field, &x_tar_t, c_tar, t, cfg.cfg_scale, i)?;
        let next_eps = next_noise(cfg.noise_mode, &x_src_t, &v_src, t, &mut rng)?;
        let dt = t_prev - t;
        let moved = x_edit.zip_map(&v_tar.sub(&v_src)?, |e, d| e + dt * d)?;
        records.push(StepRecord {
            t,
            source: x_src_t,
            current: std::mem::replace(&mut x_edit, moved),
            eps: std::mem::replace(&mut eps, next_eps),
            v_src: Some(v_src),
            v_tar: Some(v_tar),
        });
    }
    records.push(StepRecord {
        t: schedule.t(0),
        source: noisy_source(x_src, &eps, schedule.t(0))?,
        current: x_edit.clone(),
        eps,
        v_src: None,
        v_tar: None,
    });
    Ok(EditResult {
        output: x_edit,
        trajectory: Trajectory {
            mode: SequenceMode::Edit,
            records,
        },
        draws: rng.normals_drawn(),
    })
}

/// Target-sequence editing with an optional source condition.
///
/// The field's condition is `concat(audio, prompt)`: `c_src`/`c_tar` are the
/// per-stream conditions and `prompt` a shared suffix. Without `c_src` the
/// source velocity uses the null condition and the initial noise is drawn.
/// `X^tar` starts at `(1 - t_max) x_src + t_max eps`, equal to the noised
/// source, and advances by [`step_target`].
pub fn sync_edit<F: VelocityField + ?Sized>(
    field: &F,
    x_src: &TensorState,
    c_src: Option<&Condition>,
    c_tar: &Condition,
    prompt: Option<&Condition>,
    cfg: &EditConfig,
) -> Result<EditResult> {
    if cfg.sequence_mode != SequenceMode::Target {
        return Err(FlowError::InvalidConfig("sync_edit needs sequence mode target".into()));
    }
    if c_tar.is_null() {
        return Err(FlowError::InvalidConfig("target condition is missing".into()));
    }
    let schedule = cfg.schedule()?;
    let with_prompt = |c: &Condition| match prompt {
        Some(p) => c.concat(p),
        None => c.clone(),
    };
    let c_tar_full = with_prompt(c_tar);
    let c_src_given = c_src.map(&with_prompt);
    let c_src_step = c_src_given
        .clone()
        .unwrap_or_else(|| with_prompt(&Condition::null(c_tar.dim())));
    field.check_inputs(x_src, &c_tar_full)?;
    field.check_inputs(x_src, &c_src_step)?;

    let mut rng = Rng64::new(cfg.seed);
    let mut eps = initial_noise(field, x_src, c_src_given.as_ref(), cfg.noise_mode, &mut rng)?;
    let n_max = schedule.n_max();
    let mut x_src_t = noisy_source(x_src, &eps, schedule.t(n_max))?;
    let mut x_tar = x_src_t.clone();
    let mut records = Vec::with_capacity(n_max + 1);
    for i in (1..=n_max).rev() {
        let (t, t_prev) = (schedule.t(i), schedule.t(i - 1));
        let v_src = checked_velocity(field, &x_src_t, &c_src_step, t, i)?;
        let v_tar = target_velocity(field, &x_tar, &c_tar_full, t, cfg.cfg_scale, i)?;
        let next_eps = next_noise(cfg.noise_mode, &x_src_t, &v_src, t, &mut rng)?;
        let x_src_prev = noisy_source(x_src, &next_eps, t_prev)?;
        let x_tar_prev = step_target(&x_tar, &x_src_t, &x_src_prev, &v_tar, &v_src, t, t_prev)?;
        records.push(StepRecord {
            t,
            source: std::mem::replace(&mut x_src_t, x_src_prev),
            current: std::mem::replace(&mut x_tar, x_tar_prev),
            eps: std::mem::replace(&mut eps, next_eps),
            v_src: Some(v_src),
            v_tar: Some(v_tar),
        });
    }
    records.push(StepRecord {
        t: schedule.t(0),
        source: x_src_t,
        current: x_tar.clone(),
        eps,
        v_src: None,
        v_tar: None,
    });
    Ok(EditResult {
        output: x_tar,
        trajectory: Trajectory {
            mode: SequenceMode::Target,
            records,
        },
        draws: rng.normals_drawn(),
    })
}

/// Runs the sampler selected by `cfg.sequence_mode` with both conditions given.
pub fn run_edit<F: VelocityField + ?Sized>(
    field: &F,
    x_src: &TensorState,
    c_src: &Condition,
    c_tar: &Condition,
    cfg: &EditConfig,
) -> Result<EditResult> {
    match cfg.sequence_mode {
        SequenceMode::Edit => flowedit(field, x_src, c_src, c_tar, cfg),
        SequenceMode::Target => sync_edit(field, x_src, Some(c_src), c_tar, None, cfg),
    }
}
