//! Velocity-field interfaces.
//!
//! A [`VelocityField`] maps `(state, condition, t)` to a velocity of the same
//! shape. Sign convention follows the rectified path `x_t = (1 - t) x_0 + t x_1`
//! with data at `t = 0` and noise at `t = 1`, so velocities point toward noise
//! and generation integrates from `t = 1` down to `t = 0`.

use crate::error::{FlowError, Result};
use crate::tensor::{Condition, Modality, TensorState};

pub trait VelocityField {
    /// Flat state dimension accepted by [`VelocityField::velocity`].
    fn state_dim(&self) -> usize;

    fn condition_dim(&self) -> usize;

    fn velocity(&self, x: &TensorState, c: &Condition, t: f64) -> Result<TensorState>;

    /// Validates the inputs of a velocity call.
    fn check_inputs(&self, x: &TensorState, c: &Condition) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(FlowError::shape(&[self.state_dim()], x.shape()));
        }
        c.check_dim(self.condition_dim())
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn condition_dim(&self) -> usize {
        (**self).condition_dim()
    }
    fn velocity(&self, x: &TensorState, c: &Condition, t: f64) -> Result<TensorState> {
        (**self).velocity(x, c, t)
    }
}

/// Paired audio/video velocities from one joint evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVelocity {
    pub audio: TensorState,
    pub video: TensorState,
}

pub trait DualStreamField {
    fn video_dim(&self) -> usize;
    fn audio_dim(&self) -> usize;
    fn condition_dim(&self) -> usize;

    fn velocity_pair(
        &self,
        video: &TensorState,
        audio: &TensorState,
        c: &Condition,
        t: f64,
    ) -> Result<DualVelocity>;
}

/// Presents a field over `concat(video, audio)` as a dual-stream field.
///
/// One call to the inner field produces both velocities.
#[derive(Debug, Clone)]
pub struct JointField<F> {
    inner: F,
    video_dim: usize,
}

impl<F: VelocityField> JointField<F> {
    pub fn new(inner: F, video_dim: usize) -> Result<Self> {
        if video_dim == 0 || video_dim >= inner.state_dim() {
            return Err(FlowError::InvalidConfig(format!(
                "video dimension {video_dim} must split state dimension {}",
                inner.state_dim()
            )));
        }
        Ok(Self { inner, video_dim })
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: VelocityField> DualStreamField for JointField<F> {
    fn video_dim(&self) -> usize {
        self.video_dim
    }

    fn audio_dim(&self) -> usize {
        self.inner.state_dim() - self.video_dim
    }

    fn condition_dim(&self) -> usize {
        self.inner.condition_dim()
    }

    fn velocity_pair(
        &self,
        video: &TensorState,
        audio: &TensorState,
        c: &Condition,
        t: f64,
    ) -> Result<DualVelocity> {
        if video.len() != self.video_dim {
            return Err(FlowError::shape(&[self.video_dim], video.shape()));
        }
        if audio.len() != self.audio_dim() {
            return Err(FlowError::shape(&[self.audio_dim()], audio.shape()));
        }
        let joint = video.concat(audio);
        let v = self.inner.velocity(&joint, c, t)?;
        let (vv, av) = v.split(self.video_dim, Modality::Video, Modality::Audio)?;
        Ok(DualVelocity {
            audio: av.reshaped_like(audio),
            video: vv.reshaped_like(video),
        })
    }
}

impl TensorState {
    fn reshaped_like(self, like: &TensorState) -> TensorState {
        TensorState::from_parts(self.into_data(), like.shape().to_vec(), like.modality())
    }
}

/// Spatially constant velocity, independent of condition and time.
#[derive(Debug, Clone)]
pub struct ConstantField {
    value: Vec<f64>,
    condition_dim: usize,
}

impl ConstantField {
    pub fn new(value: Vec<f64>, condition_dim: usize) -> Self {
        Self {
            value,
            condition_dim,
        }
    }
}

impl VelocityField for ConstantField {
    fn state_dim(&self) -> usize {
        self.value.len()
    }

    fn condition_dim(&self) -> usize {
        self.condition_dim
    }

    fn velocity(&self, x: &TensorState, c: &Condition, _t: f64) -> Result<TensorState> {
        self.check_inputs(x, c)?;
        Ok(TensorState::from_parts(
            self.value.clone(),
            x.shape().to_vec(),
            x.modality(),
        ))
    }
}
