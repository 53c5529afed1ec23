//! Training-free flow editing on analytic and toy velocity fields.
//!
//! The crate provides rectified-flow primitives, closed-form Gaussian oracles,
//! a small conditional MLP velocity model with hand-written backpropagation,
//! the edit-sequence and target-sequence editing samplers, and metrics that
//! probe truncation bias and trajectory smoothness.

pub mod error;
pub mod field;
pub mod flow;
pub mod gaussian;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod tensor;

pub use error::{FlowError, Result};
pub use field::{ConstantField, DualStreamField, DualVelocity, JointField, VelocityField};
pub use rng::{Rng64, RNG_ALGORITHM};
pub use schedule::{make_schedule, ScheduleKind, TimeSchedule};
pub use tensor::{Condition, Modality, TensorState};
