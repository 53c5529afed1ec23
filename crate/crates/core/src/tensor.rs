use std::fmt;

use crate::error::{FlowError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Video,
    Audio,
    Generic,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Generic => "generic",
        })
    }
}

/// A flat real vector with a shape and a modality tag.
///
/// Every latent in the samplers (clean sources, noisy states, noise draws,
/// velocities) is a `TensorState`. Entries are finite and
/// `shape.iter().product() == data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorState {
    data: Vec<f64>,
    shape: Vec<usize>,
    modality: Modality,
}

impl TensorState {
    pub fn new(data: Vec<f64>, shape: Vec<usize>, modality: Modality) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(FlowError::InvalidInput(format!(
                "shape {shape:?} holds {n} entries but data has {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput(format!(
                "entry {i} is not finite ({})",
                data[i]
            )));
        }
        Ok(Self {
            data,
            shape,
            modality,
        })
    }

    /// Flat vector with shape `[len]`.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(data, vec![n], Modality::Generic)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::vector(vec![value])
    }

    pub fn zeros(shape: &[usize], modality: Modality) -> Self {
        Self::from_parts(vec![0.0; shape.iter().product()], shape.to_vec(), modality)
    }

    /// Builds a state from parts already known to be consistent.
    pub(crate) fn from_parts(data: Vec<f64>, shape: Vec<usize>, modality: Modality) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            data,
            shape,
            modality,
        }
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &TensorState) -> Result<()> {
        if self.shape != other.shape {
            return Err(FlowError::shape(&self.shape, &other.shape));
        }
        Ok(())
    }

    /// Elementwise `f(self_i, other_i)`, keeping this state's shape and modality.
    pub fn zip_map(&self, other: &TensorState, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_parts(data, self.shape.clone(), self.modality))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.data.iter().map(|&a| f(a)).collect(),
            self.shape.clone(),
            self.modality,
        )
    }

    pub fn add(&self, other: &TensorState) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &TensorState) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| s * a)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &TensorState) -> Result<Self> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs_diff(&self, other: &TensorState) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Concatenates two states into a flat generic vector.
    pub fn concat(&self, other: &TensorState) -> Self {
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let n = data.len();
        Self::from_parts(data, vec![n], Modality::Generic)
    }

    /// Splits a flat state at `at`, tagging the two halves.
    pub fn split(&self, at: usize, first: Modality, second: Modality) -> Result<(Self, Self)> {
        if at > self.len() {
            return Err(FlowError::InvalidInput(format!(
                "split point {at} beyond length {}",
                self.len()
            )));
        }
        let (a, b) = self.data.split_at(at);
        Ok((
            Self::from_parts(a.to_vec(), vec![a.len()], first),
            Self::from_parts(b.to_vec(), vec![b.len()], second),
        ))
    }
}

/// A conditioning vector with an explicit null flag.
///
/// The null condition is the all-zero vector with `is_null` set.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    vector: Vec<f64>,
    is_null: bool,
}

impl Condition {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput(
                "condition has non-finite entries".into(),
            ));
        }
        Ok(Self {
            vector,
            is_null: false,
        })
    }

    pub fn null(dim: usize) -> Self {
        Self {
            vector: vec![0.0; dim],
            is_null: true,
        }
    }

    /// One-hot class condition.
    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(FlowError::InvalidInput(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut v = vec![0.0; classes];
        v[class] = 1.0;
        Self::new(v)
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn is_null(&self) -> bool {
        self.is_null
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Appends `other` (e.g. a prompt to an audio condition). The result is
    /// null only when both parts are.
    pub fn concat(&self, other: &Condition) -> Condition {
        let mut vector = self.vector.clone();
        vector.extend_from_slice(&other.vector);
        Condition {
            vector,
            is_null: self.is_null && other.is_null,
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.vector.len() != dim {
            return Err(FlowError::shape(&[dim], &[self.vector.len()]));
        }
        Ok(())
    }
}
