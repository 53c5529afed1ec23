//! Binary model file.
//!
//! Little-endian layout:
//!
//! | offset | field                                   |
//! |--------|-----------------------------------------|
//! | 0      | magic `b"OMED"`                         |
//! | 4      | format version, u32 (currently 1)       |
//! | 8      | activation, u32 (0 = tanh, 1 = relu)    |
//! | 12     | condition dimension, u32                |
//! | 16     | number of widths `n`, u32               |
//! | 20     | `n` widths, u32 each                    |
//! | ...    | per layer: weights row-major, then bias, f64 each |
//!
//! Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use super::{layer_shapes, Activation, Layer, MlpModel};
use crate::error::{FlowError, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"OMED";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * model.widths.len() + 8 * model.parameter_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    let act: u32 = match model.activation {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    };
    out.extend_from_slice(&act.to_le_bytes());
    out.extend_from_slice(&(model.condition_dim as u32).to_le_bytes());
    out.extend_from_slice(&(model.widths.len() as u32).to_le_bytes());
    for &w in &model.widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for layer in &model.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FlowError::Format {
                offset: self.pos,
                message: format!(
                    "truncated: need {n} bytes for {what}, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> FlowError {
        FlowError::Format {
            offset,
            message: message.into(),
        }
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MODEL_MAGIC {
        return Err(r.error(
            0,
            format!("bad magic {magic:?}, expected {:?}", std::str::from_utf8(MODEL_MAGIC).unwrap()),
        ));
    }
    let version = r.u32("version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(r.error(
            4,
            format!("unsupported format version {version}, expected {MODEL_FORMAT_VERSION}"),
        ));
    }
    let activation = match r.u32("activation")? {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        other => return Err(r.error(8, format!("unknown activation code {other}"))),
    };
    let condition_dim = r.u32("condition dimension")? as usize;
    let n_widths = r.u32("width count")? as usize;
    if n_widths < 2 || n_widths > 1024 {
        return Err(r.error(16, format!("implausible width count {n_widths}")));
    }
    let mut widths = Vec::with_capacity(n_widths);
    for i in 0..n_widths {
        widths.push(r.u32(&format!("width {i}"))? as usize);
    }
    let widths_end = r.pos;
    super::check_widths(&widths).map_err(|e| r.error(20, e.to_string()))?;
    let mut layers = Vec::new();
    for (li, (inputs, outputs)) in layer_shapes(&widths, condition_dim).enumerate() {
        let mut layer = Layer::zeros(inputs, outputs);
        for w in layer.weights.iter_mut() {
            *w = r.f64(&format!("layer {li} weights"))?;
        }
        for b in layer.bias.iter_mut() {
            *b = r.f64(&format!("layer {li} bias"))?;
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(r.error(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    MlpModel::from_layers(&widths, condition_dim, activation, layers)
        .map_err(|e| r.error(widths_end, e.to_string()))
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    model_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VelocityField;
    use crate::model::mlp_init;
    use crate::rng::Rng64;
    use crate::tensor::{Condition, Modality};

    #[test]
    fn round_trip_preserves_outputs() {
        let m = MlpModel::init(&[6, 12, 9, 4], 2, Activation::Relu, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = Rng64::new(1);
        for _ in 0..100 {
            let x = rng.normal_state(&[4], Modality::Generic);
            let c = Condition::new(rng.normal_vec(2)).unwrap();
            let t = rng.uniform();
            let a = m.velocity(&x, &c, t).unwrap();
            let b = back.velocity(&x, &c, t).unwrap();
            assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn header_layout() {
        let m = mlp_init(&[4, 3, 2], 1, 0).unwrap();
        let b = model_to_bytes(&m);
        assert_eq!(&b[..4], b"OMED");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 3);
        assert_eq!(b.len(), 20 + 3 * 4 + 8 * m.parameter_count());
    }

    #[test]
    fn truncated_file() {
        let b = model_to_bytes(&mlp_init(&[4, 3, 2], 1, 0).unwrap());
        for cut in [2, 10, 22, b.len() - 3] {
            match model_from_bytes(&b[..cut]) {
                Err(FlowError::Format { message, .. }) => assert!(message.contains("truncated")),
                other => panic!("expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_magic() {
        let mut b = model_to_bytes(&mlp_init(&[4, 3, 2], 1, 0).unwrap());
        b[0] = b'X';
        match model_from_bytes(&b) {
            Err(FlowError::Format { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("OMED"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version_and_trailing_bytes() {
        let mut b = model_to_bytes(&mlp_init(&[4, 3, 2], 1, 0).unwrap());
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(model_from_bytes(&extra), Err(FlowError::Format { .. })));
        b[4] = 9;
        assert!(matches!(model_from_bytes(&b), Err(FlowError::Format { offset: 4, .. })));
    }
}
