use super::{FmSample, Gradients, MlpModel};
use crate::error::{FlowError, Result};
use crate::flow::{conditional_velocity, fm_loss, interpolate};
use crate::rng::Rng64;
use crate::tensor::{Condition, TensorState};

/// Seed of the fixed evaluation draws used for the loss curve.
pub const EVAL_SEED: u64 = 0x0E7A_1_5EED;
const EVAL_MAX_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(FlowError::InvalidConfig("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(FlowError::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Evaluation loss before training and after every epoch.
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

fn apply_update(model: &mut MlpModel, grads: &Gradients, cfg: &TrainConfig, adam: &mut AdamState) {
    let lr = cfg.learning_rate;
    let params = model
        .layers
        .iter_mut()
        .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()));
    let g = grads.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias));
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.zip(g) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.step += 1;
            let c1 = 1.0 - beta1.powi(adam.step);
            let c2 = 1.0 - beta2.powi(adam.step);
            for (((p, g), m), v) in params.zip(g).zip(&mut adam.m).zip(&mut adam.v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

fn eval_set(data: &[(TensorState, Condition)]) -> Vec<(TensorState, Condition)> {
    let stride = data.len().div_ceil(EVAL_MAX_SAMPLES).max(1);
    data.iter().step_by(stride).cloned().collect()
}

/// Minibatch flow-matching training.
///
/// Each epoch visits a seeded permutation of `data`; every example gets a fresh
/// `x1 ~ N(0, I)` and `t ~ U[0, 1)`. The loss curve is measured on a fixed
/// evaluation subset with fixed draws, so it is comparable across epochs.
pub fn train(model: &mut MlpModel, data: &[(TensorState, Condition)], cfg: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(FlowError::InvalidInput("empty dataset".into()));
    }
    cfg.validate()?;
    let eval = eval_set(data);
    let eval_loss = |m: &MlpModel| fm_loss(m, &eval, &mut Rng64::new(EVAL_SEED));

    let mut rng = Rng64::new(cfg.seed);
    let n_params = model.parameter_count();
    let mut adam = AdamState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        step: 0,
    };
    let initial_loss = eval_loss(model)?;
    let mut loss_curve = vec![initial_loss];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            for &i in chunk {
                let (x0, c) = &data[i];
                let x1 = rng.normal_state(x0.shape(), x0.modality());
                let t = rng.uniform();
                batch.push(FmSample {
                    x_t: interpolate(x0, &x1, t)?,
                    condition: c.clone(),
                    t,
                    target: conditional_velocity(x0, &x1)?,
                });
            }
            let (loss, grads) = model.loss_and_gradients(&batch)?;
            steps += 1;
            if !loss.is_finite() {
                return Err(FlowError::TrainingDiverged { step: steps, loss });
            }
            apply_update(model, &grads, cfg, &mut adam);
        }
        let loss = eval_loss(model)?;
        if !loss.is_finite() {
            return Err(FlowError::TrainingDiverged { step: steps, loss });
        }
        loss_curve.push(loss);
    }
    Ok(TrainReport {
        final_loss: *loss_curve.last().expect("non-empty"),
        initial_loss,
        loss_curve,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mlp_init;

    fn toy_data(n: usize) -> Vec<(TensorState, Condition)> {
        let mut rng = Rng64::new(100);
        (0..n)
            .map(|_| {
                (
                    TensorState::scalar(2.0 + 0.5 * rng.normal()).unwrap(),
                    Condition::null(0),
                )
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_curve_flat() {
        let mut m = mlp_init(&[3, 8, 1], 0, 1).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let r = train(&mut m, &toy_data(64), &cfg).unwrap();
        assert!(r.loss_curve.iter().all(|&l| l == r.initial_loss));
        assert_eq!(m, before);
    }

    #[test]
    fn same_config_same_curve() {
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = mlp_init(&[3, 8, 1], 0, 1).unwrap();
            train(&mut m, &toy_data(40), &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_decreases() {
        let mut m = mlp_init(&[3, 16, 1], 0, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 1,
            ..TrainConfig::default()
        };
        let r = train(&mut m, &toy_data(256), &cfg).unwrap();
        assert!(r.final_loss < r.initial_loss, "{r:?}");
        let k = (r.loss_curve.len() / 10).max(1);
        let head = r.loss_curve[..k].iter().cloned().fold(f64::INFINITY, f64::min);
        let tail = r.loss_curve[r.loss_curve.len() - k..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(tail < head);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = mlp_init(&[3, 16, 1], 0, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e200,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut m, &toy_data(64), &cfg),
            Err(FlowError::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut m = mlp_init(&[3, 4, 1], 0, 2).unwrap();
        assert!(train(&mut m, &[], &TrainConfig::default()).is_err());
    }
}
