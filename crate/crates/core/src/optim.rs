//! Heavy-ball SGD and the cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::mlp::{Gradients, Mlp};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SgdConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Momentum buffers for one model, updated as
/// `v = momentum * v + g + weight_decay * theta; theta -= lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub config: SgdConfig,
    buffers: Vec<Tensor>,
}

impl Sgd {
    pub fn new(config: SgdConfig, model: &Mlp) -> Result<Self> {
        config.validate()?;
        Ok(Sgd {
            config,
            buffers: model.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        })
    }

    pub fn buffers(&self) -> &[Tensor] {
        &self.buffers
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0) {
            return Err(Error::invalid(format!("learning rate must be nonnegative, got {lr}")));
        }
        if grads.tensors.len() != self.buffers.len() {
            return Err(Error::invalid("gradient count does not match parameters"));
        }
        let SgdConfig {
            momentum,
            weight_decay,
            ..
        } = self.config;
        for ((param, grad), buf) in model
            .params_mut()
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.buffers.iter_mut())
        {
            if param.shape() != grad.shape() {
                return Err(Error::invalid("gradient shape does not match parameter"));
            }
            for ((theta, g), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(buf.data_mut())
            {
                *v = momentum * *v + g + weight_decay * *theta;
                *theta -= lr * *v;
            }
        }
        Ok(())
    }
}

/// `0.5 * lr0 * (1 + cos(pi * epoch / total))`.
pub fn cosine_lr(epoch: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine schedule needs at least one epoch"));
    }
    if epoch > total {
        return Err(Error::invalid(format!(
            "epoch {epoch} exceeds schedule length {total}"
        )));
    }
    let phase = std::f64::consts::PI * epoch as f64 / total as f64;
    Ok(0.5 * lr0 * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpSpec;

    fn scalar_model(theta: f64) -> Mlp {
        let spec = MlpSpec::new(1, vec![], 2);
        Mlp::from_params(
            spec,
            vec![
                Tensor::from_vec(&[2, 1], vec![theta, theta]).unwrap(),
                Tensor::zeros(&[2]),
            ],
        )
        .unwrap()
    }

    fn grads(model: &Mlp, g: f64) -> Gradients {
        let mut gr = Gradients::zeros_like(model);
        for t in &mut gr.tensors {
            t.data_mut().fill(g);
        }
        gr
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut m = Mlp::new(MlpSpec::new(3, vec![4], 2), 1).unwrap();
        let before = m.clone();
        let mut opt = Sgd::new(SgdConfig::default(), &m).unwrap();
        let g = grads(&m, 0.5);
        opt.step(&mut m, &g, 0.0).unwrap();
        assert_eq!(m, before);
        assert!(opt.buffers().iter().any(|b| b.data().iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn plain_gradient_descent() {
        let mut m = scalar_model(2.0);
        let cfg = SgdConfig {
            lr0: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let mut opt = Sgd::new(cfg, &m).unwrap();
        let g = grads(&m, 3.0);
        opt.step(&mut m, &g, 0.5).unwrap();
        assert_eq!(m.params()[0].data(), &[2.0 - 0.5 * 3.0; 2]);
    }

    #[test]
    fn weight_decay_scalar_case() {
        let mut m = scalar_model(1.0);
        let cfg = SgdConfig {
            lr0: 1.0,
            momentum: 0.0,
            weight_decay: 0.1,
        };
        let mut opt = Sgd::new(cfg, &m).unwrap();
        let g = grads(&m, 0.0);
        opt.step(&mut m, &g, 1.0).unwrap();
        assert!((m.params()[0].data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut m = scalar_model(0.0);
        let cfg = SgdConfig {
            lr0: 1.0,
            momentum: 0.5,
            weight_decay: 0.0,
        };
        let mut opt = Sgd::new(cfg, &m).unwrap();
        let g = grads(&m, 1.0);
        opt.step(&mut m, &g, 1.0).unwrap();
        opt.step(&mut m, &g, 1.0).unwrap();
        // v1 = 1, v2 = 1.5, theta = -2.5
        assert_eq!(m.params()[0].data()[0], -2.5);
    }

    #[test]
    fn invalid_hyperparameters() {
        let m = scalar_model(0.0);
        let bad = [
            SgdConfig { lr0: 0.0, ..SgdConfig::default() },
            SgdConfig { momentum: 1.0, ..SgdConfig::default() },
            SgdConfig { weight_decay: -1.0, ..SgdConfig::default() },
        ];
        for cfg in bad {
            assert!(Sgd::new(cfg, &m).is_err());
        }
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 10, 0.1).unwrap(), 0.1);
        assert!(cosine_lr(10, 10, 0.1).unwrap().abs() < 1e-17);
        assert!((cosine_lr(5, 10, 0.1).unwrap() - 0.05).abs() < 1e-17);
        assert!(cosine_lr(11, 10, 0.1).is_err());
        assert!(cosine_lr(0, 0, 0.1).is_err());
    }
}
