use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};
use crate::Scalar;

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

/// Adam with decoupled weight decay.
///
/// Moments are created lazily on the first step and tied to the parameter
/// order passed to [`AdamW::step`].
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self { config, m: Vec::new(), v: Vec::new(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adamw",
                detail: format!("{} params vs {} gradients", params.len(), grads.len()),
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adamw",
                detail: format!("optimizer tracks {} params, got {}", self.m.len(), params.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adamw",
                    detail: format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
        }

        self.step += 1;
        let c = &self.config;
        let (lr, b1, b2, eps, wd) = (T::lit(c.lr), T::lit(c.beta1), T::lit(c.beta2), T::lit(c.eps), T::lit(c.weight_decay));
        let t = self.step as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let one = T::one();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (w, &gr)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                *w -= lr * wd * *w;
                m[j] = b1 * m[j] + (one - b1) * gr;
                v[j] = b2 * v[j] + (one - b2) * gr * gr;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_once(config: AdamWConfig, param: f64, grad: f64) -> f64 {
        let mut opt = AdamW::<f64>::new(config);
        let mut p = Tensor::scalar(param);
        let g = Tensor::scalar(grad);
        opt.step(&mut [&mut p], &[&g]).unwrap();
        p.data()[0]
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        assert_eq!(step_once(cfg, 0.7, 0.0), 0.7);
    }

    #[test]
    fn decoupled_decay() {
        let cfg = AdamWConfig { lr: 1.0, weight_decay: 0.1, ..Default::default() };
        assert!((step_once(cfg, 1.0, 0.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        let p = step_once(AdamWConfig::default(), 0.0, 1.0);
        assert!((p + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15, "{p}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut opt = AdamW::<f64>::new(AdamWConfig::default());
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::column(vec![1.0, 2.0]);
        assert!(opt.step(&mut [&mut p], &[&g]).is_err());
    }
}
