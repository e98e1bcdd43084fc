use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

/// Optimizer with its per-parameter state (Adam moments, step count).
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, model: &Model) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            match kind {
                OptimizerKind::Sgd => Vec::new(),
                OptimizerKind::Adam { .. } => {
                    model.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect()
                }
            }
        };
        Self {
            kind,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// SGD: `θ ← θ − lr·g`. Adam: bias-corrected moment estimates,
    /// `θ ← θ − lr·m̂ / (sqrt(v̂) + ε)`.
    pub fn step(&mut self, params: &mut Model, grads: &Model, lr: f64) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut param_tensors = params.tensors_mut();
        if grad_tensors.len() != param_tensors.len()
            || grad_tensors.iter().zip(&param_tensors).any(|((_, g), p)| g.len() != p.len())
        {
            return Err(Error::Invalid("gradient shapes do not match parameters".into()));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, (_, g)) in param_tensors.iter_mut().zip(&grad_tensors) {
                    for (theta, grad) in p.iter_mut().zip(g.iter()) {
                        *theta -= lr * grad;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, (p, (_, g))) in param_tensors.iter_mut().zip(&grad_tensors).enumerate() {
                    let m = &mut self.first_moment[k];
                    let v = &mut self.second_moment[k];
                    for j in 0..p.len() {
                        let grad = g[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * grad;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * grad * grad;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn optimizer_step(params: &mut Model, grads: &Model, state: &mut Optimizer, lr: f64) -> Result<()> {
    state.step(params, grads, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::MlpParams;

    /// A one-parameter model: a 1x1 linear layer with zero bias.
    fn scalar(theta: f64) -> Model {
        let mut p = MlpParams::zeros(1, 1, &[], 1).unwrap();
        p.layers[0].weight[[0, 0]] = theta;
        Model::Mlp(p)
    }

    fn value(m: &Model) -> f64 {
        m.tensors()[0].1[0]
    }

    #[test]
    fn sgd_step() {
        let mut p = scalar(1.0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p);
        opt.step(&mut p, &scalar(2.0), 0.1).unwrap();
        assert!((value(&p) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut opt = Optimizer::new(OptimizerKind::adam(), &p);
        opt.step(&mut p, &scalar(0.0), 1e-3).unwrap();
        assert_eq!(value(&p), 0.7);
        assert!(opt.first_moment().iter().flatten().all(|&m| m == 0.0));
        assert!(opt.second_moment().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m̂ = g and v̂ = g² after one step, so |Δθ| = lr·|g|/(|g| + ε).
        for g in [1e-3, 0.5, -3.0, 250.0] {
            let mut p = scalar(0.0);
            let mut opt = Optimizer::new(OptimizerKind::adam(), &p);
            let lr = 1e-2;
            opt.step(&mut p, &scalar(g), lr).unwrap();
            let expected = lr * g.abs() / (g.abs() + 1e-8);
            assert!((value(&p).abs() - expected).abs() <= 1e-12 * lr);
            assert!(((value(&p).abs() - lr) / lr).abs() < 1e-5);
            assert_eq!(value(&p).signum(), -g.signum());
        }
    }

    #[test]
    fn adam_second_step_matches_recurrence() {
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.1f64);
        let mut p = scalar(1.0);
        let mut opt = Optimizer::new(OptimizerKind::adam(), &p);
        opt.step(&mut p, &scalar(0.5), lr).unwrap();
        opt.step(&mut p, &scalar(-0.2), lr).unwrap();

        let mut theta = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for (t, g) in [(1, 0.5f64), (2, -0.2)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!((value(&p) - theta).abs() < 1e-15);
        assert_eq!(opt.steps_taken(), 2);
    }
}
