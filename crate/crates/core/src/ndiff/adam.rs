use crate::matrix::Matrix;
use crate::scalar::Real;

use super::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step to match the parameter set they are applied to.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    step: i32,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet<T>) {
        if self.m.len() != params.len() {
            self.m = params
                .ids()
                .map(|id| {
                    let (r, c) = params.value(id).shape();
                    Matrix::zeros(r, c)
                })
                .collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let b1 = T::lit(self.cfg.beta1);
        let b2 = T::lit(self.cfg.beta2);
        let lr = T::lit(self.cfg.lr);
        let eps = T::lit(self.cfg.eps);
        let bc1 = T::one() - b1.powi(self.step);
        let bc2 = T::one() - b2.powi(self.step);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let (value, grad) = params.value_and_grad_mut(id);
            let m = self.m[id.index()].as_mut_slice();
            let v = self.v[id.index()].as_mut_slice();
            for (((w, &g), m), v) in value
                .as_mut_slice()
                .iter_mut()
                .zip(grad.as_slice())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ParamSet::<f64>::new();
        let id = p.insert("w", Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap());
        p.accumulate(id, &Matrix::from_vec(1, 2, vec![3.0, -0.5]).unwrap());
        let mut opt = Adam::new(AdamConfig::with_lr(0.1));
        opt.step(&mut p);
        let w = p.value(id).as_slice();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }
}
