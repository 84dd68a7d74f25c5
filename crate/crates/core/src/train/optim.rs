use crate::autograd::Mat;
use crate::error::{Error, Result};
use crate::model::{round_to_storage, ParameterSet};

/// Adam with decoupled weight decay. Buffers (batch-norm running
/// statistics) are skipped. Updated parameters are rounded to storage
/// precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First and second moments, one per parameter (empty for buffers).
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros = |i: usize| {
            if params.is_trainable(i) {
                Mat::zeros(params.values()[i].dim())
            } else {
                Mat::zeros((0, 0))
            }
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
        }
    }

    /// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
    pub fn update(
        &mut self,
        params: &mut ParameterSet,
        grads: &[Mat],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                actual: grads.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for i in 0..params.len() {
            if !params.is_trainable(i) {
                continue;
            }
            let p = &mut params.values_mut()[i];
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            if g.dim() != p.dim() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            ndarray::Zip::from(&mut *p)
                .and(&mut *m)
                .and(&mut *v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let step = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *p -= lr * (step + weight_decay * *p);
                });
            round_to_storage(p);
        }
        Ok(())
    }
}
