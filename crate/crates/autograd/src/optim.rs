use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction and a constant step size.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub step: u64,
    pub first_moments: Vec<Tensor<T>>,
    pub second_moments: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Self {
        Self {
            config,
            step: 0,
            first_moments: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moments: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// The step size used at update `t`; no schedule is applied.
    pub fn learning_rate_at(&self, _t: u64) -> f64 {
        self.config.learning_rate
    }

    pub fn update(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first_moments.len() || grads.len() != params.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                reason: format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first_moments.len()
                ),
            });
        }
        self.step += 1;
        let c = self.config;
        let lr = self.learning_rate_at(self.step);
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step_size = T::from_f64(lr / bc1);
        let bc2_sqrt = T::from_f64(bc2.sqrt());
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let eps = T::from_f64(c.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moments)
            .zip(&mut self.second_moments)
        {
            p.expect_same_shape("adam", g)?;
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + one_b1 * gi;
                let vi = b2 * v.data()[i] + one_b2 * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                pd[i] = pd[i] - step_size * mi / (vi.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}
