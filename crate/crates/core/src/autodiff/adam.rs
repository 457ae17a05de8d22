use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_betas(learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. Moment buffers are allocated on the
    /// first call and must keep matching `params` afterwards.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "adam: {} params but {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape("adam: parameter count changed between steps"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if !p.same_shape(g) || !p.same_shape(m) {
                return Err(Error::shape(format!(
                    "adam: param {:?} grad {:?} moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for k in 0..pd.len() {
                let gk = g.data()[k];
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * gk;
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = md[k] / bc1;
                let v_hat = vd[k] / bc2;
                pd[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut adam = Adam::new(0.001);
        adam.step(&mut params, &[Tensor::scalar(0.5)]).unwrap();
        // m̂ = 0.5, v̂ = 0.25, update = 0.001 · 0.5 / (0.5 + 1e-8)
        let expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
        assert_abs_diff_eq!(params[0].data()[0], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(params[0].data()[0], 0.999, epsilon = 1e-10);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let init = Tensor::matrix(2, 2, vec![0.3, -1.0, 2.0, 7.5]).unwrap();
        let mut params = vec![init.clone()];
        let mut adam = Adam::new(0.003);
        for _ in 0..3 {
            adam.step(&mut params, &[Tensor::zeros(&[2, 2])]).unwrap();
        }
        assert_eq!(params[0], init);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut adam = Adam::new(0.01);
        let mut prev = 1.0;
        for _ in 0..2 {
            adam.step(&mut params, &[Tensor::scalar(0.7)]).unwrap();
            let now = params[0].data()[0];
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut adam = Adam::new(0.1);
        assert!(adam.step(&mut params, &[Tensor::zeros(&[3])]).is_err());
        assert!(adam.step(&mut params, &[]).is_err());
    }
}
