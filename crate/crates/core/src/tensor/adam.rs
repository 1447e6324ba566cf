use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
///
/// A parameter block whose gradient is entirely zero has its moments decayed
/// but is not moved.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(TensorError::Dimension {
                op: "adam_step",
                left: vec![params.len()],
                right: vec![grads.len(), self.first_moment.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.numel() != self.first_moment[i].len() {
                return Err(TensorError::Dimension {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = 1.0 - beta1.powf(self.step as f64);
        let correction2 = 1.0 - beta2.powf(self.step as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let frozen = g.data().iter().all(|&x| x == 0.0);
            for ((w, &gi), (mi, vi)) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                if !frozen {
                    let m_hat = *mi / correction1;
                    let v_hat = *vi / correction2;
                    *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor::vector(vec![0.5, -1.0])];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        state.apply(&mut params, &[Tensor::vector(vec![1.0, 1.0])]).unwrap();
        let moved = params.clone();
        for _ in 0..5 {
            state.apply(&mut params, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(params, moved);
        assert_eq!(state.step(), 6);
        assert!((state.first_moment()[0][0] - 0.1 * 0.9f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn one_step_matches_hand_computation() {
        // m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2, so the step is
        // lr * g / (|g| + eps).
        let config = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut params = vec![Tensor::scalar(2.0)];
        let mut state = AdamState::new(config, &params);
        state.apply(&mut params, &[Tensor::scalar(0.5)]).unwrap();
        let expected = 2.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-15);
        assert!((state.first_moment()[0][0] - 0.05).abs() < 1e-15);
        assert!((state.second_moment()[0][0] - 0.00025).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        let grad = [Tensor::vector(vec![3.0, -0.2])];
        let mut before = params[0].clone();
        for _ in 0..500 {
            before = params[0].clone();
            state.apply(&mut params, &grad).unwrap();
        }
        let d0 = params[0].data()[0] - before.data()[0];
        let d1 = params[0].data()[1] - before.data()[1];
        assert!((d0 + 1e-3).abs() < 1e-8, "{d0}");
        assert!((d1 - 1e-3).abs() < 1e-8, "{d1}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        let err = state.apply(&mut params, &[Tensor::zeros(&[3])]).unwrap_err();
        assert!(matches!(err, TensorError::Dimension { op: "adam_step", .. }));
        assert_eq!(state.step(), 0);
    }
}
