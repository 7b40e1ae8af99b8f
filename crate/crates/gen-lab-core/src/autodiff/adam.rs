//! Bias-corrected Adam.

use super::tape::AutodiffError;
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64, shapes: &[Vec<usize>]) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
        }
    }

    pub fn for_params(learning_rate: f64, params: &[&Tensor]) -> Self {
        let shapes: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
        Self::new(learning_rate, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Adjust the learning rate (e.g. for a decay schedule); moments and
    /// step count are untouched.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }
}

/// One Adam update over a parameter list. Parameters, gradients and moment
/// accumulators are aligned by index and must shape-match.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
) -> Result<(), AutodiffError> {
    assert_eq!(params.len(), grads.len(), "param/grad count mismatch");
    assert_eq!(
        params.len(),
        state.first_moment.len(),
        "param/state count mismatch"
    );
    for (i, g) in grads.iter().enumerate() {
        if !g.all_finite() {
            return Err(AutodiffError::NonFiniteGradient { index: i });
        }
        assert_eq!(
            g.shape(),
            params[i].shape(),
            "gradient shape mismatch at {i}"
        );
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
        state
            .first_moment
            .iter_mut()
            .zip(state.second_moment.iter_mut()),
    ) {
        for k in 0..g.len() {
            let gk = g.data()[k];
            let mk = state.beta1 * m.data()[k] + (1.0 - state.beta1) * gk;
            let vk = state.beta2 * v.data()[k] + (1.0 - state.beta2) * gk * gk;
            m.data_mut()[k] = mk;
            v.data_mut()[k] = vk;
            let m_hat = mk / bc1;
            let v_hat = vk / bc2;
            p.data_mut()[k] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
