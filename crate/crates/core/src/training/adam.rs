use crate::autodiff::ParamSet;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const LEARNING_RATE: f64 = 1e-3;

/// Adam moments for every parameter, with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: ParamSet,
    pub second_moment: ParamSet,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, learning_rate: f64) -> AdamState {
        AdamState {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            learning_rate,
        }
    }

    /// One update of every parameter:
    ///
    /// ```text
    /// m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
    /// θ ← θ − lr · m̂ / (√v̂ + ε)  with m̂ = m/(1−β1ᵗ), v̂ = v/(1−β2ᵗ)
    /// ```
    ///
    /// A parameter whose gradient is entirely zero keeps zero moments, so its
    /// value is left bitwise untouched while the moments are still zero.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.first_moment) {
            return Err(Error::shape("adam_step", "gradients, moments and parameters differ in layout"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
        for (((_, theta), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let slots = theta
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
            for ((th, &gi), (mi, vi)) in slots {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *th -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
