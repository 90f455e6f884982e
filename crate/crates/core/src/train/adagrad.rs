use alloc::string::String;

use crate::error::{Error, Result};
use crate::param::Parameter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
}

impl Adagrad {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            epsilon: 1e-10,
        }
    }

    /// One update over every unfrozen parameter, then zeroes all gradients.
    ///
    /// Gradients are validated before anything is written, so a non-finite
    /// gradient leaves every parameter untouched.
    pub fn step(&self, params: &mut [(String, &mut Parameter)]) -> Result<()> {
        for (name, p) in params.iter() {
            if !p.frozen && !p.grad.is_finite() {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        let (lr, wd, eps) = (self.learning_rate, self.weight_decay, self.epsilon);
        for (_, p) in params.iter_mut() {
            if !p.frozen {
                let (values, grad, acc) = p.parts_mut();
                for ((v, g), a) in values
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(acc.data_mut())
                {
                    *a += g * g;
                    *v -= lr * g / (libm::sqrt(*a) + eps) + lr * wd * *v;
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}
