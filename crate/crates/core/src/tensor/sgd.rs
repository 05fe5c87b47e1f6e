use super::Tensor;
use crate::error::{Error, Result};

/// SGD with momentum and L2 weight decay.
///
/// `v ← g + wd·p + μ·v`, then `p ← p − lr·v`. Velocities are keyed by the
/// position of each parameter in the slice passed to [`Sgd::step`], so callers
/// must pass parameters in a stable order.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update from each parameter's accumulated gradient and clears
    /// the gradients. Parameters without a gradient buffer are skipped.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of parameter #{i}")));
                }
            }
        }
        for (p, vel) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let Some(g) = p.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let lr = self.learning_rate;
            for ((w, gv), v) in p.data_mut().iter_mut().zip(&g).zip(vel.iter_mut()) {
                *v = gv + self.weight_decay * *w + self.momentum * *v;
                *w -= lr * *v;
            }
            p.zero_grad();
        }
        Ok(())
    }
}

pub fn sgd_step(params: &mut [&mut Tensor], optimizer: &mut Sgd) -> Result<()> {
    optimizer.step(params)
}
