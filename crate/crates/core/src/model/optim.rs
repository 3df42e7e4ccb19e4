use super::ModelParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    /// Smoothing constant of the squared-gradient average.
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: running average of squared gradients per parameter.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    pub square_avg: ModelParams<T>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(params: &ModelParams<T>, config: RmsPropConfig) -> Self {
        Self {
            config,
            square_avg: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        rmsprop_update(params, grads, &mut self.square_avg, self.config);
    }
}

/// `v <- rho v + (1 - rho) g^2; theta <- theta - lr g / (sqrt(v) + eps)`.
/// No weight decay, no momentum.
pub fn rmsprop_update<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    square_avg: &mut ModelParams<T>,
    cfg: RmsPropConfig,
) {
    let rho = T::lit(cfg.decay);
    let one_minus = T::lit(1.0 - cfg.decay);
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    for (((_, p), (_, g)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(square_avg.tensors_mut())
    {
        for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = rho * *vi + one_minus * *gi * *gi;
            *pi = *pi - lr * *gi / (vi.sqrt() + eps);
        }
    }
}
