//! Recurrent future-object-localization network and ego-motion predictor.
//!
//! The network pairs a location encoder (normalized box) and a motion encoder
//! (pooled flow feature), fuses their states with a linear projection and
//! unrolls a decoder that emits per-step box offsets. A second small
//! encoder-decoder forecasts the ego-vehicle's pose changes, which the box
//! decoder consumes at every step.

mod ego;
mod fol;
mod gradcheck;
mod gru;
mod optim;
mod train;

use rand::Rng;

pub use ego::{ego_decode, ego_encode, ego_predict, EgoDelta, EgoPose, EgoState};
pub use fol::{fol_decode, fol_encode, HiddenState, PredictionSet};
pub use gradcheck::{grad_check, grad_check_with};
pub use gru::{GruCell, Linear};
pub use optim::{rmsprop_update, RmsProp, RmsPropConfig};
pub use train::{
    loss, loss_and_grad, sample_loss, smooth_l1, ObjectStep, SampleStep, TrainingSample,
};

use crate::error::{contract, Result};
use crate::geometry::FrameDims;
use crate::scalar::Scalar;

pub const BOX_DIM: usize = 4;
pub const EGO_DIM: usize = 3;
pub use crate::features::FEATURE_LEN;

/// Flow values (pixels/frame) are multiplied by this before entering the motion encoder.
pub const MOTION_INPUT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub h_loc: usize,
    pub h_ego: usize,
    /// Prediction horizon in frames.
    pub horizon: usize,
    /// Frame size the model normalizes boxes against.
    pub dims: FrameDims,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            h_loc: 512,
            h_ego: 128,
            horizon: 5,
            dims: FrameDims::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_loc == 0 || self.h_ego == 0 || self.horizon == 0 {
            return Err(contract(format!("model sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Every trainable tensor of the FOL network and the ego model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub loc_enc: GruCell<T>,
    pub mot_enc: GruCell<T>,
    pub fusion: Linear<T>,
    pub decoder: GruCell<T>,
    pub head: Linear<T>,
    pub ego_enc: GruCell<T>,
    pub ego_dec: GruCell<T>,
    pub ego_head: Linear<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters. Such a model predicts box persistence and a stationary ego.
    pub fn zeros(config: ModelConfig) -> Self {
        let (h, e) = (config.h_loc, config.h_ego);
        Self {
            config,
            loc_enc: GruCell::zeros(BOX_DIM, h),
            mot_enc: GruCell::zeros(FEATURE_LEN, h),
            fusion: Linear::zeros(2 * h, h),
            decoder: GruCell::zeros(h + EGO_DIM, h),
            head: Linear::zeros(h, BOX_DIM),
            ego_enc: GruCell::zeros(EGO_DIM, e),
            ego_dec: GruCell::zeros(EGO_DIM, e),
            ego_head: Linear::zeros(e, EGO_DIM),
        }
    }

    /// Uniform `±1/sqrt(fan)` initialization; output heads start at zero so a
    /// fresh model begins from the persistence prediction.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Self {
        let (h, e) = (config.h_loc, config.h_ego);
        Self {
            config,
            loc_enc: GruCell::uniform(BOX_DIM, h, rng),
            mot_enc: GruCell::uniform(FEATURE_LEN, h, rng),
            fusion: Linear::uniform(2 * h, h, rng),
            decoder: GruCell::uniform(h + EGO_DIM, h, rng),
            head: Linear::zeros(h, BOX_DIM),
            ego_enc: GruCell::uniform(EGO_DIM, e, rng),
            ego_dec: GruCell::uniform(EGO_DIM, e, rng),
            ego_head: Linear::zeros(e, EGO_DIM),
        }
    }

    /// Zeros with the same shapes (gradient / optimizer-state buffer).
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    /// Named tensors in a fixed order; the order defines the checkpoint layout.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        vec![
            ("loc_enc.w", &self.loc_enc.w),
            ("loc_enc.u", &self.loc_enc.u),
            ("loc_enc.b", &self.loc_enc.b),
            ("mot_enc.w", &self.mot_enc.w),
            ("mot_enc.u", &self.mot_enc.u),
            ("mot_enc.b", &self.mot_enc.b),
            ("fusion.w", &self.fusion.w),
            ("fusion.b", &self.fusion.b),
            ("decoder.w", &self.decoder.w),
            ("decoder.u", &self.decoder.u),
            ("decoder.b", &self.decoder.b),
            ("head.w", &self.head.w),
            ("head.b", &self.head.b),
            ("ego_enc.w", &self.ego_enc.w),
            ("ego_enc.u", &self.ego_enc.u),
            ("ego_enc.b", &self.ego_enc.b),
            ("ego_dec.w", &self.ego_dec.w),
            ("ego_dec.u", &self.ego_dec.u),
            ("ego_dec.b", &self.ego_dec.b),
            ("ego_head.w", &self.ego_head.w),
            ("ego_head.b", &self.ego_head.b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<T>)> {
        vec![
            ("loc_enc.w", &mut self.loc_enc.w),
            ("loc_enc.u", &mut self.loc_enc.u),
            ("loc_enc.b", &mut self.loc_enc.b),
            ("mot_enc.w", &mut self.mot_enc.w),
            ("mot_enc.u", &mut self.mot_enc.u),
            ("mot_enc.b", &mut self.mot_enc.b),
            ("fusion.w", &mut self.fusion.w),
            ("fusion.b", &mut self.fusion.b),
            ("decoder.w", &mut self.decoder.w),
            ("decoder.u", &mut self.decoder.u),
            ("decoder.b", &mut self.decoder.b),
            ("head.w", &mut self.head.w),
            ("head.b", &mut self.head.b),
            ("ego_enc.w", &mut self.ego_enc.w),
            ("ego_enc.u", &mut self.ego_enc.u),
            ("ego_enc.b", &mut self.ego_enc.b),
            ("ego_dec.w", &mut self.ego_dec.w),
            ("ego_dec.u", &mut self.ego_dec.u),
            ("ego_dec.b", &mut self.ego_dec.b),
            ("ego_head.w", &mut self.ego_head.w),
            ("ego_head.b", &mut self.ego_head.b),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            T::axpy(alpha, b, a);
        }
    }

    pub fn scale(&mut self, s: T) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v * s);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.config);
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::lit(s.as_f64());
            }
        }
        out
    }
}
