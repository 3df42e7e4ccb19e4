use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ModelParams, EGO_DIM};
use crate::scalar::Scalar;

/// Ground-plane pose relative to the first frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoPose<T = f64> {
    /// Yaw, radians in `(-pi, pi]`.
    pub phi: T,
    pub x: T,
    pub z: T,
}

/// Pose change `{dphi, dx, dz}` between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoDelta<T = f64> {
    pub dphi: T,
    pub dx: T,
    pub dz: T,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::lit(PI);
    let two_pi = T::lit(2.0 * PI);
    let mut r = a % two_pi;
    if r <= -pi {
        r = r + two_pi;
    } else if r > pi {
        r = r - two_pi;
    }
    r
}

impl<T: Scalar> EgoPose<T> {
    pub fn new(phi: T, x: T, z: T) -> Self {
        Self {
            phi: wrap_angle(phi),
            x,
            z,
        }
    }

    /// `self - prev`, with the yaw difference wrapped.
    pub fn delta_from(&self, prev: &Self) -> EgoDelta<T> {
        EgoDelta {
            dphi: wrap_angle(self.phi - prev.phi),
            dx: self.x - prev.x,
            dz: self.z - prev.z,
        }
    }

    pub fn offset(&self, d: &EgoDelta<T>) -> Self {
        Self::new(self.phi + d.dphi, self.x + d.dx, self.z + d.dz)
    }
}

impl<T: Scalar> EgoDelta<T> {
    pub fn to_array(&self) -> [T; EGO_DIM] {
        [self.dphi, self.dx, self.dz]
    }

    pub fn from_slice(v: &[T]) -> Self {
        Self {
            dphi: v[0],
            dx: v[1],
            dz: v[2],
        }
    }

    pub fn zero() -> Self {
        Self {
            dphi: T::zero(),
            dx: T::zero(),
            dz: T::zero(),
        }
    }
}

/// Recurrent state of the ego encoder for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoState<T> {
    pub h: Vec<T>,
}

impl<T: Scalar> EgoState<T> {
    pub fn new(h_ego: usize) -> Self {
        Self {
            h: vec![T::zero(); h_ego],
        }
    }
}

/// Folds one observed pose change into the ego encoder state.
pub fn ego_encode<T: Scalar>(
    params: &ModelParams<T>,
    state: &EgoState<T>,
    delta: &EgoDelta<T>,
) -> EgoState<T> {
    let (h, _) = params.ego_enc.forward(&delta.to_array(), &state.h);
    EgoState { h }
}

/// Decodes the future pose changes `E_{t+j} - E_t`, `j = 1..=horizon`.
pub fn ego_decode<T: Scalar>(params: &ModelParams<T>, state: &EgoState<T>) -> Vec<EgoDelta<T>> {
    let mut g = state.h.clone();
    let mut prev = [T::zero(); EGO_DIM];
    let mut out = Vec::with_capacity(params.config.horizon);
    for _ in 0..params.config.horizon {
        let (next, _) = params.ego_dec.forward(&prev, &g);
        g = next;
        let step = params.ego_head.forward(&g);
        for k in 0..EGO_DIM {
            prev[k] = prev[k] + step[k];
        }
        out.push(EgoDelta::from_slice(&prev));
    }
    out
}

/// Encodes the whole delta history from a zero state, then decodes.
pub fn ego_predict<T: Scalar>(
    params: &ModelParams<T>,
    history: &[EgoDelta<T>],
) -> Vec<EgoDelta<T>> {
    let state = history
        .iter()
        .fold(EgoState::new(params.config.h_ego), |s, d| {
            ego_encode(params, &s, d)
        });
    ego_decode(params, &state)
}
