use super::gru::GruCache;
use super::{EgoDelta, ModelParams, BOX_DIM, EGO_DIM, MOTION_INPUT_SCALE};
use crate::features::ObjectFeature;
use crate::geometry::{BBox, FrameDims};
use crate::scalar::Scalar;

/// Per-object recurrent state of the two encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    pub h_loc: Vec<T>,
    pub h_mot: Vec<T>,
}

impl<T: Scalar> HiddenState<T> {
    pub fn new(h_loc: usize) -> Self {
        Self {
            h_loc: vec![T::zero(); h_loc],
            h_mot: vec![T::zero(); h_loc],
        }
    }
}

/// The `horizon` future boxes predicted at frame `made_at`; `boxes[j]` is the
/// prediction for frame `made_at + j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<T = f64> {
    pub made_at: usize,
    pub boxes: Vec<BBox<T>>,
}

impl<T: Scalar> PredictionSet<T> {
    pub fn horizon(&self) -> usize {
        self.boxes.len()
    }

    /// The box this set predicts for `frame`, if `frame` is within its horizon.
    pub fn box_for(&self, frame: usize) -> Option<&BBox<T>> {
        if frame <= self.made_at {
            return None;
        }
        self.boxes.get(frame - self.made_at - 1)
    }
}

pub(crate) fn motion_input<T: Scalar>(feat: &ObjectFeature<T>) -> Vec<T> {
    let s = T::lit(MOTION_INPUT_SCALE);
    feat.values().iter().map(|v| *v * s).collect()
}

pub(crate) struct EncodeTrace<T> {
    pub loc: GruCache<T>,
    pub mot: GruCache<T>,
}

pub(crate) fn encode_forward<T: Scalar>(
    params: &ModelParams<T>,
    state: &HiddenState<T>,
    nbox: &[T; BOX_DIM],
    feat: &ObjectFeature<T>,
) -> (HiddenState<T>, EncodeTrace<T>) {
    let (h_loc, loc) = params.loc_enc.forward(nbox, &state.h_loc);
    let (h_mot, mot) = params.mot_enc.forward(&motion_input(feat), &state.h_mot);
    (HiddenState { h_loc, h_mot }, EncodeTrace { loc, mot })
}

pub(crate) struct DecodeTrace<T> {
    /// `[h_loc; h_mot]`, the fusion input.
    pub joint: Vec<T>,
    pub steps: Vec<GruCache<T>>,
    /// Decoder state after each step (head input).
    pub outputs: Vec<Vec<T>>,
}

/// Unrolls the decoder. Returns the normalized predicted boxes
/// `nbox + cumulative offsets`.
pub(crate) fn decode_forward<T: Scalar>(
    params: &ModelParams<T>,
    state: &HiddenState<T>,
    nbox: &[T; BOX_DIM],
    ego: &[[T; EGO_DIM]],
) -> (Vec<[T; BOX_DIM]>, DecodeTrace<T>) {
    let h = params.config.h_loc;
    let mut joint = Vec::with_capacity(2 * h);
    joint.extend_from_slice(&state.h_loc);
    joint.extend_from_slice(&state.h_mot);
    let fused = params.fusion.forward(&joint);
    let mut x = vec![T::zero(); h + EGO_DIM];
    x[..h].copy_from_slice(&fused);
    let mut d = fused;
    let mut acc = *nbox;
    let mut preds = Vec::with_capacity(ego.len());
    let mut steps = Vec::with_capacity(ego.len());
    let mut outputs = Vec::with_capacity(ego.len());
    for e in ego {
        x[h..].copy_from_slice(e);
        let (next, cache) = params.decoder.forward(&x, &d);
        let off = params.head.forward(&next);
        for k in 0..BOX_DIM {
            acc[k] = acc[k] + off[k];
        }
        preds.push(acc);
        steps.push(cache);
        outputs.push(next.clone());
        d = next;
    }
    (
        preds,
        DecodeTrace {
            joint,
            steps,
            outputs,
        },
    )
}

/// Updates an object's encoder states with its current box and motion feature.
pub fn fol_encode<T: Scalar>(
    params: &ModelParams<T>,
    state: &HiddenState<T>,
    bbox: &BBox<T>,
    feat: &ObjectFeature<T>,
    dims: FrameDims,
) -> HiddenState<T> {
    encode_forward(params, state, &bbox.normalized(dims), feat).0
}

/// Predicts the next `ego_future.len()` boxes from the encoder state.
/// Widths and heights are clamped to at least one pixel.
pub fn fol_decode<T: Scalar>(
    params: &ModelParams<T>,
    state: &HiddenState<T>,
    current: &BBox<T>,
    ego_future: &[EgoDelta<T>],
    dims: FrameDims,
    made_at: usize,
) -> PredictionSet<T> {
    let ego: Vec<[T; EGO_DIM]> = ego_future.iter().map(|e| e.to_array()).collect();
    let (preds, _) = decode_forward(params, state, &current.normalized(dims), &ego);
    let one = T::one();
    let boxes = preds
        .into_iter()
        .map(|p| {
            let b = BBox::denormalized(p, dims);
            BBox {
                w: b.w.max(one),
                h: b.h.max(one),
                ..b
            }
        })
        .collect();
    PredictionSet { made_at, boxes }
}
