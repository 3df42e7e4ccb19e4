//! Training samples, the training objective and its analytic gradient.
//!
//! Objective per sample: mean smooth-L1 over every predicted normalized box
//! parameter that has a target, plus `lambda_ego` times the mean squared error
//! of the predicted ego changes. The box decoder consumes the ego predictions
//! as constants, so ego parameters only receive gradient from the ego term.

use super::fol::{decode_forward, encode_forward, DecodeTrace, EncodeTrace};
use super::gru::GruCache;
use super::{ego_decode, EgoDelta, EgoState, HiddenState, ModelParams, BOX_DIM, EGO_DIM};
use crate::error::{contract, Result};
use crate::features::ObjectFeature;
use crate::geometry::{BBox, FrameDims};
use crate::scalar::Scalar;

/// Observation of the tracked object at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectStep<T> {
    pub bbox: BBox<T>,
    pub feature: ObjectFeature<T>,
    /// Ground-truth boxes for the next `horizon` frames, when all are known.
    pub target: Option<Vec<BBox<T>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStep<T> {
    /// `E_t - E_{t-1}` (zero on the first frame of a video).
    pub ego_delta: EgoDelta<T>,
    /// Ground-truth `E_{t+j} - E_t`, `j = 1..=horizon`.
    pub ego_target: Option<Vec<EgoDelta<T>>>,
    pub object: Option<ObjectStep<T>>,
}

/// One object track aligned with the ego history of its video. The ego
/// encoder consumes every step; the object encoders consume the steps that
/// carry an object, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample<T> {
    pub dims: FrameDims,
    pub steps: Vec<SampleStep<T>>,
}

#[inline]
pub fn smooth_l1<T: Scalar>(r: T) -> T {
    let a = r.abs();
    if a < T::one() {
        T::lit(0.5) * r * r
    } else {
        a - T::lit(0.5)
    }
}

#[inline]
fn smooth_l1_grad<T: Scalar>(r: T) -> T {
    if r.abs() < T::one() {
        r
    } else {
        r.signum()
    }
}

struct EgoTrace<T> {
    enc: GruCache<T>,
    dec: Vec<GruCache<T>>,
    outs: Vec<Vec<T>>,
    preds: Vec<[T; EGO_DIM]>,
}

struct ObjectTrace<T> {
    enc: EncodeTrace<T>,
    dec: Option<(DecodeTrace<T>, Vec<[T; BOX_DIM]>)>,
}

fn validate<T: Scalar>(params: &ModelParams<T>, sample: &TrainingSample<T>) -> Result<()> {
    let hz = params.config.horizon;
    for (i, s) in sample.steps.iter().enumerate() {
        if let Some(t) = &s.ego_target {
            if t.len() != hz {
                return Err(contract(format!(
                    "step {i}: ego target has {} entries, horizon is {hz}",
                    t.len()
                )));
            }
        }
        if let Some(o) = &s.object {
            if let Some(t) = &o.target {
                if t.len() != hz {
                    return Err(contract(format!(
                        "step {i}: box target has {} entries, horizon is {hz}",
                        t.len()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Loss of one sample split into its box and ego terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LossParts<T> {
    pub boxes: T,
    pub ego: T,
}

impl<T: Scalar> LossParts<T> {
    pub fn total(&self) -> T {
        self.boxes + self.ego
    }
}

/// Forward pass (and, when `grads` is given, the backward pass) for one sample.
///
/// The box decoder is fed ego predictions computed with `ego_source`
/// (normally `params` itself); evaluating with a fixed `ego_source` is how
/// the stop-gradient is reproduced when differencing numerically.
pub(crate) fn run<T: Scalar>(
    params: &ModelParams<T>,
    ego_source: Option<&ModelParams<T>>,
    sample: &TrainingSample<T>,
    lambda_ego: T,
    grads: Option<&mut ModelParams<T>>,
) -> Result<LossParts<T>> {
    validate(params, sample)?;
    let cfg = params.config;
    let (hl, he, hz) = (cfg.h_loc, cfg.h_ego, cfg.horizon);
    let dims = sample.dims;

    let n_box = sample
        .steps
        .iter()
        .filter(|s| s.object.as_ref().is_some_and(|o| o.target.is_some()))
        .count();
    let n_ego = sample
        .steps
        .iter()
        .filter(|s| s.ego_target.is_some())
        .count();
    let box_norm = if n_box > 0 {
        T::one() / T::lit((n_box * hz * BOX_DIM) as f64)
    } else {
        T::zero()
    };
    let ego_norm = if n_ego > 0 {
        lambda_ego / T::lit((n_ego * hz * EGO_DIM) as f64)
    } else {
        T::zero()
    };

    let keep = grads.is_some();
    let mut ego_h = vec![T::zero(); he];
    let mut fol = HiddenState::<T>::new(hl);
    let mut box_loss = T::zero();
    let mut ego_loss = T::zero();
    let mut src_h = vec![T::zero(); he];
    let mut ego_traces = Vec::new();
    let mut obj_traces: Vec<Option<ObjectTrace<T>>> = Vec::new();

    for step in &sample.steps {
        let (eh, enc) = params.ego_enc.forward(&step.ego_delta.to_array(), &ego_h);
        ego_h = eh;
        let mut g = ego_h.clone();
        let mut prev = [T::zero(); EGO_DIM];
        let mut dec = Vec::with_capacity(hz);
        let mut outs = Vec::with_capacity(hz);
        let mut preds = Vec::with_capacity(hz);
        for _ in 0..hz {
            let (next, c) = params.ego_dec.forward(&prev, &g);
            let off = params.ego_head.forward(&next);
            for k in 0..EGO_DIM {
                prev[k] = prev[k] + off[k];
            }
            preds.push(prev);
            dec.push(c);
            outs.push(next.clone());
            g = next;
        }
        if let Some(target) = &step.ego_target {
            for (p, t) in preds.iter().zip(target) {
                for (a, b) in p.iter().zip(t.to_array()) {
                    let r = *a - b;
                    ego_loss = ego_loss + ego_norm * r * r;
                }
            }
        }

        let fed: Vec<[T; EGO_DIM]> = match ego_source {
            None => preds.clone(),
            Some(src) => {
                src_h = src.ego_enc.forward(&step.ego_delta.to_array(), &src_h).0;
                ego_decode(src, &EgoState { h: src_h.clone() })
                    .iter()
                    .map(|d| d.to_array())
                    .collect()
            }
        };
        let obj_trace = match &step.object {
            None => None,
            Some(obj) => {
                let nbox = obj.bbox.normalized(dims);
                let (next, enc) = encode_forward(params, &fol, &nbox, &obj.feature);
                fol = next;
                let dec = match &obj.target {
                    None => None,
                    Some(target) => {
                        let (bp, tr) = decode_forward(params, &fol, &nbox, &fed);
                        for (p, t) in bp.iter().zip(target) {
                            for (a, b) in p.iter().zip(t.normalized(dims)) {
                                box_loss = box_loss + box_norm * smooth_l1(*a - b);
                            }
                        }
                        Some((tr, bp))
                    }
                };
                Some(ObjectTrace { enc, dec })
            }
        };
        if keep {
            ego_traces.push(EgoTrace {
                enc,
                dec,
                outs,
                preds,
            });
            obj_traces.push(obj_trace);
        }
    }

    let parts = LossParts {
        boxes: box_loss,
        ego: ego_loss,
    };
    let Some(grads) = grads else {
        return Ok(parts);
    };

    let mut d_hl = vec![T::zero(); hl];
    let mut d_hm = vec![T::zero(); hl];
    let mut d_e = vec![T::zero(); he];
    let two = T::lit(2.0);

    for (t, step) in sample.steps.iter().enumerate().rev() {
        if let (Some(obj), Some(tr)) = (&step.object, &obj_traces[t]) {
            if let (Some(target), Some((dtr, preds))) = (&obj.target, &tr.dec) {
                let mut carry = [T::zero(); BOX_DIM];
                let mut dd = vec![T::zero(); hl];
                let mut dfused = vec![T::zero(); hl];
                for j in (0..hz).rev() {
                    let tn = target[j].normalized(dims);
                    for k in 0..BOX_DIM {
                        carry[k] = carry[k] + box_norm * smooth_l1_grad(preds[j][k] - tn[k]);
                    }
                    params
                        .head
                        .backward(&dtr.outputs[j], &carry, &mut grads.head, &mut dd);
                    let mut dx = vec![T::zero(); hl + EGO_DIM];
                    let mut dprev = vec![T::zero(); hl];
                    params.decoder.backward(
                        &dtr.steps[j],
                        &dd,
                        &mut grads.decoder,
                        Some(&mut dx),
                        &mut dprev,
                    );
                    for k in 0..hl {
                        dfused[k] = dfused[k] + dx[k];
                    }
                    dd = dprev;
                }
                for k in 0..hl {
                    dfused[k] = dfused[k] + dd[k];
                }
                let mut djoint = vec![T::zero(); 2 * hl];
                params
                    .fusion
                    .backward(&dtr.joint, &dfused, &mut grads.fusion, &mut djoint);
                for k in 0..hl {
                    d_hl[k] = d_hl[k] + djoint[k];
                    d_hm[k] = d_hm[k] + djoint[hl + k];
                }
            }
            let mut nl = vec![T::zero(); hl];
            params
                .loc_enc
                .backward(&tr.enc.loc, &d_hl, &mut grads.loc_enc, None, &mut nl);
            d_hl = nl;
            let mut nm = vec![T::zero(); hl];
            params
                .mot_enc
                .backward(&tr.enc.mot, &d_hm, &mut grads.mot_enc, None, &mut nm);
            d_hm = nm;
        }

        let et = &ego_traces[t];
        if let Some(target) = &step.ego_target {
            let mut carry = [T::zero(); EGO_DIM];
            let mut dg = vec![T::zero(); he];
            for j in (0..hz).rev() {
                let tv = target[j].to_array();
                for k in 0..EGO_DIM {
                    carry[k] = carry[k] + two * ego_norm * (et.preds[j][k] - tv[k]);
                }
                params
                    .ego_head
                    .backward(&et.outs[j], &carry, &mut grads.ego_head, &mut dg);
                let mut dx = vec![T::zero(); EGO_DIM];
                let mut dprev = vec![T::zero(); he];
                params.ego_dec.backward(
                    &et.dec[j],
                    &dg,
                    &mut grads.ego_dec,
                    Some(&mut dx),
                    &mut dprev,
                );
                for k in 0..EGO_DIM {
                    carry[k] = carry[k] + dx[k];
                }
                dg = dprev;
            }
            for k in 0..he {
                d_e[k] = d_e[k] + dg[k];
            }
        }
        let mut ne = vec![T::zero(); he];
        params
            .ego_enc
            .backward(&et.enc, &d_e, &mut grads.ego_enc, None, &mut ne);
        d_e = ne;
    }
    Ok(parts)
}

/// Objective value of a single sample.
pub fn sample_loss<T: Scalar>(
    params: &ModelParams<T>,
    sample: &TrainingSample<T>,
    lambda_ego: T,
) -> Result<T> {
    Ok(run(params, None, sample, lambda_ego, None)?.total())
}

/// Mean objective over a batch.
pub fn loss<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TrainingSample<T>],
    lambda_ego: T,
) -> Result<T> {
    if batch.is_empty() {
        return Err(contract("loss of an empty batch"));
    }
    let mut total = T::zero();
    for s in batch {
        total = total + sample_loss(params, s, lambda_ego)?;
    }
    Ok(total / T::lit(batch.len() as f64))
}

/// Mean objective over a batch and its gradient with respect to every parameter.
pub fn loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TrainingSample<T>],
    lambda_ego: T,
) -> Result<(T, ModelParams<T>)> {
    if batch.is_empty() {
        return Err(contract("loss of an empty batch"));
    }
    let mut grads = params.zeros_like();
    let mut total = T::zero();
    for s in batch {
        total = total + run(params, None, s, lambda_ego, Some(&mut grads))?.total();
    }
    let inv = T::one() / T::lit(batch.len() as f64);
    grads.scale(inv);
    Ok((total * inv, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn dims() -> FrameDims {
        FrameDims::new(100, 100).unwrap()
    }

    fn persistent_sample(hz: usize, residual_px: f64) -> TrainingSample<f64> {
        let b = BBox::new(50.0, 50.0, 10.0, 10.0).unwrap();
        let mut target = vec![b; hz];
        target[0].cx += residual_px;
        TrainingSample {
            dims: dims(),
            steps: vec![SampleStep {
                ego_delta: EgoDelta::zero(),
                ego_target: Some(vec![EgoDelta::zero(); hz]),
                object: Some(ObjectStep {
                    bbox: b,
                    feature: ObjectFeature::zeros(),
                    target: Some(target),
                }),
            }],
        }
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(-2.0), 1.5);
        assert_eq!(smooth_l1(0.0), 0.0);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let cfg = ModelConfig {
            h_loc: 4,
            h_ego: 3,
            horizon: 2,
            dims: dims(),
        };
        let p = ModelParams::<f64>::zeros(cfg);
        assert_eq!(loss(&p, &[persistent_sample(2, 0.0)], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_residual_contribution() {
        // residual of 50 px = 0.5 normalized units on one of 1*1*4 box terms
        let cfg = ModelConfig {
            h_loc: 4,
            h_ego: 3,
            horizon: 1,
            dims: dims(),
        };
        let p = ModelParams::<f64>::zeros(cfg);
        let l = loss(&p, &[persistent_sample(1, 50.0)], 1.0).unwrap();
        assert!((l - 0.125 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn batch_loss_is_mean_of_samples() {
        let cfg = ModelConfig {
            h_loc: 4,
            h_ego: 3,
            horizon: 2,
            dims: dims(),
        };
        let p = ModelParams::<f64>::zeros(cfg);
        let a = persistent_sample(2, 10.0);
        let b = persistent_sample(2, 30.0);
        let la = loss(&p, std::slice::from_ref(&a), 1.0).unwrap();
        let lb = loss(&p, std::slice::from_ref(&b), 1.0).unwrap();
        let lab = loss(&p, &[a, b], 1.0).unwrap();
        assert!((lab - 0.5 * (la + lb)).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_error() {
        let p = ModelParams::<f64>::zeros(ModelConfig {
            h_loc: 2,
            h_ego: 2,
            horizon: 1,
            dims: dims(),
        });
        assert!(loss(&p, &[], 1.0).is_err());
        assert!(loss_and_grad(&p, &[], 1.0).is_err());
    }

    #[test]
    fn wrong_target_length_is_error() {
        let p = ModelParams::<f64>::zeros(ModelConfig {
            h_loc: 2,
            h_ego: 2,
            horizon: 3,
            dims: dims(),
        });
        assert!(loss(&p, &[persistent_sample(2, 0.0)], 1.0).is_err());
    }
}
