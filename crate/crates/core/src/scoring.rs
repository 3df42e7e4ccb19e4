//! Per-frame anomaly scores computed from a tracker registry snapshot.
//!
//! The registry must hold the state after frame `t - 1`: every prediction
//! stored in it was made before the frame being scored.

use std::collections::BTreeMap;

use crate::error::{contract, Result};
use crate::geometry::{average_boxes, component_std, iou, mask_iou, rasterize, BBox, FrameDims};
use crate::scalar::Scalar;
use crate::tracking::{TrackId, TrackerRegistry};

/// How per-object box-accuracy values are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BboxMode {
    Average,
    Min,
}

/// How per-object prediction spreads are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdMode {
    Average,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub frame: usize,
    pub raw: f64,
    /// Per-object contributions (higher = more anomalous), filled by the
    /// localizing variants.
    pub per_object: Option<BTreeMap<TrackId, f64>>,
}

impl FrameScore {
    pub fn zero(frame: usize) -> Self {
        Self {
            frame,
            raw: 0.0,
            per_object: None,
        }
    }

    /// Object with the largest contribution; the lowest id wins ties.
    pub fn top_object(&self) -> Option<TrackId> {
        let m = self.per_object.as_ref()?;
        let mut best: Option<(TrackId, f64)> = None;
        for (&id, &v) in m {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((id, v));
            }
        }
        best.map(|(id, _)| id)
    }
}

/// Scores of one video with their per-video min-max normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<FrameScore>,
    pub normalized: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(scores: Vec<FrameScore>) -> Result<Self> {
        normalize(ScoreSeries {
            scores,
            normalized: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.raw).collect()
    }
}

/// Box-accuracy score: per observed-and-tracked object, one minus the IoU
/// between the average of the boxes predicted for `frame` and the observation.
pub fn score_bbox<T: Scalar>(
    registry: &TrackerRegistry<T>,
    observations: &BTreeMap<TrackId, BBox<T>>,
    frame: usize,
    mode: BboxMode,
) -> FrameScore {
    let mut per = BTreeMap::new();
    for (&id, obs) in observations {
        let Some(tr) = registry.get(id) else { continue };
        let preds = tr.predictions_for(frame);
        let Ok(avg) = average_boxes(&preds) else {
            continue;
        };
        per.insert(id, iou(&avg, obs).as_f64());
    }
    if per.is_empty() {
        return FrameScore::zero(frame);
    }
    match mode {
        BboxMode::Average => {
            let mean = per.values().sum::<f64>() / per.len() as f64;
            FrameScore {
                frame,
                raw: 1.0 - mean,
                per_object: None,
            }
        }
        BboxMode::Min => {
            let min = per.values().copied().fold(f64::INFINITY, f64::min);
            let per_object = per.into_iter().map(|(id, v)| (id, 1.0 - v)).collect();
            FrameScore {
                frame,
                raw: 1.0 - min,
                per_object: Some(per_object),
            }
        }
    }
}

/// Rescales boxes from frame pixels to a raster of different size.
fn to_raster<T: Scalar>(boxes: &[BBox<T>], dims: FrameDims, raster: FrameDims) -> Vec<BBox<T>> {
    if dims == raster {
        return boxes.to_vec();
    }
    let sx = T::lit(raster.width as f64 / dims.width as f64);
    let sy = T::lit(raster.height as f64 / dims.height as f64);
    boxes
        .iter()
        .map(|b| BBox {
            cx: b.cx * sx,
            cy: b.cy * sy,
            w: b.w * sx,
            h: b.h * sy,
        })
        .collect()
}

/// Mask-accuracy score: one minus the IoU between the mask of every
/// tracker's one-step-ahead prediction made on `frame - 1` and the mask of
/// all observed boxes. `raster` selects the mask resolution (default: frame size).
pub fn score_mask<T: Scalar>(
    registry: &TrackerRegistry<T>,
    observations: &[BBox<T>],
    frame: usize,
    dims: FrameDims,
    raster: Option<FrameDims>,
) -> FrameScore {
    let predicted: Vec<BBox<T>> = registry
        .trackers()
        .filter_map(|tr| tr.history.front())
        .filter(|p| p.made_at + 1 == frame)
        .filter_map(|p| p.box_for(frame).copied())
        .collect();
    let raster = raster.unwrap_or(dims);
    let pm = rasterize(&to_raster(&predicted, dims, raster), raster);
    let om = rasterize(&to_raster(observations, dims, raster), raster);
    let agreement = mask_iou(&pm, &om).expect("masks share the raster dims");
    FrameScore {
        frame,
        raw: 1.0 - agreement,
        per_object: None,
    }
}

/// Prediction-consistency score: per object with at least two stored
/// predictions for `frame`, the largest population STD over the four box
/// components. With `normalize_by = Some(dims)` components are divided by
/// the frame size first; `None` keeps pixels.
pub fn score_pred_consistency<T: Scalar>(
    registry: &TrackerRegistry<T>,
    frame: usize,
    mode: StdMode,
    normalize_by: Option<FrameDims>,
) -> FrameScore {
    let mut per = BTreeMap::new();
    for tr in registry.trackers() {
        let preds = tr.predictions_for(frame);
        if preds.len() < 2 {
            continue;
        }
        let boxes: Vec<BBox<T>> = match normalize_by {
            Some(d) => preds
                .iter()
                .map(|b| BBox::from_array(b.normalized(d)))
                .collect(),
            None => preds,
        };
        let std = component_std(&boxes).expect("at least two boxes");
        let worst = std.iter().map(|v| v.as_f64()).fold(0.0, f64::max);
        per.insert(tr.id, worst);
    }
    if per.is_empty() {
        return FrameScore::zero(frame);
    }
    match mode {
        StdMode::Average => {
            let mean = per.values().sum::<f64>() / per.len() as f64;
            FrameScore {
                frame,
                raw: mean,
                per_object: None,
            }
        }
        StdMode::Max => {
            let max = per.values().copied().fold(0.0, f64::max);
            FrameScore {
                frame,
                raw: max,
                per_object: Some(per),
            }
        }
    }
}

/// Per-video min-max rescaling of the raw scores into `[0, 1]`; a constant
/// series maps to all zeros.
pub fn normalize(series: ScoreSeries) -> Result<ScoreSeries> {
    if series.scores.is_empty() {
        return Err(contract("cannot normalize an empty score series"));
    }
    if let Some(bad) = series.scores.iter().find(|s| !s.raw.is_finite()) {
        return Err(contract(format!(
            "non-finite raw score at frame {}",
            bad.frame
        )));
    }
    let lo = series
        .scores
        .iter()
        .map(|s| s.raw)
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .scores
        .iter()
        .map(|s| s.raw)
        .fold(f64::NEG_INFINITY, f64::max);
    let normalized = if hi > lo {
        series
            .scores
            .iter()
            .map(|s| (s.raw - lo) / (hi - lo))
            .collect()
    } else {
        vec![0.0; series.scores.len()]
    };
    Ok(ScoreSeries {
        scores: series.scores,
        normalized,
    })
}
