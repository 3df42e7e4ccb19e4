//! End-to-end driver: training samples from videos, the training loop,
//! online detection over a video, and corpus-level evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::evaluation::{
    frame_auc, roc_auc, AnomalyAnnotation, DisplacementAccumulator, RocResult,
};
use crate::features::roi_pool;
use crate::geometry::{BBox, FrameDims};
use crate::model::{
    ego_decode, ego_encode, fol_decode, fol_encode, loss_and_grad, EgoDelta, EgoState, HiddenState,
    ModelConfig, ModelParams, ObjectStep, PredictionSet, RmsProp, RmsPropConfig, SampleStep,
    TrainingSample,
};
use crate::scalar::Scalar;
use crate::scoring::{
    score_bbox, score_mask, score_pred_consistency, BboxMode, FrameScore, ScoreSeries, StdMode,
};
use crate::synth::SyntheticVideo;
use crate::tracking::{
    associate, fol_track_step, TrackId, TrackerRegistry, DEFAULT_IOU_THRESHOLD, DEFAULT_MAX_AGE,
};

/// Anomaly scoring variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    AvgIou,
    MinIou,
    Mask,
    AvgStd,
    MaxStd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::AvgIou,
        Method::MinIou,
        Method::Mask,
        Method::AvgStd,
        Method::MaxStd,
    ];

    /// Command-line spelling.
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::AvgIou => "avg-iou",
            Method::MinIou => "min-iou",
            Method::Mask => "mask",
            Method::AvgStd => "avg-std",
            Method::MaxStd => "max-std",
        }
    }

    /// Row label in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            Method::AvgIou => "FOL-AvgIoU",
            Method::MinIou => "FOL-MinIoU",
            Method::Mask => "FOL-Mask",
            Method::AvgStd => "FOL-AvgSTD",
            Method::MaxStd => "FOL-MaxSTD",
        }
    }

    pub fn is_consistency(&self) -> bool {
        matches!(self, Method::AvgStd | Method::MaxStd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.label() == s)
            .ok_or_else(|| contract(format!("unknown method '{s}'")))
    }
}

fn ego_deltas(video: &SyntheticVideo) -> Vec<EgoDelta> {
    let mut out = Vec::with_capacity(video.len());
    for (i, f) in video.frames.iter().enumerate() {
        out.push(if i == 0 {
            EgoDelta::zero()
        } else {
            f.ego.delta_from(&video.frames[i - 1].ego)
        });
    }
    out
}

fn cast_delta<T: Scalar>(d: &EgoDelta) -> EgoDelta<T> {
    EgoDelta {
        dphi: T::lit(d.dphi),
        dx: T::lit(d.dx),
        dz: T::lit(d.dz),
    }
}

/// Maximal runs of consecutive frames in which `track` has a box.
fn segments(track: &BTreeMap<usize, BBox>) -> Vec<Vec<(usize, BBox)>> {
    let mut out: Vec<Vec<(usize, BBox)>> = Vec::new();
    for (&f, &b) in track {
        match out.last_mut() {
            Some(seg) if seg.last().is_some_and(|(p, _)| p + 1 == f) => seg.push((f, b)),
            _ => out.push(vec![(f, b)]),
        }
    }
    out
}

/// One training sample per uninterrupted run of detections of an object.
///
/// Inputs are the detected boxes and the flow pooled inside them; targets are
/// the true boxes of the next `horizon` frames (steps whose future leaves the
/// video or the view get no target). The ego history runs from the first
/// frame of the video.
pub fn build_samples<T: Scalar>(
    video: &SyntheticVideo,
    horizon: usize,
) -> Result<Vec<TrainingSample<T>>> {
    if horizon == 0 {
        return Err(contract("horizon must be positive"));
    }
    let deltas = ego_deltas(video);
    let poses = &video.frames;
    let ego_target = |t: usize| -> Option<Vec<EgoDelta<T>>> {
        (t + horizon < poses.len()).then(|| {
            (1..=horizon)
                .map(|j| cast_delta(&poses[t + j].ego.delta_from(&poses[t].ego)))
                .collect()
        })
    };
    let truth = video.truth_tracks();
    let mut out = Vec::new();
    for (id, track) in video.detection_tracks() {
        let true_boxes = &truth[&id];
        for seg in segments(&track) {
            let (first, last) = (seg[0].0, seg[seg.len() - 1].0);
            let mut steps: Vec<SampleStep<T>> = (0..first)
                .map(|t| SampleStep {
                    ego_delta: cast_delta(&deltas[t]),
                    ego_target: ego_target(t),
                    object: None,
                })
                .collect();
            for &(t, bbox) in &seg {
                let target: Option<Vec<BBox<T>>> = (1..=horizon)
                    .map(|j| true_boxes.get(&(t + j)).map(|b| b.cast()))
                    .collect();
                let feature = roi_pool(&video.frames[t].flow, &bbox);
                let feature = crate::features::ObjectFeature::new(
                    feature.values().iter().map(|v| T::lit(*v)).collect(),
                )?;
                steps.push(SampleStep {
                    ego_delta: cast_delta(&deltas[t]),
                    ego_target: ego_target(t),
                    object: Some(ObjectStep {
                        bbox: bbox.cast(),
                        feature,
                        target,
                    }),
                });
            }
            debug_assert_eq!(steps.len(), last + 1);
            out.push(TrainingSample {
                dims: video.dims,
                steps,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub lambda_ego: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            optimizer: RmsPropConfig::default(),
            lambda_ego: 1.0,
            seed: 0,
        }
    }
}

/// Minibatch RMSprop over `samples`, reshuffled every epoch from `config.seed`.
/// `on_epoch(epoch, mean_loss)` is called after each epoch.
pub fn train<T: Scalar>(
    params: &mut ModelParams<T>,
    samples: &[TrainingSample<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if samples.is_empty() || config.batch_size == 0 {
        return Err(contract("training needs samples and a positive batch size"));
    }
    let mut opt = RmsProp::new(params, config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let lambda = T::lit(config.lambda_ego);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batch = Vec::with_capacity(config.batch_size);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let (loss, grads) = loss_and_grad(params, &batch, lambda)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Data(format!("training diverged in epoch {epoch}")));
            }
            opt.step(params, &grads);
            sum += loss.as_f64() * chunk.len() as f64;
        }
        let mean = sum / samples.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub max_age: u32,
    pub iou_threshold: f64,
    /// Resolution of the masks compared by the mask score (default: frame size).
    pub mask_raster: Option<FrameDims>,
    /// Whether consistency scores are measured in frame-normalized units.
    pub normalize_std: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            max_age: DEFAULT_MAX_AGE,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            mask_raster: None,
            normalize_std: true,
        }
    }
}

/// Runs tracking and forecasting over `video` and scores every frame with
/// each of `methods`. Scores at frame `t` use forecasts made up to `t - 1`.
pub fn detect<T: Scalar>(
    params: &ModelParams<T>,
    video: &SyntheticVideo,
    methods: &[Method],
    config: &DetectConfig,
) -> Result<BTreeMap<Method, ScoreSeries>> {
    if video.is_empty() {
        return Err(contract("cannot score an empty video"));
    }
    if video.dims != params.config.dims {
        return Err(contract(format!(
            "video is {} but the model expects {}",
            video.dims, params.config.dims
        )));
    }
    let mut registry = TrackerRegistry::<T>::new(config.max_age)?;
    let mut ego = EgoState::new(params.config.h_ego);
    let deltas = ego_deltas(video);
    let mut scores: BTreeMap<Method, Vec<FrameScore>> =
        methods.iter().map(|m| (*m, Vec::new())).collect();
    let dims = video.dims;

    for (t, frame) in video.frames.iter().enumerate() {
        ego = ego_encode(params, &ego, &cast_delta(&deltas[t]));
        let ego_future = ego_decode(params, &ego);
        let boxes: Vec<BBox<T>> = frame.detections.iter().map(|d| d.bbox.cast()).collect();
        let assoc = associate(&boxes, &registry, config.iou_threshold)?;
        let matched: BTreeMap<TrackId, BBox<T>> = assoc
            .matches
            .iter()
            .map(|&(id, d)| (id, boxes[d]))
            .collect();

        for (m, out) in scores.iter_mut() {
            let fs = match m {
                Method::AvgIou => score_bbox(&registry, &matched, t, BboxMode::Average),
                Method::MinIou => score_bbox(&registry, &matched, t, BboxMode::Min),
                Method::Mask => score_mask(&registry, &boxes, t, dims, config.mask_raster),
                Method::AvgStd | Method::MaxStd => {
                    let mode = if *m == Method::AvgStd {
                        StdMode::Average
                    } else {
                        StdMode::Max
                    };
                    score_pred_consistency(&registry, t, mode, config.normalize_std.then_some(dims))
                }
            };
            out.push(FrameScore {
                frame: frame.frame,
                ..fs
            });
        }

        let flow = frame.flow.cast::<T>();
        let mut observed = BTreeMap::new();
        for (id, bbox) in &matched {
            observed.insert(*id, (*bbox, roi_pool(&flow, bbox)));
        }
        for &d in &assoc.unmatched_detections {
            let id = registry.allocate_id();
            observed.insert(id, (boxes[d], roi_pool(&flow, &boxes[d])));
        }
        fol_track_step(&mut registry, params, &observed, &flow, &ego_future, t)?;
    }
    scores
        .into_iter()
        .map(|(m, s)| Ok((m, ScoreSeries::new(s)?)))
        .collect()
}

/// Corpus-level and per-video ROC of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEvaluation {
    pub method: Method,
    pub corpus: RocResult,
    /// Per-video AUC; `None` where a video has frames of one class only.
    pub per_video: Vec<Option<f64>>,
}

/// Scores every video with the annotations it carries and pools all frames
/// into one ROC per method.
pub fn evaluate(
    scores: &[(BTreeMap<Method, ScoreSeries>, Vec<AnomalyAnnotation>)],
    methods: &[Method],
) -> Result<Vec<MethodEvaluation>> {
    let mut out = Vec::new();
    for &m in methods {
        let mut pairs = Vec::with_capacity(scores.len());
        let mut per_video = Vec::with_capacity(scores.len());
        for (by_method, ann) in scores {
            let series = by_method
                .get(&m)
                .ok_or_else(|| contract(format!("no {m} scores for a video")))?;
            pairs.push((series, ann.as_slice()));
            let labels = crate::evaluation::frame_labels(series.len(), ann)?;
            per_video.push(roc_auc(&series.normalized, &labels).ok().map(|r| r.auc));
        }
        out.push(MethodEvaluation {
            method: m,
            corpus: frame_auc(&pairs)?,
            per_video,
        });
    }
    Ok(out)
}

/// Forecast quality of the model along every uninterrupted detection run of
/// `video`, against the true boxes. The recurrent state restarts at each run.
pub fn forecast_quality<T: Scalar>(
    params: &ModelParams<T>,
    video: &SyntheticVideo,
) -> Result<DisplacementAccumulator> {
    let hz = params.config.horizon;
    let deltas = ego_deltas(video);
    let mut ego = EgoState::new(params.config.h_ego);
    let mut futures = Vec::with_capacity(video.len());
    for d in &deltas {
        ego = ego_encode(params, &ego, &cast_delta(d));
        futures.push(ego_decode(params, &ego));
    }
    let truth = video.truth_tracks();
    let mut acc = DisplacementAccumulator::default();
    for (id, track) in video.detection_tracks() {
        let true_boxes: BTreeMap<usize, BBox<T>> =
            truth[&id].iter().map(|(f, b)| (*f, b.cast())).collect();
        for seg in segments(&track) {
            let mut hidden = HiddenState::new(params.config.h_loc);
            let mut sets = Vec::with_capacity(seg.len());
            for (t, bbox) in seg {
                let b: BBox<T> = bbox.cast();
                let flow = video.frames[t].flow.cast::<T>();
                hidden = fol_encode(params, &hidden, &b, &roi_pool(&flow, &b), video.dims);
                sets.push(fol_decode(params, &hidden, &b, &futures[t], video.dims, t));
            }
            debug_assert!(sets.iter().all(|s| s.horizon() == hz));
            acc.add(&sets, &true_boxes);
        }
    }
    Ok(acc)
}

/// Forecast quality of the persistence predictor (every future box equals
/// the current detection) on the same runs as [`forecast_quality`].
pub fn persistence_quality(video: &SyntheticVideo, horizon: usize) -> DisplacementAccumulator {
    let truth = video.truth_tracks();
    let mut acc = DisplacementAccumulator::default();
    for (id, track) in video.detection_tracks() {
        let sets: Vec<PredictionSet> = track
            .iter()
            .map(|(&t, &b)| PredictionSet {
                made_at: t,
                boxes: vec![b; horizon],
            })
            .collect();
        acc.add(&sets, &truth[&id]);
    }
    acc
}

/// Model sizes used for the packaged benchmark.
pub fn benchmark_model_config(dims: FrameDims) -> ModelConfig {
    ModelConfig {
        h_loc: 64,
        h_ego: 32,
        horizon: 5,
        dims,
    }
}
