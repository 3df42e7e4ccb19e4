//! Tracker registry with missed-object re-prediction, and a greedy IoU
//! associator that turns anonymous detections into tracked observations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{contract, Result};
use crate::features::{roi_pool, FlowField, ObjectFeature};
use crate::geometry::{iou, BBox};
use crate::model::{fol_decode, fol_encode, EgoDelta, HiddenState, ModelParams, PredictionSet};
use crate::scalar::Scalar;

pub type TrackId = u64;

/// Maximum number of consecutive missed frames a tracker survives.
pub const DEFAULT_MAX_AGE: u32 = 5;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker<T = f64> {
    pub id: TrackId,
    /// Current box: the observation, or the carried-over prediction when missed.
    pub x_t: BBox<T>,
    pub y_hat: PredictionSet<T>,
    /// Frames since the last observation.
    pub age: u32,
    pub hidden: HiddenState<T>,
    /// Most recent prediction sets, newest first, at most `horizon` of them.
    pub history: VecDeque<PredictionSet<T>>,
}

impl<T: Scalar> Tracker<T> {
    /// Every stored prediction that targets `frame`, newest first.
    pub fn predictions_for(&self, frame: usize) -> Vec<BBox<T>> {
        self.history
            .iter()
            .filter_map(|p| p.box_for(frame).copied())
            .collect()
    }

    /// The one-step-ahead prediction made on the previous frame.
    pub fn next_box(&self) -> &BBox<T> {
        &self.y_hat.boxes[0]
    }
}

#[derive(Debug, Clone)]
pub struct TrackerRegistry<T = f64> {
    trackers: BTreeMap<TrackId, Tracker<T>>,
    max_age: u32,
    next_id: TrackId,
}

/// Outcome of matching detections against trackers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    /// `(tracker id, detection index)`
    pub matches: Vec<(TrackId, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_trackers: Vec<TrackId>,
}

impl<T: Scalar> TrackerRegistry<T> {
    pub fn new(max_age: u32) -> Result<Self> {
        if max_age == 0 {
            return Err(contract("max tracker age must be positive"));
        }
        Ok(Self {
            trackers: BTreeMap::new(),
            max_age,
            next_id: 0,
        })
    }

    pub fn max_age(&self) -> u32 {
        self.max_age
    }

    pub fn len(&self) -> usize {
        self.trackers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trackers.is_empty()
    }

    pub fn get(&self, id: TrackId) -> Option<&Tracker<T>> {
        self.trackers.get(&id)
    }

    #[cfg(test)]
    pub(crate) fn tracker_mut(&mut self, id: TrackId) -> Option<&mut Tracker<T>> {
        self.trackers.get_mut(&id)
    }

    pub fn contains(&self, id: TrackId) -> bool {
        self.trackers.contains_key(&id)
    }

    /// Trackers in ascending id order.
    pub fn trackers(&self) -> impl Iterator<Item = &Tracker<T>> {
        self.trackers.values()
    }

    pub fn ids(&self) -> Vec<TrackId> {
        self.trackers.keys().copied().collect()
    }

    /// Reserves a fresh id, never handed out before by this registry.
    pub fn allocate_id(&mut self) -> TrackId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn note_id(&mut self, id: TrackId) {
        self.next_id = self.next_id.max(id + 1);
    }
}

/// Greedy matching by descending IoU between detections and each tracker's
/// prediction for the current frame. Pairs below `iou_threshold` stay
/// unmatched; ties go to the lower tracker id, then the lower detection index.
pub fn associate<T: Scalar>(
    detections: &[BBox<T>],
    registry: &TrackerRegistry<T>,
    iou_threshold: f64,
) -> Result<Association> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(contract(format!(
            "iou threshold must lie in (0, 1), got {iou_threshold}"
        )));
    }
    let mut pairs = Vec::new();
    for tr in registry.trackers() {
        for (d, det) in detections.iter().enumerate() {
            let v = iou(tr.next_box(), det).as_f64();
            if v >= iou_threshold {
                pairs.push((v, tr.id, d));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = BTreeSet::new();
    let mut used_d = BTreeSet::new();
    let mut matches = Vec::new();
    for (_, t, d) in pairs {
        if used_t.contains(&t) || used_d.contains(&d) {
            continue;
        }
        used_t.insert(t);
        used_d.insert(d);
        matches.push((t, d));
    }
    matches.sort();
    Ok(Association {
        matches,
        unmatched_detections: (0..detections.len())
            .filter(|d| !used_d.contains(d))
            .collect(),
        unmatched_trackers: registry
            .ids()
            .into_iter()
            .filter(|t| !used_t.contains(t))
            .collect(),
    })
}

/// What happened to each tracker during one [`fol_track_step`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepReport {
    pub born: Vec<TrackId>,
    pub updated: Vec<TrackId>,
    pub missed: Vec<TrackId>,
    pub removed: Vec<TrackId>,
}

/// Advances every tracker to `frame`.
///
/// Observed ids are updated with their observation (or born with a zero
/// state). Trackers without an observation age by one; past `max_age` they
/// are dropped, otherwise their previous one-step prediction stands in for
/// the observation and the motion feature is pooled from that box. Every
/// surviving tracker then predicts the next `horizon` boxes.
pub fn fol_track_step<T: Scalar>(
    registry: &mut TrackerRegistry<T>,
    params: &ModelParams<T>,
    observed: &BTreeMap<TrackId, (BBox<T>, ObjectFeature<T>)>,
    flow: &FlowField<T>,
    ego_future: &[EgoDelta<T>],
    frame: usize,
) -> Result<StepReport> {
    let hz = params.config.horizon;
    if ego_future.len() != hz {
        return Err(contract(format!(
            "ego forecast has {} steps, horizon is {hz}",
            ego_future.len()
        )));
    }
    let dims = flow.dims();
    let mut report = StepReport::default();

    for (&id, (bbox, feat)) in observed {
        if !bbox.is_valid() {
            return Err(contract(format!(
                "observation for track {id} is not a valid box"
            )));
        }
        let prior = registry.trackers.get(&id).map(|t| t.hidden.clone());
        let is_new = prior.is_none();
        let prior = prior.unwrap_or_else(|| HiddenState::new(params.config.h_loc));
        let hidden = fol_encode(params, &prior, bbox, feat, dims);
        let y_hat = fol_decode(params, &hidden, bbox, ego_future, dims, frame);
        if is_new {
            registry.note_id(id);
            registry.trackers.insert(
                id,
                Tracker {
                    id,
                    x_t: *bbox,
                    y_hat: y_hat.clone(),
                    age: 0,
                    hidden,
                    history: VecDeque::new(),
                },
            );
            report.born.push(id);
        } else {
            let tr = registry.trackers.get_mut(&id).expect("tracker present");
            tr.x_t = *bbox;
            tr.hidden = hidden;
            tr.y_hat = y_hat.clone();
            tr.age = 0;
            report.updated.push(id);
        }
        push_history(
            registry.trackers.get_mut(&id).expect("tracker present"),
            y_hat,
            hz,
        );
    }

    let missed: Vec<TrackId> = registry
        .trackers
        .keys()
        .filter(|id| !observed.contains_key(id))
        .copied()
        .collect();
    for id in missed {
        let max_age = registry.max_age;
        let tr = registry.trackers.get_mut(&id).expect("tracker present");
        tr.age += 1;
        if tr.age > max_age {
            registry.trackers.remove(&id);
            report.removed.push(id);
            continue;
        }
        let x_t = *tr.next_box();
        let feat = roi_pool(flow, &x_t);
        tr.hidden = fol_encode(params, &tr.hidden, &x_t, &feat, dims);
        tr.x_t = x_t;
        tr.y_hat = fol_decode(params, &tr.hidden, &x_t, ego_future, dims, frame);
        let y = tr.y_hat.clone();
        push_history(tr, y, hz);
        report.missed.push(id);
    }
    Ok(report)
}

fn push_history<T>(tr: &mut Tracker<T>, set: PredictionSet<T>, cap: usize) {
    tr.history.push_front(set);
    tr.history.truncate(cap);
}
