//! Deterministic synthetic driving scenes with ground-truth flow, ego
//! odometry and injected anomalies.
//!
//! Objects move in the image plane with near-constant velocity (bounded random
//! acceleration, optional gentle turning and growth). Ego-motion acts as a
//! global image transform: yaw translates the image horizontally and forward
//! motion expands it about a fixed focus point. An object's image motion is
//! its own velocity plus the ego component at its center.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::evaluation::AnomalyAnnotation;
use crate::features::{FlowField, FlowPatch};
use crate::geometry::{BBox, FrameDims};
use crate::model::EgoPose;
use crate::tracking::TrackId;

/// Yaw-to-image translation, pixels per radian per unit frame width.
const FOCAL_PER_WIDTH: f64 = 0.8;
/// Image expansion per frame per metre of forward motion.
const EXPANSION_PER_METRE: f64 = 0.008;
/// Vertical position of the expansion focus, as a fraction of frame height.
const FOCUS_Y: f64 = 0.45;
/// Per-frame bound on changes of ego speed (m/frame) and yaw rate (rad/frame).
const EGO_ACCEL: f64 = 0.02;
const EGO_YAW_ACCEL: f64 = 0.0005;
/// Minimum visible fraction of a box for the detector to report it.
const DETECTABLE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    SuddenStop,
    CrossingCollision,
    ErraticSwerve,
    EgoCrash,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [
        AnomalyKind::SuddenStop,
        AnomalyKind::CrossingCollision,
        AnomalyKind::ErraticSwerve,
        AnomalyKind::EgoCrash,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnomalyKind::SuddenStop => "sudden_stop",
            AnomalyKind::CrossingCollision => "crossing_collision",
            AnomalyKind::ErraticSwerve => "erratic_swerve",
            AnomalyKind::EgoCrash => "ego_crash",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| contract(format!("unknown anomaly kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub onset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frame_rate: f64,
    pub dims: FrameDims,
    /// Frames per video.
    pub length: usize,
    /// Prediction horizon the video must accommodate.
    pub horizon: usize,
    /// Lattice resolution of the stored background flow.
    pub flow_grid: FrameDims,
    /// Inclusive range of objects present at the first frame.
    pub objects: (usize, usize),
    /// Probability per frame that a new object enters at a side border.
    pub spawn_rate: f64,
    /// Range of horizontal speed magnitude, pixels/frame.
    pub speed: (f64, f64),
    /// Maximum vertical speed magnitude, pixels/frame.
    pub lateral_speed: f64,
    /// Maximum turn rate of curved paths, radians/frame.
    pub turn_rate: f64,
    /// Maximum relative size change per frame from an object's own motion.
    pub growth: f64,
    /// Per-component bound of random acceleration, pixels/frame^2.
    pub accel_bound: f64,
    /// Range of ego forward speed, metres/frame.
    pub ego_speed: (f64, f64),
    /// Maximum ego yaw rate, radians/frame.
    pub ego_yaw_rate: f64,
    /// Standard deviation of detector jitter on every box parameter, pixels.
    pub jitter: f64,
    /// Probability that a detectable object is not reported in a frame.
    pub dropout: f64,
    pub anomaly: Option<AnomalySpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frame_rate: 10.0,
            dims: FrameDims::default(),
            length: 60,
            horizon: 5,
            flow_grid: FrameDims {
                width: 64,
                height: 36,
            },
            objects: (3, 6),
            spawn_rate: 0.04,
            speed: (2.0, 8.0),
            lateral_speed: 0.4,
            turn_rate: 0.005,
            growth: 0.002,
            accel_bound: 0.05,
            ego_speed: (0.3, 1.2),
            ego_yaw_rate: 0.004,
            jitter: 0.5,
            dropout: 0.02,
            anomaly: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.spawn_rate) || !prob(self.dropout) {
            return Err(contract("probabilities must lie in [0, 1]"));
        }
        if self.horizon == 0 || self.length < self.horizon + 2 {
            return Err(contract(format!(
                "video length {} must be at least horizon + 2",
                self.length
            )));
        }
        if self.objects.0 > self.objects.1
            || self.speed.0 > self.speed.1
            || self.ego_speed.0 > self.ego_speed.1
        {
            return Err(contract("ranges must be ordered (min, max)"));
        }
        let non_neg = [
            self.speed.0,
            self.lateral_speed,
            self.turn_rate,
            self.growth,
            self.accel_bound,
            self.ego_speed.0,
            self.ego_yaw_rate,
            self.jitter,
        ];
        if non_neg.iter().any(|v| !v.is_finite() || *v < 0.0)
            || !self.frame_rate.is_finite()
            || self.frame_rate <= 0.0
        {
            return Err(contract(
                "speeds, rates and noise levels must be finite and non-negative",
            ));
        }
        if self.flow_grid.width < 2 || self.flow_grid.height < 2 {
            return Err(contract("flow grid needs at least 2x2 nodes"));
        }
        if let Some(a) = self.anomaly {
            check_onset(a.onset, self.length, self.horizon)?;
        }
        Ok(())
    }
}

fn check_onset(onset: usize, length: usize, horizon: usize) -> Result<()> {
    if onset < horizon || onset + horizon >= length {
        return Err(contract(format!(
            "onset {onset} must leave {horizon} frames before and after in a {length}-frame video"
        )));
    }
    Ok(())
}

/// A box together with the ground-truth identity of its object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: TrackId,
    #[serde(flatten)]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrame {
    pub frame: usize,
    /// Detector output: jittered, possibly missing boxes.
    pub detections: Vec<Detection>,
    /// Exact boxes of every object at least partly in view.
    pub truth: Vec<Detection>,
    pub ego: EgoPose,
    /// Image motion from the previous frame to this one.
    pub flow: FlowField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub dims: FrameDims,
    pub frame_rate: f64,
    pub frames: Vec<VideoFrame>,
    pub annotation: Option<AnomalyAnnotation>,
    /// Generator settings, when the video came from [`generate_normal`].
    pub scenario: Option<ScenarioConfig>,
}

impl SyntheticVideo {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// True boxes of every object, keyed by id then frame.
    pub fn truth_tracks(&self) -> BTreeMap<TrackId, BTreeMap<usize, BBox>> {
        let mut out: BTreeMap<TrackId, BTreeMap<usize, BBox>> = BTreeMap::new();
        for f in &self.frames {
            for d in &f.truth {
                out.entry(d.id).or_default().insert(f.frame, d.bbox);
            }
        }
        out
    }

    /// Detected boxes of every object, keyed by id then frame.
    pub fn detection_tracks(&self) -> BTreeMap<TrackId, BTreeMap<usize, BBox>> {
        let mut out: BTreeMap<TrackId, BTreeMap<usize, BBox>> = BTreeMap::new();
        for f in &self.frames {
            for d in &f.detections {
                out.entry(d.id).or_default().insert(f.frame, d.bbox);
            }
        }
        out
    }
}

/// Generates an anomaly-free video.
pub fn generate_normal(config: &ScenarioConfig) -> Result<SyntheticVideo> {
    if config.anomaly.is_some() {
        return Err(contract(
            "generate_normal takes a config without an anomaly",
        ));
    }
    config.validate()?;
    let (video, _) = simulate(config, &Plan::None)?;
    Ok(video)
}

/// Re-generates `video` with an anomaly of `kind` starting at frame `onset`.
///
/// Everything not involved in the anomaly is unchanged. The participants are
/// picked from the normal video at the frame before onset.
pub fn inject_anomaly(
    video: &SyntheticVideo,
    kind: AnomalyKind,
    onset: usize,
) -> Result<SyntheticVideo> {
    let base = video
        .scenario
        .as_ref()
        .ok_or_else(|| contract("video carries no scenario config to regenerate from"))?;
    check_onset(onset, base.length, base.horizon)?;
    let mut normal = base.clone();
    normal.anomaly = None;
    let (_, trace) = simulate(&normal, &Plan::None)?;
    let plan = plan_anomaly(video, &trace, base, kind, onset)?;
    let mut config = base.clone();
    config.anomaly = Some(AnomalySpec { kind, onset });
    let (mut out, trace) = simulate(&config, &plan)?;
    let recovery = match plan {
        Plan::Stop { onset, .. } => Some(onset + 1),
        Plan::Swerve { onset, frames, .. } | Plan::Collide { onset, frames, .. } => {
            Some(onset + frames)
        }
        _ => trace.recovery,
    };
    let end = recovery
        .unwrap_or(config.length - 1)
        .min(config.length - 1)
        .max(onset);
    out.annotation = Some(AnomalyAnnotation {
        start: onset,
        end,
        ego_involved: kind == AnomalyKind::EgoCrash,
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Plan {
    None,
    Stop {
        id: TrackId,
        onset: usize,
    },
    /// `a` and `b` accelerate from their positions at `onset - 1` to meet
    /// near their midpoint after `frames` steps, then stop.
    Collide {
        a: TrackId,
        b: TrackId,
        onset: usize,
        frames: usize,
        shift_a: (f64, f64),
        shift_b: (f64, f64),
    },
    /// Lateral velocity alternating in sign every frame on top of a fixed
    /// `heading` velocity.
    Swerve {
        id: TrackId,
        onset: usize,
        frames: usize,
        amplitude: f64,
        heading: (f64, f64),
    },
    EgoCrash {
        onset: usize,
        jerk: f64,
    },
}

fn fully_inside(b: &BBox, dims: FrameDims) -> bool {
    b.x1() >= 0.0 && b.y1() >= 0.0 && b.x2() <= dims.width as f64 && b.y2() <= dims.height as f64
}

fn plan_anomaly(
    video: &SyntheticVideo,
    trace: &Trace,
    config: &ScenarioConfig,
    kind: AnomalyKind,
    onset: usize,
) -> Result<Plan> {
    let prev = &video.frames[onset - 1];
    let candidates: Vec<(TrackId, BBox, f64)> = prev
        .truth
        .iter()
        .filter(|d| fully_inside(&d.bbox, config.dims))
        .map(|d| {
            let (vx, vy) = trace.own_velocity[onset - 1]
                .get(&d.id)
                .copied()
                .unwrap_or((0.0, 0.0));
            (d.id, d.bbox, vx.hypot(vy))
        })
        .collect();
    let fastest = || {
        candidates
            .iter()
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
            .map(|c| c.0)
            .ok_or_else(|| {
                Error::Data(format!(
                    "no fully visible object at frame {} to act on",
                    onset - 1
                ))
            })
    };
    Ok(match kind {
        AnomalyKind::SuddenStop => Plan::Stop {
            id: fastest()?,
            onset,
        },
        AnomalyKind::ErraticSwerve => {
            let id = fastest()?;
            let heading = trace.own_velocity[onset - 1]
                .get(&id)
                .copied()
                .unwrap_or((0.0, 0.0));
            Plan::Swerve {
                id,
                onset,
                frames: 15,
                amplitude: 4.0,
                heading,
            }
        }
        AnomalyKind::EgoCrash => {
            let mut rng = stream(config.seed, STREAM_ANOMALY);
            let jerk = if rng.random::<bool>() { 0.08 } else { -0.08 };
            Plan::EgoCrash { onset, jerk }
        }
        AnomalyKind::CrossingCollision => {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..candidates.len() {
                for j in i + 1..candidates.len() {
                    let (a, b) = (&candidates[i].1, &candidates[j].1);
                    let d = (a.cx - b.cx).hypot(a.cy - b.cy);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
            let (dist, i, j) = best.ok_or_else(|| {
                Error::Data(format!(
                    "fewer than two fully visible objects at frame {}",
                    onset - 1
                ))
            })?;
            let (a, b) = (&candidates[i], &candidates[j]);
            let mid = ((a.1.cx + b.1.cx) / 2.0, (a.1.cy + b.1.cy) / 2.0);
            let toward = |c: &BBox| (0.8 * (mid.0 - c.cx), 0.8 * (mid.1 - c.cy));
            let frames = ((0.8 * dist / 12.0).round() as usize).clamp(6, 12);
            Plan::Collide {
                a: a.0,
                b: b.0,
                onset,
                frames,
                shift_a: toward(&a.1),
                shift_b: toward(&b.1),
            }
        }
    })
}

const STREAM_SCENE: u64 = 0;
const STREAM_EGO: u64 = 1;
const STREAM_ANOMALY: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn motion_stream(seed: u64, id: TrackId) -> ChaCha8Rng {
    stream(seed, 16 + 2 * id)
}

fn detection_stream(seed: u64, id: TrackId) -> ChaCha8Rng {
    stream(seed, 17 + 2 * id)
}

fn sym(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    // always consume one draw so streams stay aligned when a bound is zero
    let u: f64 = rng.random();
    (2.0 * u - 1.0) * bound
}

fn in_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Normal,
    /// Own motion halted; still carried by ego-motion.
    Parked,
}

#[derive(Debug, Clone)]
struct Object {
    id: TrackId,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
    turn: f64,
    growth: f64,
    mode: Mode,
    /// Motion from the previous frame: center displacement and per-axis scale.
    last: (f64, f64, f64, f64),
    /// Own velocity over the step from the previous frame.
    own: (f64, f64),
    motion: ChaCha8Rng,
    detect: ChaCha8Rng,
    alive: bool,
}

impl Object {
    fn bbox(&self) -> BBox {
        BBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Birth {
    frame: usize,
    /// `None` for objects placed inside the first frame, else the entry side
    /// (`true` = left border).
    from_left: Option<bool>,
}

#[derive(Debug, Clone, Copy)]
struct EgoMotion {
    speed: f64,
    yaw_rate: f64,
}

struct EgoImage {
    tx: f64,
    s: f64,
    fx: f64,
    fy: f64,
}

impl EgoImage {
    fn new(m: EgoMotion, dims: FrameDims) -> Self {
        Self {
            tx: -FOCAL_PER_WIDTH * dims.width as f64 * m.yaw_rate,
            s: EXPANSION_PER_METRE * m.speed,
            fx: dims.width as f64 / 2.0,
            fy: FOCUS_Y * dims.height as f64,
        }
    }

    /// Displacement over one frame of a static scene point at `(x, y)`.
    fn flow(&self, x: f64, y: f64) -> (f64, f64) {
        (self.tx + self.s * (x - self.fx), self.s * (y - self.fy))
    }
}

fn births(config: &ScenarioConfig) -> Vec<Birth> {
    let mut rng = stream(config.seed, STREAM_SCENE);
    let span = config.objects.1 - config.objects.0 + 1;
    let n0 = config.objects.0 + rng.random_range(0..span);
    let mut out: Vec<Birth> = (0..n0)
        .map(|_| Birth {
            frame: 0,
            from_left: None,
        })
        .collect();
    for frame in 1..config.length {
        let spawn = rng.random::<f64>() < config.spawn_rate;
        let left = rng.random::<bool>();
        if spawn {
            out.push(Birth {
                frame,
                from_left: Some(left),
            });
        }
    }
    out
}

fn spawn(config: &ScenarioConfig, id: TrackId, birth: Birth, ego: &EgoImage) -> Object {
    let (w_f, h_f) = (config.dims.width as f64, config.dims.height as f64);
    let mut motion = motion_stream(config.seed, id);
    let w = in_range(&mut motion, (0.04 * w_f, 0.125 * w_f));
    let h = w * in_range(&mut motion, (0.6, 1.0));
    let speed = in_range(&mut motion, config.speed);
    let vy = sym(&mut motion, config.lateral_speed);
    let curved = motion.random::<f64>() < 0.3;
    let turn = sym(&mut motion, config.turn_rate);
    let growth = sym(&mut motion, config.growth);
    let rightward = motion.random::<bool>();
    let u = motion.random::<f64>();
    let v = motion.random::<f64>();
    let (cx, cy, rightward) = match birth.from_left {
        None => (w_f * (0.1 + 0.8 * u), h_f * (0.3 + 0.6 * v), rightward),
        Some(true) => (-w / 2.0 + 1.0, h_f * (0.35 + 0.5 * v), true),
        Some(false) => (w_f + w / 2.0 - 1.0, h_f * (0.35 + 0.5 * v), false),
    };
    let vx = if rightward { speed } else { -speed };
    let (ex, ey) = ego.flow(cx, cy);
    let scale = 1.0 + ego.s + growth;
    Object {
        id,
        cx,
        cy,
        w,
        h,
        vx,
        vy,
        turn: if curved { turn } else { 0.0 },
        growth,
        mode: Mode::Normal,
        last: (vx + ex, vy + ey, scale, scale),
        own: (vx, vy),
        motion,
        detect: detection_stream(config.seed, id),
        alive: true,
    }
}

fn flow_frame(config: &ScenarioConfig, ego: &EgoImage, objects: &[Object]) -> Result<FlowField> {
    let background = FlowField::from_fn(config.dims, config.flow_grid, |x, y| ego.flow(x, y));
    // nearer objects (lower bottom edge) are painted last, on top
    let mut visible: Vec<&Object> = objects
        .iter()
        .filter(|o| o.alive && o.bbox().visible_area(config.dims) > 0.0)
        .collect();
    visible.sort_by(|a, b| {
        a.bbox()
            .y2()
            .total_cmp(&b.bbox().y2())
            .then(a.id.cmp(&b.id))
    });
    let patches = visible
        .iter()
        .map(|o| {
            let (dx, dy, sx, sy) = o.last;
            FlowPatch {
                region: o.bbox(),
                du: dx,
                dv: dy,
                rx: (sx - 1.0) / sx,
                ry: (sy - 1.0) / sy,
            }
        })
        .collect();
    background.with_patches(patches)
}

fn observe(config: &ScenarioConfig, objects: &mut [Object]) -> (Vec<Detection>, Vec<Detection>) {
    let noise = Normal::new(0.0, config.jitter.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut detections = Vec::new();
    let mut truth = Vec::new();
    for o in objects.iter_mut().filter(|o| o.alive) {
        let b = o.bbox();
        let visible = b.visible_area(config.dims);
        let drop = o.detect.random::<f64>() < config.dropout;
        let j: [f64; 4] = std::array::from_fn(|_| noise.sample(&mut o.detect));
        if visible <= 0.0 {
            continue;
        }
        truth.push(Detection { id: o.id, bbox: b });
        if visible / b.area() >= DETECTABLE_FRACTION && !drop {
            let jit = if config.jitter > 0.0 { j } else { [0.0; 4] };
            let bbox = BBox {
                cx: b.cx + jit[0],
                cy: b.cy + jit[1],
                w: (b.w + jit[2]).max(1.0),
                h: (b.h + jit[3]).max(1.0),
            };
            detections.push(Detection { id: o.id, bbox });
        }
    }
    (detections, truth)
}

/// Output of one scene run besides the video itself.
struct Trace {
    /// First frame at which the plan's participants are settled, when the
    /// simulation decides it.
    recovery: Option<usize>,
    /// Per frame, the own (non-ego) velocity of every live object over the
    /// step into that frame.
    own_velocity: Vec<BTreeMap<TrackId, (f64, f64)>>,
}

/// Runs the scene under `plan`.
fn simulate(config: &ScenarioConfig, plan: &Plan) -> Result<(SyntheticVideo, Trace)> {
    let dims = config.dims;
    let births = births(config);
    let mut ego_rng = stream(config.seed, STREAM_EGO);
    let mut ego = EgoMotion {
        speed: in_range(&mut ego_rng, config.ego_speed),
        yaw_rate: sym(&mut ego_rng, config.ego_yaw_rate),
    };
    let mut pose = EgoPose::<f64>::default();
    let mut objects: Vec<Object> = Vec::new();
    let mut frames = Vec::with_capacity(config.length);
    let mut recovery = None;
    let mut own_velocity = Vec::with_capacity(config.length);
    let mut next_birth = 0;
    let mut crash_speed = None;

    for t in 0..config.length {
        let image = EgoImage::new(ego, dims);
        while next_birth < births.len() && births[next_birth].frame == t {
            objects.push(spawn(
                config,
                next_birth as TrackId,
                births[next_birth],
                &image,
            ));
            next_birth += 1;
        }
        let flow = flow_frame(config, &image, &objects)?;
        own_velocity.push(
            objects
                .iter()
                .filter(|o| o.alive)
                .map(|o| (o.id, o.own))
                .collect(),
        );
        let (detections, truth) = observe(config, &mut objects);
        frames.push(VideoFrame {
            frame: t,
            detections,
            truth,
            ego: pose,
            flow,
        });
        if t + 1 == config.length {
            break;
        }

        // ego motion over the step t -> t+1
        let dv = sym(&mut ego_rng, EGO_ACCEL);
        let dw = sym(&mut ego_rng, EGO_YAW_ACCEL);
        ego.speed = (ego.speed + dv).clamp(config.ego_speed.0, config.ego_speed.1);
        ego.yaw_rate = (ego.yaw_rate + dw).clamp(-config.ego_yaw_rate, config.ego_yaw_rate);
        if let Plan::EgoCrash { onset, jerk } = *plan {
            let next = t + 1;
            if next == onset {
                crash_speed = Some(ego.speed);
            }
            if next >= onset {
                // decaying rocking after the impact
                let k = (next - onset) as i32;
                let w = jerk * (-0.6f64).powi(k);
                ego.yaw_rate = if w.abs() < 1e-3 { 0.0 } else { w };
            }
            if let Some(s) = crash_speed.as_mut() {
                *s = if *s * 0.7 < 0.01 { 0.0 } else { *s * 0.7 };
                ego.speed = *s;
                if *s == 0.0 && ego.yaw_rate == 0.0 && recovery.is_none() {
                    recovery = Some(next);
                }
            }
        }
        pose = EgoPose::new(
            pose.phi + ego.yaw_rate,
            pose.x + ego.speed * (pose.phi + ego.yaw_rate).sin(),
            pose.z + ego.speed * (pose.phi + ego.yaw_rate).cos(),
        );
        let image = EgoImage::new(ego, dims);

        for o in objects.iter_mut().filter(|o| o.alive) {
            let ax = sym(&mut o.motion, config.accel_bound);
            let ay = sym(&mut o.motion, config.accel_bound);
            let next = t + 1;
            let mut scale = (1.0 + image.s + o.growth, 1.0 + image.s + o.growth);
            match *plan {
                Plan::Stop { id, onset } if id == o.id && next >= onset => {
                    if next == onset {
                        o.vx *= 0.5;
                        o.vy *= 0.5;
                        o.growth *= 0.5;
                    } else {
                        o.mode = Mode::Parked;
                        recovery.get_or_insert(next);
                    }
                }
                Plan::Swerve {
                    id,
                    onset,
                    frames,
                    amplitude,
                    heading,
                } if id == o.id && next >= onset => {
                    let k = next - onset;
                    o.turn = 0.0;
                    let speed = heading.0.hypot(heading.1);
                    let (px, py) = if speed > 1e-9 {
                        (-heading.1 / speed, heading.0 / speed)
                    } else {
                        (0.0, 1.0)
                    };
                    if k < frames {
                        let a = if k % 2 == 0 { amplitude } else { -amplitude };
                        o.vx = heading.0 + a * px;
                        o.vy = heading.1 + a * py;
                    } else if k == frames {
                        (o.vx, o.vy) = heading;
                        recovery.get_or_insert(next);
                    }
                }
                Plan::Collide {
                    a,
                    b,
                    onset,
                    frames,
                    shift_a,
                    shift_b,
                } if (a == o.id || b == o.id) && next >= onset => {
                    let shift = if a == o.id { shift_a } else { shift_b };
                    let k = next - onset;
                    if k < frames {
                        // constant acceleration from rest relative to the scene:
                        // covered fraction after k + 1 steps is ((k + 1) / frames)^2
                        o.turn = 0.0;
                        o.growth = 0.0;
                        let f = (2 * k + 1) as f64 / (frames * frames) as f64;
                        o.vx = shift.0 * f;
                        o.vy = shift.1 * f;
                    } else if k == frames {
                        let mut rng = stream(config.seed, STREAM_ANOMALY);
                        let skip = if a == o.id { 0 } else { 2 };
                        let d: Vec<f64> = (0..4).map(|_| sym(&mut rng, 0.3)).collect();
                        scale.0 *= 1.0 + d[skip];
                        scale.1 *= 1.0 + d[skip + 1];
                        o.mode = Mode::Parked;
                        recovery.get_or_insert(next);
                    }
                }
                _ => {}
            }
            if o.mode == Mode::Parked {
                o.vx = 0.0;
                o.vy = 0.0;
                o.turn = 0.0;
                o.growth = 0.0;
            } else if plan_controls(plan, o.id, next) {
                // scripted velocity, no random acceleration
            } else {
                o.vx += ax;
                o.vy += ay;
                if o.turn != 0.0 {
                    let (s, c) = o.turn.sin_cos();
                    (o.vx, o.vy) = (c * o.vx - s * o.vy, s * o.vx + c * o.vy);
                }
            }
            let (ex, ey) = image.flow(o.cx, o.cy);
            let (dx, dy) = (o.vx + ex, o.vy + ey);
            o.cx += dx;
            o.cy += dy;
            o.w = (o.w * scale.0).max(1.0);
            o.h = (o.h * scale.1).max(1.0);
            o.last = (dx, dy, scale.0, scale.1);
            o.own = (o.vx, o.vy);
            if o.bbox().visible_area(dims) <= 0.0 {
                o.alive = false;
            }
        }
    }

    let trace = Trace {
        recovery,
        own_velocity,
    };
    let video = SyntheticVideo {
        video_id: format!("synth-{}", config.seed),
        dims,
        frame_rate: config.frame_rate,
        frames,
        annotation: None,
        scenario: Some(config.clone()),
    };
    Ok((video, trace))
}

/// Whether the anomaly plan dictates the velocity of object `id` on the step
/// into frame `next`.
fn plan_controls(plan: &Plan, id: TrackId, next: usize) -> bool {
    match *plan {
        Plan::Stop { id: p, onset } => p == id && next >= onset,
        Plan::Swerve {
            id: p,
            onset,
            frames,
            ..
        } => p == id && next >= onset && next < onset + frames,
        Plan::Collide { a, b, onset, .. } => (a == id || b == id) && next >= onset,
        _ => false,
    }
}

/// Which part of the packaged benchmark a video belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub split: Split,
    pub config: ScenarioConfig,
    pub anomaly: Option<AnomalySpec>,
}

impl BenchmarkEntry {
    pub fn video_id(&self) -> String {
        match self.split {
            Split::Train => format!("train-{:03}", self.config.seed),
            Split::Val => format!("val-{:03}", self.config.seed),
            Split::Test => format!("test-{:03}", self.config.seed),
        }
    }

    pub fn generate(&self) -> Result<SyntheticVideo> {
        let mut video = generate_normal(&self.config)?;
        if let Some(a) = self.anomaly {
            video = inject_anomaly(&video, a.kind, a.onset)?;
        }
        video.video_id = self.video_id();
        Ok(video)
    }
}

/// Seed base of each split in the packaged benchmark.
const TRAIN_SEEDS: u64 = 1000;
const VAL_SEEDS: u64 = 2000;
const TEST_SEEDS: u64 = 3000;

/// Test videos are this many times longer than training videos.
pub const TEST_LENGTH_FACTOR: usize = 2;

/// The packaged benchmark: 60 normal training videos, 20 normal validation
/// videos and 40 anomalous test videos (10 per kind), all from fixed seeds
/// shifted by `base.seed`.
pub fn benchmark_manifest(base: &ScenarioConfig) -> Result<Vec<BenchmarkEntry>> {
    let with_seed = |seed: u64| ScenarioConfig {
        seed: base.seed + seed,
        anomaly: None,
        ..base.clone()
    };
    let mut out = Vec::with_capacity(120);
    out.extend((0..60).map(|i| BenchmarkEntry {
        split: Split::Train,
        config: with_seed(TRAIN_SEEDS + i),
        anomaly: None,
    }));
    out.extend((0..20).map(|i| BenchmarkEntry {
        split: Split::Val,
        config: with_seed(VAL_SEEDS + i),
        anomaly: None,
    }));
    // test videos are longer so each anomaly sits among plenty of normal frames
    let test_length = base.length * TEST_LENGTH_FACTOR;
    let lo = base.horizon + test_length / 4;
    let hi = test_length - base.horizon - test_length / 4;
    if lo >= hi {
        return Err(contract(format!(
            "video length {} too short for the test split",
            base.length
        )));
    }
    let mut seed = TEST_SEEDS;
    for i in 0..40 {
        let kind = AnomalyKind::ALL[i % 4];
        // skip seeds whose scene offers no participants for this kind
        loop {
            let config = ScenarioConfig {
                length: test_length,
                ..with_seed(seed)
            };
            seed += 1;
            let onset = lo + stream(config.seed, STREAM_ANOMALY).random_range(0..hi - lo);
            let entry = BenchmarkEntry {
                split: Split::Test,
                config,
                anomaly: Some(AnomalySpec { kind, onset }),
            };
            match entry.generate() {
                Ok(_) => {
                    out.push(entry);
                    break;
                }
                Err(Error::Data(_)) if seed < TEST_SEEDS + 1000 => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Scene settings of the packaged benchmark.
pub fn benchmark_config() -> ScenarioConfig {
    ScenarioConfig {
        flow_grid: FrameDims {
            width: 16,
            height: 9,
        },
        ..ScenarioConfig::default()
    }
}
