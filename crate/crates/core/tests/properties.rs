use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tad_core::evaluation::{frame_labels, roc_auc, AnomalyAnnotation};
use tad_core::features::{roi_pool, FlowField, ObjectFeature};
use tad_core::geometry::{component_std, iou, mask_iou, rasterize, BBox, FrameDims};
use tad_core::model::{EgoDelta, ModelConfig, ModelParams};
use tad_core::scoring::{
    normalize, score_bbox, score_pred_consistency, BboxMode, FrameScore, ScoreSeries, StdMode,
};
use tad_core::tracking::{fol_track_step, TrackId, TrackerRegistry};

fn dims(w: u32, h: u32) -> FrameDims {
    FrameDims::new(w, h).unwrap()
}

fn any_box() -> impl Strategy<Value = BBox> {
    (-50.0..600.0, -50.0..400.0, 1.0..300.0, 1.0..200.0)
        .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h).unwrap())
}

/// Box fully inside a `side x side` frame with sides of at least 32 px.
fn in_frame_box(side: f64) -> impl Strategy<Value = BBox> {
    (32.0..side / 2.0, 32.0..side / 2.0, 0.0..1.0, 0.0..1.0).prop_map(move |(w, h, u, v)| {
        let cx = w / 2.0 + u * (side - w);
        let cy = h / 2.0 + v * (side - h);
        BBox::new(cx, cy, w, h).unwrap()
    })
}

/// Pairwise rank statistic: fraction of (positive, negative) pairs ordered
/// correctly, ties counting one half.
fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut sum, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            sum += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    sum / pairs
}

fn scored_fixture() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        // coarse grid of values so ties are common
        let scores = prop::collection::vec((0u32..12).prop_map(|k| k as f64 * 0.25), n);
        let labels = prop::collection::vec(any::<bool>(), n).prop_filter("both classes", |l| {
            l.iter().any(|x| *x) && l.iter().any(|x| !*x)
        });
        (scores, labels)
    })
}

fn series(raw: &[f64]) -> ScoreSeries {
    ScoreSeries::new(
        raw.iter()
            .enumerate()
            .map(|(frame, &raw)| FrameScore {
                frame,
                raw,
                per_object: None,
            })
            .collect(),
    )
    .unwrap()
}

/// Small model with randomized output heads so predictions move.
fn lively_params(seed: u64, frame: FrameDims) -> ModelParams<f64> {
    let cfg = ModelConfig {
        h_loc: 8,
        h_ego: 4,
        horizon: 3,
        dims: frame,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(cfg, &mut rng);
    for v in p.head.w.iter_mut() {
        *v = rng.random_range(-0.2..0.2);
    }
    p
}

/// Runs `frames` tracking steps over objects moving at constant velocity,
/// each observed according to `seen[f][k]`, and returns the registry state
/// after every step.
fn run_schedule(
    params: &ModelParams<f64>,
    max_age: u32,
    starts: &[(f64, f64)],
    seen: &[Vec<bool>],
    scale: f64,
) -> Vec<TrackerRegistry<f64>> {
    let frame = params.config.dims;
    let flow = FlowField::zeros(frame, dims(2, 2));
    let ego = vec![EgoDelta::zero(); params.config.horizon];
    let mut reg = TrackerRegistry::new(max_age).unwrap();
    let mut out = Vec::new();
    for (f, row) in seen.iter().enumerate() {
        let observed: BTreeMap<TrackId, (BBox, ObjectFeature)> = starts
            .iter()
            .enumerate()
            .filter(|(k, _)| row[*k])
            .map(|(k, &(x, y))| {
                let b = BBox::new(
                    (x + 3.0 * f as f64) * scale,
                    (y + f as f64) * scale,
                    40.0 * scale,
                    30.0 * scale,
                )
                .unwrap();
                (k as TrackId, (b, ObjectFeature::zeros()))
            })
            .collect();
        fol_track_step(&mut reg, params, &observed, &flow, &ego, f).unwrap();
        out.push(reg.clone());
    }
    out
}

fn schedule() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<Vec<bool>>, u32)> {
    (1usize..4, 4usize..16, 1u32..4).prop_flat_map(|(n, len, age)| {
        (
            prop::collection::vec((60.0..500.0, 60.0..300.0), n),
            prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.6), n), len),
            Just(age),
        )
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in any_box(), b in any_box()) {
        let (x, y) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        if x == 1.0 {
            prop_assert!((a.cx - b.cx).abs() < 1e-9 && (a.w - b.w).abs() < 1e-9);
        }
    }

    #[test]
    fn rasterized_iou_tracks_analytic_iou(a in in_frame_box(512.0), b in in_frame_box(512.0)) {
        let d = dims(512, 512);
        let m = mask_iou(&rasterize(&[a], d), &rasterize(&[b], d)).unwrap();
        prop_assert!((m - iou(&a, &b)).abs() <= 0.05, "{} vs {}", m, iou(&a, &b));
    }

    #[test]
    fn std_ignores_common_translation(
        boxes in prop::collection::vec(any_box(), 2..6),
        dx in -500.0..500.0f64,
        dy in -500.0..500.0f64,
    ) {
        let s = component_std(&boxes).unwrap();
        let moved: Vec<BBox> = boxes.iter().map(|b| b.translate(dx, dy)).collect();
        let t = component_std(&moved).unwrap();
        for k in 0..4 {
            prop_assert!((s[k] - t[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_flow_pools_to_constant(b in any_box(), du in -20.0..20.0f64, dv in -20.0..20.0f64) {
        let d = dims(640, 360);
        let f = FlowField::from_fn(d, dims(17, 9), |_, _| (du, dv));
        let feat = roi_pool(&f, &b);
        for r in 0..5 {
            for c in 0..5 {
                let (x, y) = feat.bin(r, c);
                prop_assert!((x - du).abs() < 1e-9 && (y - dv).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_flow_is_exact_at_bin_centres(
        b in in_frame_box(256.0),
        coef in prop::array::uniform6(-0.5..0.5f64),
        coarse in any::<bool>(),
    ) {
        let d = dims(256, 256);
        let grid = if coarse { dims(9, 5) } else { d };
        let field = |x: f64, y: f64| (coef[0] + coef[1] * x + coef[2] * y, coef[3] + coef[4] * x + coef[5] * y);
        let f = FlowField::from_fn(d, grid, field);
        let feat = roi_pool(&f, &b);
        for r in 0..5 {
            let y = b.y1() + (r as f64 + 0.5) * b.h / 5.0;
            for c in 0..5 {
                let x = b.x1() + (c as f64 + 0.5) * b.w / 5.0;
                let want = field(x, y);
                let got = feat.bin(r, c);
                prop_assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn auc_equals_rank_statistic((scores, labels) in scored_fixture()) {
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        prop_assert!((auc - mann_whitney(&scores, &labels)).abs() < 1e-9);
    }

    #[test]
    fn auc_ignores_monotone_transforms((scores, labels) in scored_fixture(), k in 0.1..5.0f64, c in -3.0..3.0f64) {
        let base = roc_auc(&scores, &labels).unwrap().auc;
        let warped: Vec<f64> = scores.iter().map(|s| (k * s + c).exp()).collect();
        prop_assert!((roc_auc(&warped, &labels).unwrap().auc - base).abs() < 1e-12);
    }

    #[test]
    fn labels_count_window_frames(start in 0usize..40, span in 0usize..20, extra in 1usize..10) {
        let len = start + span + extra;
        let ann = AnomalyAnnotation { start, end: start + span, ego_involved: false };
        let labels = frame_labels(len, &[ann, ann]).unwrap();
        prop_assert_eq!(labels.iter().filter(|l| **l).count(), span + 1);
    }

    #[test]
    fn normalization_keeps_ranks((raw, labels) in scored_fixture()) {
        let s = normalize(series(&raw)).unwrap();
        for i in 0..raw.len() {
            prop_assert!((0.0..=1.0).contains(&s.normalized[i]));
            for j in 0..raw.len() {
                prop_assert_eq!(raw[i].total_cmp(&raw[j]), s.normalized[i].total_cmp(&s.normalized[j]));
            }
        }
        let a = roc_auc(&raw, &labels).unwrap().auc;
        let b = roc_auc(&s.normalized, &labels).unwrap().auc;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tracker_state_follows_the_schedule((starts, seen, max_age) in schedule(), seed in 0u64..50) {
        let frame = dims(640, 360);
        let p = lively_params(seed, frame);
        let hz = p.config.horizon;
        let states = run_schedule(&p, max_age, &starts, &seen, 1.0);
        let mut prev: Option<&TrackerRegistry<f64>> = None;
        for (f, reg) in states.iter().enumerate() {
            for tr in reg.trackers() {
                prop_assert!(tr.history.len() <= hz);
                for (i, set) in tr.history.iter().enumerate() {
                    prop_assert_eq!(set.made_at + i, f);
                }
                let was = prev.and_then(|r| r.get(tr.id));
                if seen[f][tr.id as usize] {
                    prop_assert_eq!(tr.age, 0);
                    if was.is_none() {
                        prop_assert_eq!(tr.history.len(), 1);
                    }
                } else {
                    let was = was.expect("missed tracker existed before");
                    prop_assert_eq!(tr.age, was.age + 1);
                    prop_assert!(tr.age <= max_age);
                    prop_assert_eq!(tr.x_t, was.y_hat.boxes[0]);
                }
            }
            if let Some(r) = prev {
                for old in r.trackers() {
                    if !reg.contains(old.id) {
                        prop_assert!(!seen[f][old.id as usize] && old.age + 1 > max_age);
                    }
                }
            }
            prev = Some(reg);
        }
    }

    #[test]
    fn score_ranges_and_orderings((starts, seen, max_age) in schedule(), seed in 0u64..50) {
        let frame = dims(640, 360);
        let p = lively_params(seed, frame);
        let states = run_schedule(&p, max_age, &starts, &seen, 1.0);
        for f in 1..states.len() {
            let reg = &states[f - 1];
            let obs: BTreeMap<TrackId, BBox> = reg
                .trackers()
                .filter(|t| seen[f][t.id as usize])
                .map(|t| (t.id, t.x_t.translate(2.0, -1.0)))
                .collect();
            let avg = score_bbox(reg, &obs, f, BboxMode::Average).raw;
            let min = score_bbox(reg, &obs, f, BboxMode::Min).raw;
            prop_assert!((0.0..=1.0).contains(&avg) && (0.0..=1.0).contains(&min));
            prop_assert!(min >= avg - 1e-12);
            for norm in [None, Some(frame)] {
                let a = score_pred_consistency(reg, f, StdMode::Average, norm).raw;
                let m = score_pred_consistency(reg, f, StdMode::Max, norm).raw;
                prop_assert!(a >= 0.0 && m >= a - 1e-12);
            }
        }
    }

    #[test]
    // sizes are held fixed so the one-pixel clamp cannot break the invariance
    fn consistency_is_resolution_invariant((starts, seen, max_age) in schedule(), seed in 0u64..50, k in 2u32..=32) {
        // multiples of 1/8 keep 640x360 frames integral
        let s = k as f64 / 8.0;
        let small = dims(640, 360);
        let big = dims(80 * k, 45 * k);
        let mut p = lively_params(seed, small);
        let h = p.config.h_loc;
        p.head.w[2 * h..].fill(0.0);
        let mut q = p.clone();
        q.config.dims = big;
        let a = run_schedule(&p, max_age, &starts, &seen, 1.0);
        let b = run_schedule(&q, max_age, &starts, &seen, s);
        for f in 1..a.len() {
            for mode in [StdMode::Average, StdMode::Max] {
                let x = score_pred_consistency(&a[f - 1], f, mode, Some(small)).raw;
                let y = score_pred_consistency(&b[f - 1], f, mode, Some(big)).raw;
                prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
            }
        }
    }
}

/// The consistency score needs no detection on the scored frame.
#[test]
fn consistency_scores_frames_without_detections() {
    let frame = dims(640, 360);
    let p = lively_params(3, frame);
    let seen = vec![vec![true], vec![true], vec![true], vec![false], vec![false]];
    let states = run_schedule(&p, 5, &[(100.0, 100.0)], &seen, 1.0);
    let reg = &states[3];
    let obs = BTreeMap::new();
    assert_eq!(score_bbox(reg, &obs, 4, BboxMode::Average).raw, 0.0);
    let s = score_pred_consistency(reg, 4, StdMode::Max, Some(frame));
    assert!(s.raw > 0.0 && s.per_object.unwrap().contains_key(&0));
}
