//! Localization quality metrics and frame-level ROC / AUC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::{iou, BBox};
use crate::model::PredictionSet;
use crate::scalar::Scalar;
use crate::scoring::ScoreSeries;

/// Inclusive frame window of an anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyAnnotation {
    pub start: usize,
    pub end: usize,
    pub ego_involved: bool,
}

impl AnomalyAnnotation {
    pub fn validate(&self, video_len: usize) -> Result<()> {
        if self.start > self.end || self.end >= video_len {
            return Err(contract(format!(
                "annotation [{}, {}] does not fit a video of {video_len} frames",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

/// Per-frame anomaly labels: a frame is positive iff any annotation covers it.
pub fn frame_labels(video_len: usize, annotations: &[AnomalyAnnotation]) -> Result<Vec<bool>> {
    for a in annotations {
        a.validate(video_len)?;
    }
    Ok((0..video_len)
        .map(|f| annotations.iter().any(|a| a.contains(f)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// Score threshold of each curve point after the origin (frames with
    /// `score >= threshold` are flagged).
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// ROC curve over every distinct score (ties form a single step) and its
/// trapezoidal area.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(contract(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(contract("NaN score"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(contract(format!(
            "ROC needs both classes, got {pos} positive / {neg} negative frames"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (pos as f64, neg as f64);
    let mut thresholds = Vec::new();
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x, y) = (fp as f64 / n, tp as f64 / p);
        let (px, py) = (*fpr.last().unwrap(), *tpr.last().unwrap());
        auc += (x - px) * (y + py) * 0.5;
        thresholds.push(s);
        fpr.push(x);
        tpr.push(y);
    }
    Ok(RocResult {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

/// Frame-level ROC of one or more videos' normalized scores against their
/// annotations. Videos are concatenated into a single frame population.
pub fn frame_auc(videos: &[(&ScoreSeries, &[AnomalyAnnotation])]) -> Result<RocResult> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (series, ann) in videos {
        scores.extend_from_slice(&series.normalized);
        labels.extend(frame_labels(series.len(), ann)?);
    }
    roc_auc(&scores, &labels)
}

/// Displacement errors (pixels) and final-step IoU of a set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisplacementMetrics {
    pub fde: f64,
    pub ade: f64,
    pub fiou: f64,
    /// Prediction sets evaluated.
    pub sets: usize,
    /// Prediction sets skipped because some target frame had no truth.
    pub skipped: usize,
}

/// Running sums for [`DisplacementMetrics`] across several tracks.
#[derive(Debug, Clone, Default)]
pub struct DisplacementAccumulator {
    sum_final: f64,
    sum_all: f64,
    sum_iou: f64,
    steps: usize,
    sets: usize,
    skipped: usize,
}

impl DisplacementAccumulator {
    pub fn add<T: Scalar>(
        &mut self,
        predictions: &[PredictionSet<T>],
        truth: &BTreeMap<usize, BBox<T>>,
    ) {
        'sets: for set in predictions {
            let mut gts = Vec::with_capacity(set.horizon());
            for j in 0..set.horizon() {
                match truth.get(&(set.made_at + j + 1)) {
                    Some(b) => gts.push(*b),
                    None => {
                        self.skipped += 1;
                        continue 'sets;
                    }
                }
            }
            for (j, (p, g)) in set.boxes.iter().zip(&gts).enumerate() {
                let d = (p.cx - g.cx).hypot(p.cy - g.cy).as_f64();
                self.sum_all += d;
                self.steps += 1;
                if j + 1 == set.horizon() {
                    self.sum_final += d;
                    self.sum_iou += iou(p, g).as_f64();
                }
            }
            self.sets += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum_final += other.sum_final;
        self.sum_all += other.sum_all;
        self.sum_iou += other.sum_iou;
        self.steps += other.steps;
        self.sets += other.sets;
        self.skipped += other.skipped;
    }

    pub fn finish(&self) -> DisplacementMetrics {
        if self.sets == 0 {
            return DisplacementMetrics {
                skipped: self.skipped,
                ..Default::default()
            };
        }
        DisplacementMetrics {
            fde: self.sum_final / self.sets as f64,
            ade: self.sum_all / self.steps as f64,
            fiou: self.sum_iou / self.sets as f64,
            sets: self.sets,
            skipped: self.skipped,
        }
    }
}

/// FDE / ADE / FIOU of one track's prediction sets against its true boxes.
pub fn displacement_metrics<T: Scalar>(
    predictions: &[PredictionSet<T>],
    truth: &BTreeMap<usize, BBox<T>>,
) -> DisplacementMetrics {
    let mut acc = DisplacementAccumulator::default();
    acc.add(predictions, truth);
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::FrameScore;

    #[test]
    fn perfect_and_chance() {
        let labels = [false, true, false, true];
        let scores: Vec<f64> = labels.iter().map(|l| *l as u8 as f64).collect();
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &labels).unwrap().auc, 0.5);
    }

    #[test]
    fn small_fixture() {
        let r = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-12);
        assert!(r.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((*r.fpr.last().unwrap(), *r.tpr.last().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn one_class_is_error() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[false, false]).is_err());
        assert!(roc_auc(&[0.1], &[false, true]).is_err());
    }

    #[test]
    fn labels_union_without_double_count() {
        let ann = [
            AnomalyAnnotation {
                start: 2,
                end: 4,
                ego_involved: false,
            },
            AnomalyAnnotation {
                start: 4,
                end: 6,
                ego_involved: true,
            },
        ];
        let l = frame_labels(10, &ann).unwrap();
        assert_eq!(l.iter().filter(|x| **x).count(), 5);
        assert!(frame_labels(5, &ann).is_err());
        let bad = AnomalyAnnotation {
            start: 3,
            end: 2,
            ego_involved: false,
        };
        assert!(frame_labels(10, &[bad]).is_err());
    }

    #[test]
    fn frame_auc_over_videos() {
        let mk = |raws: &[f64]| {
            ScoreSeries::new(
                raws.iter()
                    .enumerate()
                    .map(|(i, r)| FrameScore {
                        frame: i,
                        raw: *r,
                        per_object: None,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let a = mk(&[0.0, 0.1, 5.0, 0.2]);
        let b = mk(&[1.0, 9.0, 1.0]);
        let ann_a = [AnomalyAnnotation {
            start: 2,
            end: 2,
            ego_involved: false,
        }];
        let ann_b = [AnomalyAnnotation {
            start: 1,
            end: 1,
            ego_involved: false,
        }];
        let r = frame_auc(&[(&a, &ann_a[..]), (&b, &ann_b[..])]).unwrap();
        assert_eq!(r.auc, 1.0);
    }

    #[test]
    fn displacement_cases() {
        let truth: BTreeMap<usize, BBox> = (0..10)
            .map(|f| (f, BBox::new(10.0 * f as f64, 5.0, 4.0, 4.0).unwrap()))
            .collect();
        let perfect: Vec<PredictionSet> = (0..4)
            .map(|t| PredictionSet {
                made_at: t,
                boxes: (1..=3).map(|j| truth[&(t + j)]).collect(),
            })
            .collect();
        let m = displacement_metrics(&perfect, &truth);
        assert_eq!((m.fde, m.ade, m.fiou, m.sets), (0.0, 0.0, 1.0, 4));

        let shifted: Vec<PredictionSet> = perfect
            .iter()
            .map(|p| PredictionSet {
                made_at: p.made_at,
                boxes: p.boxes.iter().map(|b| b.translate(3.0, 0.0)).collect(),
            })
            .collect();
        let m = displacement_metrics(&shifted, &truth);
        assert!((m.fde - 3.0).abs() < 1e-12 && (m.ade - 3.0).abs() < 1e-12);

        let late = vec![PredictionSet {
            made_at: 8,
            boxes: vec![truth[&9]; 3],
        }];
        let m = displacement_metrics(&late, &truth);
        assert_eq!((m.sets, m.skipped), (0, 1));
    }
}
