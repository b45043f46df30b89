//! Counting errors, occupied/unoccupied classification scores and identity
//! stability metrics.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BBox, GroundTruthRecord, IdentityGroundTruth};
use crate::series::OccupancySample;
use crate::tracking::{assign, iou};

/// IoU required for a ground-truth box and a track box to match.
pub const DEFAULT_IDENTITY_IOU: f64 = 0.5;

fn check_aligned(y: &[u32], y_hat: &[u32]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Invalid(format!("series lengths differ: {} vs {}", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::Invalid("cannot score an empty series".into()));
    }
    Ok(())
}

pub fn mae(y: &[u32], y_hat: &[u32]) -> Result<f64> {
    check_aligned(y, y_hat)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(&a, &b)| (f64::from(a) - f64::from(b)).abs()).sum();
    Ok(sum / y.len() as f64)
}

pub fn rmse(y: &[u32], y_hat: &[u32]) -> Result<f64> {
    check_aligned(y, y_hat)?;
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok((sum / y.len() as f64).sqrt())
}

pub fn exact_accuracy(y: &[u32], y_hat: &[u32]) -> Result<f64> {
    check_aligned(y, y_hat)?;
    let hits = y.iter().zip(y_hat).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

pub fn binarize(counts: &[u32]) -> Vec<bool> {
    counts.iter().map(|&c| c > 0).collect()
}

/// Binary confusion matrix with "occupied" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn new(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        ConfusionMatrix { tn, fp, fn_, tp }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix::new(self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_, self.tp + o.tp)
    }
}

pub fn confusion(z: &[bool], z_hat: &[bool]) -> Result<ConfusionMatrix> {
    if z.len() != z_hat.len() {
        return Err(Error::Invalid(format!("series lengths differ: {} vs {}", z.len(), z_hat.len())));
    }
    let mut m = ConfusionMatrix::default();
    for (&truth, &pred) in z.iter().zip(z_hat) {
        match (truth, pred) {
            (false, false) => m.tn += 1,
            (false, true) => m.fp += 1,
            (true, false) => m.fn_ += 1,
            (true, true) => m.tp += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when `TP + FP = 0`; precision is then reported as 0.
    pub precision_undefined: bool,
    /// Set when `TP + FN = 0`; recall is then reported as 0.
    pub recall_undefined: bool,
}

pub fn scores_from_confusion(m: &ConfusionMatrix) -> ClassificationScores {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassificationScores {
        accuracy: ratio(m.tn + m.tp, m.total()),
        precision,
        recall,
        f1,
        precision_undefined: m.tp + m.fp == 0,
        recall_undefined: m.tp + m.fn_ == 0,
    }
}

/// Rounds half away from zero at `decimals` places. A relative nudge keeps
/// values like `0.12345` (stored as `0.1234499…`) rounding up as printed.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let nudged = scaled + scaled.signum() * scaled.abs().max(1.0) * 1e-12;
    (nudged.abs() + 0.5).floor().copysign(x) / scale
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityMetrics {
    pub id_switches: u64,
    pub fragmentation: u64,
}

/// Per-frame predicted tracks: `(frame, [(track_id, box)])`.
pub type PredictedTracks = BTreeMap<u64, Vec<(u64, BBox)>>;

/// Identity switches and fragmentation of one video.
///
/// On each frame, ground-truth boxes are matched to predicted track boxes by
/// minimum-cost assignment on `1 - IoU`, rejecting pairs below `iou_match`.
/// A switch is counted when a trajectory's matched track id differs from the
/// last id it was matched to. A fragmentation is a matched→unmatched
/// transition, over the frames where the trajectory is present, that is
/// later followed by another matched frame.
pub fn identity_metrics(gt: &IdentityGroundTruth, predicted: &PredictedTracks, iou_match: f64) -> IdentityMetrics {
    let mut last_id: HashMap<u64, u64> = HashMap::new();
    // gt_id → matched flag per present frame, in frame order
    let mut coverage: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    let mut switches = 0;
    let empty = Vec::new();

    for (frame, gt_boxes) in gt.by_frame() {
        let preds = predicted.get(&frame).unwrap_or(&empty);
        let costs: Vec<Vec<f64>> = gt_boxes
            .iter()
            .map(|(_, g)| preds.iter().map(|(_, p)| 1.0 - iou(g, p)).collect())
            .collect();
        let result = assign(&costs, 1.0 - iou_match);
        let mut matched_to: HashMap<usize, u64> = HashMap::new();
        for (r, c) in result.matches {
            matched_to.insert(r, preds[c].0);
        }
        for (r, (gt_id, _)) in gt_boxes.iter().enumerate() {
            let hit = matched_to.get(&r).copied();
            coverage.entry(*gt_id).or_default().push(hit.is_some());
            if let Some(track_id) = hit {
                if let Some(prev) = last_id.insert(*gt_id, track_id) {
                    if prev != track_id {
                        switches += 1;
                    }
                }
            }
        }
    }

    let fragmentation = coverage.values().map(|c| count_fragmentations(c)).sum();
    IdentityMetrics {
        id_switches: switches,
        fragmentation,
    }
}

fn count_fragmentations(coverage: &[bool]) -> u64 {
    let mut count = 0;
    let mut pending_break = false;
    let mut seen_match = false;
    for &m in coverage {
        if m {
            if pending_break {
                count += 1;
                pending_break = false;
            }
            seen_match = true;
        } else if seen_match {
            pending_break = true;
        }
    }
    count
}

pub fn id_switches(gt: &IdentityGroundTruth, predicted: &PredictedTracks, iou_match: f64) -> u64 {
    identity_metrics(gt, predicted, iou_match).id_switches
}

pub fn fragmentation(gt: &IdentityGroundTruth, predicted: &PredictedTracks, iou_match: f64) -> u64 {
    identity_metrics(gt, predicted, iou_match).fragmentation
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_frames: u64,
    pub mae: f64,
    pub rmse: f64,
    pub exact_accuracy: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_switches: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragmentation: Option<u64>,
}

impl MetricsReport {
    pub fn from_counts(y: &[u32], y_hat: &[u32]) -> Result<Self> {
        let cm = confusion(&binarize(y), &binarize(y_hat))?;
        let s = scores_from_confusion(&cm);
        Ok(MetricsReport {
            n_frames: y.len() as u64,
            mae: mae(y, y_hat)?,
            rmse: rmse(y, y_hat)?,
            exact_accuracy: exact_accuracy(y, y_hat)?,
            accuracy: s.accuracy,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            confusion: cm,
            precision_undefined: s.precision_undefined,
            recall_undefined: s.recall_undefined,
            id_switches: None,
            fragmentation: None,
        })
    }

    pub fn with_identity(mut self, identity: Option<IdentityMetrics>) -> Self {
        self.id_switches = identity.map(|m| m.id_switches);
        self.fragmentation = identity.map(|m| m.fragmentation);
        self
    }

    /// Copy with every rate rounded half-up to 4 decimals, as written to
    /// reports.
    pub fn rounded(&self) -> Self {
        let r = |x: f64| round_half_up(x, 4);
        MetricsReport {
            mae: r(self.mae),
            rmse: r(self.rmse),
            exact_accuracy: r(self.exact_accuracy),
            accuracy: r(self.accuracy),
            precision: r(self.precision),
            recall: r(self.recall),
            f1: r(self.f1),
            ..self.clone()
        }
    }
}

/// Pairs ground truth with predictions by `(video, frame)`. Every
/// ground-truth frame needs a prediction; predictions without ground truth
/// are ignored.
pub fn align<'a>(gt: &'a [GroundTruthRecord], pred: &'a [OccupancySample]) -> Result<Vec<(&'a str, u32, u32)>> {
    let index: HashMap<(&str, u64), u32> = pred.iter().map(|s| ((s.video_id.as_str(), s.frame_idx), s.count)).collect();
    gt.iter()
        .map(|g| {
            index
                .get(&(g.video_id.as_str(), g.frame_idx))
                .map(|&p| (g.video_id.as_str(), g.count, p))
                .ok_or_else(|| Error::Invalid(format!("no prediction for video {} frame {}", g.video_id, g.frame_idx)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Frame-weighted metrics over all videos.
    pub global: MetricsReport,
    pub per_video: BTreeMap<String, MetricsReport>,
}

pub fn evaluate(gt: &[GroundTruthRecord], pred: &[OccupancySample]) -> Result<Evaluation> {
    let pairs = align(gt, pred)?;
    let (y, y_hat): (Vec<u32>, Vec<u32>) = pairs.iter().map(|&(_, a, b)| (a, b)).unzip();
    let global = MetricsReport::from_counts(&y, &y_hat)?;
    let mut grouped: BTreeMap<&str, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
    for (v, a, b) in pairs {
        let e = grouped.entry(v).or_default();
        e.0.push(a);
        e.1.push(b);
    }
    let per_video = grouped
        .into_iter()
        .map(|(v, (a, b))| Ok((v.to_string(), MetricsReport::from_counts(&a, &b)?)))
        .collect::<Result<_>>()?;
    Ok(Evaluation { global, per_video })
}

/// Writes `video,mae,rmse,exact_acc,acc,prec,rec,f1,fn,fp` rows.
pub fn write_per_video_csv<W: Write>(writer: W, per_video: &BTreeMap<String, MetricsReport>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["video", "mae", "rmse", "exact_acc", "acc", "prec", "rec", "f1", "fn", "fp"])?;
    for (video, m) in per_video {
        let m = m.rounded();
        w.write_record([
            video.clone(),
            m.mae.to_string(),
            m.rmse.to_string(),
            m.exact_accuracy.to_string(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.confusion.fn_.to_string(),
            m.confusion.fp.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<per-video csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series() {
        let y = [1, 2, 3];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(exact_accuracy(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_errors() {
        let (y, y_hat) = ([0, 2], [1, 0]);
        assert_eq!(mae(&y, &y_hat).unwrap(), 1.5);
        assert!((rmse(&y, &y_hat).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(exact_accuracy(&y, &y_hat).unwrap(), 0.0);
    }

    #[test]
    fn length_and_empty_errors() {
        assert!(mae(&[1], &[1, 2]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn binarize_cases() {
        assert_eq!(binarize(&[0, 3]), [false, true]);
        assert!(binarize(&[0, 0, 0]).iter().all(|&z| !z));
    }

    #[test]
    fn confusion_cases() {
        assert_eq!(confusion(&[true, false], &[true, false]).unwrap(), ConfusionMatrix::new(1, 0, 0, 1));
        assert_eq!(confusion(&[true], &[false]).unwrap(), ConfusionMatrix::new(0, 0, 1, 0));
    }

    #[test]
    fn perfect_occupied_only() {
        let s = scores_from_confusion(&ConfusionMatrix::new(0, 0, 0, 12));
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let s = scores_from_confusion(&ConfusionMatrix::new(5, 0, 0, 0));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(s.precision_undefined && s.recall_undefined);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(0.12345, 4), 0.1235);
        assert_eq!(round_half_up(17.9435, 2), 17.94);
        assert_eq!(round_half_up(12.955, 2), 12.96);
        assert_eq!(round_half_up(-1.25, 1), -1.3);
    }

    fn traj(points: &[(u64, f64)]) -> Vec<(u64, BBox)> {
        points.iter().map(|&(f, x)| (f, BBox::new(x, 0.0, 10.0, 10.0))).collect()
    }

    #[test]
    fn perfect_following() {
        let gt = IdentityGroundTruth {
            trajectories: [(1, traj(&[(0, 0.0), (1, 1.0), (2, 2.0)]))].into(),
        };
        let pred: PredictedTracks = (0..3).map(|f| (f, vec![(9, BBox::new(f as f64, 0.0, 10.0, 10.0))])).collect();
        assert_eq!(identity_metrics(&gt, &pred, 0.5), IdentityMetrics::default());
    }

    #[test]
    fn switch_after_gap() {
        let gt = IdentityGroundTruth {
            trajectories: [(1, traj(&[(0, 0.0), (1, 0.0), (5, 0.0), (6, 0.0)]))].into(),
        };
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let pred: PredictedTracks = [(0, vec![(3, b)]), (1, vec![(3, b)]), (5, vec![(4, b)]), (6, vec![(4, b)])].into();
        assert_eq!(id_switches(&gt, &pred, 0.5), 1);
        assert_eq!(fragmentation(&gt, &pred, 0.5), 0);
    }

    #[test]
    fn fragmentation_cases() {
        assert_eq!(count_fragmentations(&[true, true, true]), 0);
        assert_eq!(count_fragmentations(&[true, false, true]), 1);
        assert_eq!(count_fragmentations(&[true, true, false, false]), 0);
        assert_eq!(count_fragmentations(&[false, true, false, false, true, false, true]), 2);
    }

    #[test]
    fn evaluation_requires_predictions() {
        let gt = vec![GroundTruthRecord { video_id: "v".into(), frame_idx: 0, count: 1 }];
        assert!(evaluate(&gt, &[]).is_err());
    }
}
