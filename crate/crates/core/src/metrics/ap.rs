use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::iou;
use crate::error::{Error, Result};
use crate::model::Box2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope.
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// How detections are matched to ground truth. Scores are always ranked in
/// descending order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    iou_threshold: f64,
    interpolation: Interpolation,
}

impl MatchPolicy {
    pub fn new(iou_threshold: f64, interpolation: Interpolation) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold {iou_threshold} is outside (0, 1]"
            )));
        }
        Ok(Self {
            iou_threshold,
            interpolation,
        })
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            interpolation: Interpolation::AllPoint,
        }
    }
}

/// Indices of `boxes` by descending score; equal scores keep input order.
pub(crate) fn score_order(boxes: &[Box2D]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    idx.sort_by(|&a, &b| boxes[b].score().total_cmp(&boxes[a].score()));
    idx
}

/// Greedy matching in score order.
///
/// Each detection takes the unmatched truth with the highest IoU at or above
/// the threshold (lowest index on ties). Returns the matched truth per
/// detection, indexed like `dets`.
pub fn match_greedy(dets: &[Box2D], truths: &[Box2D], threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; truths.len()];
    let mut out = vec![None; dets.len()];
    for d in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (t, truth) in truths.iter().enumerate() {
            if taken[t] {
                continue;
            }
            let o = iou(&dets[d], truth);
            if o >= threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((t, o));
            }
        }
        if let Some((t, _)) = best {
            taken[t] = true;
            out[d] = Some(t);
        }
    }
    out
}

/// Ranked true-positive flags across frames plus the total truth count.
fn ranked_hits(frames: &[(&[Box2D], &[Box2D])], threshold: f64) -> (Vec<bool>, usize) {
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    let mut n_truth = 0;
    for (dets, truths) in frames {
        n_truth += truths.len();
        let matches = match_greedy(dets, truths, threshold);
        ranked.extend(dets.iter().zip(&matches).map(|(d, m)| (d.score(), m.is_some())));
    }
    // stable: ties stay in frame order, then detection order
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    (ranked.into_iter().map(|(_, hit)| hit).collect(), n_truth)
}

/// `(recall, precision)` after each ranked detection.
pub fn precision_recall_curve(
    frames: &[(&[Box2D], &[Box2D])],
    policy: &MatchPolicy,
) -> Vec<(f64, f64)> {
    let (hits, n_truth) = ranked_hits(frames, policy.iou_threshold);
    let mut tp = 0usize;
    hits.iter()
        .enumerate()
        .map(|(k, hit)| {
            tp += *hit as usize;
            let recall = if n_truth == 0 {
                0.0
            } else {
                tp as f64 / n_truth as f64
            };
            (recall, tp as f64 / (k + 1) as f64)
        })
        .collect()
}

/// Average precision of one class pooled over several frames.
///
/// Detections are ranked globally by score and matched within their own
/// frame. Returns `None` when there are neither detections nor truths.
pub fn average_precision_frames(
    frames: &[(&[Box2D], &[Box2D])],
    policy: &MatchPolicy,
) -> Option<f64> {
    let (hits, n_truth) = ranked_hits(frames, policy.iou_threshold);
    if n_truth == 0 {
        return if hits.is_empty() { None } else { Some(0.0) };
    }
    if hits.is_empty() {
        return Some(0.0);
    }
    let mut tp = Vec::with_capacity(hits.len());
    let mut count = 0usize;
    for hit in &hits {
        count += *hit as usize;
        tp.push(count);
    }
    let precision: Vec<f64> = tp
        .iter()
        .enumerate()
        .map(|(k, t)| *t as f64 / (k + 1) as f64)
        .collect();
    let mut envelope = precision.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let ap = match policy.interpolation {
        Interpolation::AllPoint => {
            // recall rises by 1/n_truth at each true positive
            let mut sum = 0.0;
            for (k, hit) in hits.iter().enumerate() {
                if *hit {
                    sum += envelope[k];
                }
            }
            sum / n_truth as f64
        }
        Interpolation::ElevenPoint => {
            let mut sum = 0.0;
            for step in 0..=10usize {
                // recall >= step / 10, compared in integers
                let p = (0..tp.len())
                    .filter(|&k| tp[k] * 10 >= step * n_truth)
                    .map(|k| precision[k])
                    .fold(0.0, f64::max);
                sum += p;
            }
            sum / 11.0
        }
    };
    Some(ap)
}

/// Single-frame, single-class average precision.
pub fn average_precision(dets: &[Box2D], truths: &[Box2D], policy: &MatchPolicy) -> Option<f64> {
    average_precision_frames(&[(dets, truths)], policy)
}

/// Arithmetic mean of the per-class values.
pub fn mean_average_precision<K>(per_class: &BTreeMap<K, f64>) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::Domain("mAP over zero classes".into()));
    }
    Ok(per_class.values().sum::<f64>() / per_class.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64, score: f64) -> Box2D {
        Box2D::new(x0, y0, x1, y1).unwrap().with_score(score).unwrap()
    }

    #[test]
    fn policy_validation() {
        assert!(MatchPolicy::new(0.0, Interpolation::AllPoint).is_err());
        assert!(MatchPolicy::new(1.0, Interpolation::AllPoint).is_ok());
        assert!(MatchPolicy::new(1.5, Interpolation::AllPoint).is_err());
        assert!(MatchPolicy::new(f64::NAN, Interpolation::AllPoint).is_err());
    }

    #[test]
    fn ap_examples() {
        let p = MatchPolicy::default();
        let t = b(0., 0., 10., 10., 1.0);
        assert_eq!(average_precision(&[t], &[t], &p), Some(1.0));
        let strict = MatchPolicy::new(1.0, Interpolation::AllPoint).unwrap();
        assert_eq!(average_precision(&[t], &[t], &strict), Some(1.0));

        let hit = b(0., 0., 10., 10., 0.9);
        let miss = b(50., 50., 60., 60., 0.8);
        assert_eq!(average_precision(&[hit, miss], &[t], &p), Some(1.0));
        let curve = precision_recall_curve(&[(&[hit, miss][..], &[t][..])], &p);
        assert_eq!(curve, vec![(1.0, 1.0), (1.0, 0.5)]);

        let t2 = b(30., 30., 40., 40., 1.0);
        assert_eq!(average_precision(&[hit], &[t, t2], &p), Some(0.5));
    }

    #[test]
    fn ap_empty_cases() {
        let p = MatchPolicy::default();
        let t = b(0., 0., 10., 10., 1.0);
        assert_eq!(average_precision(&[t], &[], &p), Some(0.0));
        assert_eq!(average_precision(&[], &[t], &p), Some(0.0));
        assert_eq!(average_precision(&[], &[], &p), None);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let p = MatchPolicy::default();
        let t = b(0., 0., 10., 10., 1.0);
        let first = b(0., 0., 10., 10., 0.9);
        let dup = b(0., 0., 10., 10., 0.8);
        assert_eq!(match_greedy(&[first, dup], &[t], 0.5), vec![Some(0), None]);
        assert_eq!(average_precision(&[dup, first], &[t], &p), Some(1.0));
    }

    #[test]
    fn false_positive_first_halves_precision() {
        let p = MatchPolicy::default();
        let t = b(0., 0., 10., 10., 1.0);
        let fp = b(50., 50., 60., 60., 0.9);
        let tp = b(0., 0., 10., 10., 0.8);
        assert_eq!(average_precision(&[fp, tp], &[t], &p), Some(0.5));
    }

    #[test]
    fn eleven_point() {
        let p = MatchPolicy::new(0.5, Interpolation::ElevenPoint).unwrap();
        let t1 = b(0., 0., 10., 10., 1.0);
        let t2 = b(30., 30., 40., 40., 1.0);
        let hit = b(0., 0., 10., 10., 0.9);
        // recall 0.5 at precision 1: thresholds 0.0..=0.5 score 1, the rest 0
        let ap = average_precision(&[hit], &[t1, t2], &p).unwrap();
        assert!((ap - 6.0 / 11.0).abs() < 1e-15);
        assert_eq!(average_precision(&[hit], &[t1], &p), Some(1.0));
    }

    #[test]
    fn pooled_frames_rank_globally() {
        let p = MatchPolicy::default();
        let t = b(0., 0., 10., 10., 1.0);
        let good = b(0., 0., 10., 10., 0.9);
        let bad = b(50., 50., 60., 60., 0.95);
        let frames: [(&[Box2D], &[Box2D]); 2] = [(&[good], &[t]), (&[bad], &[t])];
        // ranked: FP(0.95), TP(0.9); two truths
        assert_eq!(average_precision_frames(&frames, &p), Some(0.25));
    }

    #[test]
    fn map_examples() {
        let table: BTreeMap<&str, f64> = [
            ("Car", 87.846443),
            ("Pedestrian", 60.852219),
            ("Cyclist", 48.693352),
        ]
        .into_iter()
        .collect();
        assert!((mean_average_precision(&table).unwrap() - 65.797338).abs() < 1e-6);
        let one: BTreeMap<_, _> = [("a", 0.37)].into_iter().collect();
        assert_eq!(mean_average_precision(&one).unwrap(), 0.37);
        let two: BTreeMap<_, _> = [("a", 0.0), ("b", 1.0)].into_iter().collect();
        assert_eq!(mean_average_precision(&two).unwrap(), 0.5);
        assert!(mean_average_precision::<&str>(&BTreeMap::new()).is_err());
    }
}
