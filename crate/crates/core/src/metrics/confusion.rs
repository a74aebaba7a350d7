use serde::{Deserialize, Serialize};

use super::ap::{score_order, MatchPolicy};
use super::iou;
use crate::error::{Error, Result};
use crate::model::Box2D;

/// `(C + 1) x (C + 1)` counts, rows are truth classes, columns detected
/// classes. Index `C` is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: &[String]) -> Self {
        let mut labels = class_names.to_vec();
        labels.push("background".into());
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn background(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn get(&self, truth: usize, detected: usize) -> u64 {
        self.counts[truth][detected]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.labels != self.labels {
            return Err(Error::Shape("confusion matrices have different labels".into()));
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        Ok(())
    }

    /// Adds one frame of class-labelled boxes.
    ///
    /// Matching ignores class: detections in score order take the unmatched
    /// truth with the highest IoU at or above the threshold, preferring a
    /// truth of the same class on equal IoU.
    pub fn add_frame(&mut self, dets: &[Box2D], truths: &[Box2D], policy: &MatchPolicy) -> Result<()> {
        let bg = self.background();
        if let Some(b) = dets.iter().chain(truths).find(|b| b.class_id() >= bg) {
            return Err(Error::Config(format!(
                "class id {} outside a {}-class confusion matrix",
                b.class_id(),
                bg
            )));
        }
        let mut taken = vec![false; truths.len()];
        for d in score_order(dets) {
            let det = &dets[d];
            let mut best: Option<(usize, f64, bool)> = None;
            for (t, truth) in truths.iter().enumerate() {
                if taken[t] {
                    continue;
                }
                let o = iou(det, truth);
                if o < policy.iou_threshold() {
                    continue;
                }
                let same = truth.class_id() == det.class_id();
                let better = match best {
                    None => true,
                    Some((_, bo, bsame)) => o > bo || (o == bo && same && !bsame),
                };
                if better {
                    best = Some((t, o, same));
                }
            }
            match best {
                Some((t, _, _)) => {
                    taken[t] = true;
                    self.counts[truths[t].class_id()][det.class_id()] += 1;
                }
                None => self.counts[bg][det.class_id()] += 1,
            }
        }
        for (t, truth) in truths.iter().enumerate() {
            if !taken[t] {
                self.counts[truth.class_id()][bg] += 1;
            }
        }
        Ok(())
    }
}

pub fn confusion_matrix(
    dets: &[Box2D],
    truths: &[Box2D],
    class_names: &[String],
    policy: &MatchPolicy,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(class_names);
    m.add_frame(dets, truths, policy)?;
    Ok(m)
}
