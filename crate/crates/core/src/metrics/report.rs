use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ap::{average_precision_frames, match_greedy, mean_average_precision, MatchPolicy};
use super::confusion::ConfusionMatrix;
use super::{loss_diou, sie};
use crate::error::Result;
use crate::geometry::dims_loss;
use crate::model::{normalize_angle, Box2D, Box3D, ClassTaxonomy, SuperCategory};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalObject {
    pub box2d: Box2D,
    pub box3d: Option<Box3D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub id: String,
    /// Sweep category label used for the breakdown table, if any.
    pub group: Option<String>,
    pub detections: Vec<EvalObject>,
    pub truths: Vec<EvalObject>,
}

/// mAP for one super-category within one frame group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub super_category: SuperCategory,
    pub group: String,
    pub map: Option<f64>,
}

/// Dataset-level evaluation. AP values are fractions in `[0, 1]`.
///
/// `sie` and the 3D error fields cover matched pairs where both sides carry a
/// 3D box; they are `null` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_ap: BTreeMap<String, f64>,
    pub map: f64,
    pub confusion: ConfusionMatrix,
    pub sie: Option<f64>,
    pub mean_diou_loss: Option<f64>,
    pub mean_center_error_m: Option<f64>,
    pub dims_mse: Option<f64>,
    pub mean_azimuth_error_deg: Option<f64>,
    pub matched: usize,
    pub policy: MatchPolicy,
    pub breakdown: Vec<BreakdownRow>,
}

fn class_boxes(objs: &[EvalObject], class: usize) -> Vec<Box2D> {
    objs.iter()
        .filter(|o| o.box2d.class_id() == class)
        .map(|o| o.box2d)
        .collect()
}

fn class_ap<'a>(
    frames: impl Iterator<Item = &'a EvalFrame>,
    class: usize,
    policy: &MatchPolicy,
) -> Option<f64> {
    let owned: Vec<(Vec<Box2D>, Vec<Box2D>)> = frames
        .map(|f| (class_boxes(&f.detections, class), class_boxes(&f.truths, class)))
        .collect();
    let borrowed: Vec<(&[Box2D], &[Box2D])> = owned
        .iter()
        .map(|(d, t)| (d.as_slice(), t.as_slice()))
        .collect();
    average_precision_frames(&borrowed, policy)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn evaluate(
    frames: &[EvalFrame],
    taxonomy: &ClassTaxonomy,
    policy: &MatchPolicy,
) -> Result<EvalReport> {
    let mut per_class_ap = BTreeMap::new();
    for (class, info) in taxonomy.classes().iter().enumerate() {
        if let Some(ap) = class_ap(frames.iter(), class, policy) {
            per_class_ap.insert(info.name.clone(), ap);
        }
    }
    let map = mean_average_precision(&per_class_ap)?;

    let names: Vec<String> = taxonomy.classes().iter().map(|c| c.name.clone()).collect();
    let mut confusion = ConfusionMatrix::new(&names);
    let mut diou_losses = Vec::new();
    let (mut true_depth, mut pred_depth) = (Vec::new(), Vec::new());
    let mut center_errors = Vec::new();
    let mut dim_errors = Vec::new();
    let mut azimuth_errors = Vec::new();
    for frame in frames {
        let dets: Vec<Box2D> = frame.detections.iter().map(|o| o.box2d).collect();
        let truths: Vec<Box2D> = frame.truths.iter().map(|o| o.box2d).collect();
        confusion.add_frame(&dets, &truths, policy)?;
        for class in 0..taxonomy.len() {
            let det_idx: Vec<usize> = (0..dets.len())
                .filter(|&i| dets[i].class_id() == class)
                .collect();
            let truth_idx: Vec<usize> = (0..truths.len())
                .filter(|&i| truths[i].class_id() == class)
                .collect();
            let d: Vec<Box2D> = det_idx.iter().map(|&i| dets[i]).collect();
            let t: Vec<Box2D> = truth_idx.iter().map(|&i| truths[i]).collect();
            for (di, m) in match_greedy(&d, &t, policy.iou_threshold()).into_iter().enumerate() {
                let Some(ti) = m else { continue };
                diou_losses.push(loss_diou(&d[di], &t[ti]));
                let det3 = frame.detections[det_idx[di]].box3d;
                let truth3 = frame.truths[truth_idx[ti]].box3d;
                if let (Some(p), Some(g)) = (det3, truth3) {
                    true_depth.push(g.center()[2]);
                    pred_depth.push(p.center()[2]);
                    let (pc, gc) = (p.center(), g.center());
                    center_errors.push(
                        ((pc[0] - gc[0]).powi(2) + (pc[1] - gc[1]).powi(2) + (pc[2] - gc[2]).powi(2))
                            .sqrt(),
                    );
                    dim_errors.push(dims_loss(p.dims(), g.dims()));
                    let da = normalize_angle(p.orientation().azimuth - g.orientation().azimuth)?;
                    azimuth_errors.push(da.abs());
                }
            }
        }
    }
    let sie = if true_depth.is_empty() {
        None
    } else {
        Some(sie(&true_depth, &pred_depth)?)
    };

    let groups: BTreeSet<&str> = frames.iter().filter_map(|f| f.group.as_deref()).collect();
    let supers: BTreeSet<SuperCategory> = taxonomy.classes().iter().map(|c| c.super_category).collect();
    let mut breakdown = Vec::new();
    for sup in supers {
        for group in &groups {
            let mut aps = BTreeMap::new();
            for class in taxonomy.ids_in(sup) {
                let in_group = frames.iter().filter(|f| f.group.as_deref() == Some(group));
                if let Some(ap) = class_ap(in_group, class, policy) {
                    aps.insert(class, ap);
                }
            }
            breakdown.push(BreakdownRow {
                super_category: sup,
                group: (*group).to_string(),
                map: mean_average_precision(&aps).ok(),
            });
        }
    }

    Ok(EvalReport {
        per_class_ap,
        map,
        confusion,
        sie,
        mean_diou_loss: mean(&diou_losses),
        mean_center_error_m: mean(&center_errors),
        dims_mse: mean(&dim_errors),
        mean_azimuth_error_deg: mean(&azimuth_errors),
        matched: diou_losses.len(),
        policy: *policy,
        breakdown,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl EvalReport {
    /// Aligned plain-text rendering, AP shown as percentages.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let width = self
            .per_class_ap
            .keys()
            .map(String::len)
            .chain(self.confusion.labels.iter().map(String::len))
            .max()
            .unwrap_or(5)
            .max(10);
        let _ = writeln!(s, "{:<width$}  {:>10}", "class", "AP (%)");
        for (name, ap) in &self.per_class_ap {
            let _ = writeln!(s, "{:<width$}  {:>10.6}", name, ap * 100.0);
        }
        let _ = writeln!(s, "{:<width$}  {:>10.6}", "mAP", self.map * 100.0);
        let _ = writeln!(s);
        let _ = writeln!(s, "SIE                {}", opt(self.sie, 6));
        let _ = writeln!(s, "mean DIoU loss     {}", opt(self.mean_diou_loss, 6));
        let _ = writeln!(s, "mean center error  {}", opt(self.mean_center_error_m, 4));
        let _ = writeln!(s, "dims MSE           {}", opt(self.dims_mse, 6));
        let _ = writeln!(s, "azimuth error      {}", opt(self.mean_azimuth_error_deg, 4));
        if !self.breakdown.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<8}  {:<10}  {:>10}", "super", "group", "mAP (%)");
            for row in &self.breakdown {
                let _ = writeln!(
                    s,
                    "{:<8}  {:<10}  {:>10}",
                    row.super_category.name(),
                    row.group,
                    opt(row.map.map(|m| m * 100.0), 2)
                );
            }
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<width$}", "truth\\det");
        for label in &self.confusion.labels {
            let _ = write!(s, "  {label:>width$}");
        }
        let _ = writeln!(s);
        for (label, row) in self.confusion.labels.iter().zip(&self.confusion.counts) {
            let _ = write!(s, "{label:<width$}");
            for c in row {
                let _ = write!(s, "  {c:>width$}");
            }
            let _ = writeln!(s);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, Orientation};

    fn obj(x: f64, class: usize, z: f64) -> EvalObject {
        EvalObject {
            box2d: Box2D::new(x, 0., x + 10., 10.).unwrap().with_class(class),
            box3d: Some(
                Box3D::new([0.0, 0.0, z], Dims::new(1., 1., 1.), Orientation::default())
                    .unwrap()
                    .with_class(class),
            ),
        }
    }

    fn frame(id: &str, group: &str, dets: Vec<EvalObject>, truths: Vec<EvalObject>) -> EvalFrame {
        EvalFrame {
            id: id.into(),
            group: Some(group.into()),
            detections: dets,
            truths,
        }
    }

    #[test]
    fn perfect_predictions() {
        let tax = ClassTaxonomy::synthetic();
        let truths = vec![obj(0., 0, 10.), obj(20., 2, 50.)];
        let frames = [frame("000000", "camera", truths.clone(), truths)];
        let r = evaluate(&frames, &tax, &MatchPolicy::default()).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.per_class_ap.len(), 2);
        assert_eq!(r.sie, Some(0.0));
        assert_eq!(r.mean_diou_loss, Some(0.0));
        assert_eq!(r.confusion.get(0, 0), 1);
        assert_eq!(r.confusion.get(2, 2), 1);
        assert_eq!(r.breakdown.len(), 2);
        assert!(r.breakdown.iter().all(|b| b.map == Some(1.0)));
        let json = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        for k in ["per_class_ap", "map", "confusion", "sie", "mean_diou_loss"] {
            assert!(keys.iter().any(|x| x == k));
        }
        assert!(r.to_table().contains("mAP"));
    }

    #[test]
    fn empty_predictions() {
        let tax = ClassTaxonomy::synthetic();
        let frames = [frame("000000", "light", vec![], vec![obj(0., 0, 10.), obj(20., 1, 10.)])];
        let r = evaluate(&frames, &tax, &MatchPolicy::default()).unwrap();
        assert_eq!(r.map, 0.0);
        assert_eq!(r.sie, None);
        assert_eq!(r.confusion.get(0, 4), 1);
        assert_eq!(r.confusion.get(1, 4), 1);
    }

    #[test]
    fn nothing_to_score_is_an_error() {
        let tax = ClassTaxonomy::synthetic();
        let frames = [frame("000000", "light", vec![], vec![])];
        assert!(evaluate(&frames, &tax, &MatchPolicy::default()).is_err());
    }
}
