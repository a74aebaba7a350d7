//! Evaluation math: overlap metrics and losses, scale-invariant depth error,
//! average precision, confusion matrices and the dataset report.

mod ap;
mod confusion;
mod report;

pub use ap::{
    average_precision, average_precision_frames, match_greedy, mean_average_precision,
    precision_recall_curve, Interpolation, MatchPolicy,
};
pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use report::{evaluate, BreakdownRow, EvalFrame, EvalObject, EvalReport};

use crate::error::{Error, Result};
use crate::model::Box2D;

fn intersection(a: &Box2D, b: &Box2D) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    w * h
}

/// Overlap area over union area; 0 when the union is empty.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let inter = intersection(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

pub fn loss_iou(a: &Box2D, b: &Box2D) -> f64 {
    1.0 - iou(a, b)
}

/// IoU minus squared center distance over the squared diagonal of the
/// smallest box enclosing both. When that diagonal is zero the penalty is 0.
pub fn diou(a: &Box2D, b: &Box2D) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let rho2 = (ax - bx).powi(2) + (ay - by).powi(2);
    let ew = a.x_max().max(b.x_max()) - a.x_min().min(b.x_min());
    let eh = a.y_max().max(b.y_max()) - a.y_min().min(b.y_min());
    let diag2 = ew * ew + eh * eh;
    let base = iou(a, b);
    if diag2 <= 0.0 {
        base
    } else {
        base - rho2 / diag2
    }
}

pub fn loss_diou(a: &Box2D, b: &Box2D) -> f64 {
    1.0 - diou(a, b)
}

/// Scale-invariant log-depth error.
///
/// Mean of squared log residuals after removing their mean, so any global
/// scale factor on the predictions cancels.
pub fn sie(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} true depths but {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Domain("scale-invariant error needs at least one depth".into()));
    }
    if let Some(d) = truth
        .iter()
        .chain(pred)
        .find(|d| !d.is_finite() || **d <= 0.0)
    {
        return Err(Error::Domain(format!("depth {d} must be finite and positive")));
    }
    let residuals: Vec<f64> = truth
        .iter()
        .zip(pred)
        .map(|(d, p)| d.ln() - p.ln())
        .collect();
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    Ok(residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> Box2D {
        Box2D::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = b(0., 0., 2., 2.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5., 5., 6., 6.)), 0.0);
        assert!((iou(&a, &b(1., 0., 3., 2.)) - 1.0 / 3.0).abs() < 1e-12);
        let p = b(1., 1., 1., 1.);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn loss_iou_examples() {
        let a = b(0., 0., 2., 2.);
        assert_eq!(loss_iou(&a, &a), 0.0);
        assert_eq!(loss_iou(&a, &b(5., 5., 6., 6.)), 1.0);
        assert!((loss_iou(&a, &b(1., 0., 3., 2.)) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn diou_examples() {
        let a = b(0., 0., 2., 2.);
        assert_eq!(diou(&a, &a), 1.0);
        let inner = b(0.5, 0.5, 1.5, 1.5);
        assert_eq!(diou(&a, &inner), iou(&a, &inner));
        let (u, v) = (b(0., 0., 1., 1.), b(2., 0., 3., 1.));
        assert!((diou(&u, &v) - -0.4).abs() < 1e-12);
        assert!((loss_diou(&u, &v) - 1.4).abs() < 1e-12);
        assert_eq!(loss_diou(&a, &a), 0.0);
        assert_eq!(loss_diou(&a, &inner), loss_iou(&a, &inner));
        let p = b(1., 1., 1., 1.);
        assert_eq!(diou(&p, &p), 0.0);
    }

    #[test]
    fn sie_examples() {
        let t = [1.0, 2.0, 5.0];
        assert_eq!(sie(&t, &t).unwrap(), 0.0);
        let doubled: Vec<f64> = t.iter().map(|d| 2.0 * d).collect();
        assert!(sie(&t, &doubled).unwrap().abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((sie(&[1.0, 1.0], &[e, 1.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(sie(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(sie(&[0.0], &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(sie(&[1.0], &[-1.0]), Err(Error::Domain(_))));
        assert!(matches!(sie(&[], &[]), Err(Error::Domain(_))));
    }

    fn boxes() -> impl Strategy<Value = Box2D> {
        (-50.0f64..50.0, -50.0f64..50.0, 0.0f64..40.0, 0.0f64..40.0)
            .prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn overlap_bounds_and_symmetry(a in boxes(), c in boxes()) {
            let i = iou(&a, &c);
            let d = diou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!(d > -1.0 && d <= i);
            prop_assert_eq!(i, iou(&c, &a));
            prop_assert!((d - diou(&c, &a)).abs() < 1e-12);
            if a.center() != c.center() {
                prop_assert!(d < i);
            } else {
                prop_assert_eq!(d, i);
            }
        }

        #[test]
        fn area_nonnegative(a in boxes()) {
            prop_assert!(a.area() >= 0.0);
        }
    }
}
