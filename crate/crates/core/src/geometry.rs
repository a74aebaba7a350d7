//! Lifting 2D detections to 3D boxes: depth and MultiBin orientation decoding,
//! dimension loss, pinhole projection and the 2D-box-constrained center fit.
//!
//! Conventions: camera frame is x right, y down, z forward. A box's local
//! extents are `w` along x, `h` along y and `l` along z, and its rotation is
//! `R = Rz(roll) * Rx(elevation) * Ry(azimuth)`.

use nalgebra::{Matrix3, Rotation3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::model::{normalize_angle, Box2D, Box3D, CameraIntrinsics, Dims, Orientation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinOutput {
    pub confidence: f64,
    pub cos_delta: f64,
    pub sin_delta: f64,
}

/// Per-bin confidence plus the `(cos, sin)` residual from the bin center.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBinOutput {
    bins: Vec<BinOutput>,
    bin_centers: Vec<f64>,
}

/// `n` bins of equal width covering the circle, centered in each slot.
pub fn uniform_bin_centers(n: usize) -> Vec<f64> {
    let width = 360.0 / n as f64;
    (0..n).map(|i| -180.0 + (i as f64 + 0.5) * width).collect()
}

impl MultiBinOutput {
    pub fn new(bins: Vec<BinOutput>, bin_centers: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Domain("MultiBin output needs at least one bin".into()));
        }
        if bins.len() != bin_centers.len() {
            return Err(Error::Shape(format!(
                "{} bins but {} bin centers",
                bins.len(),
                bin_centers.len()
            )));
        }
        if !bin_centers.iter().all(|c| (-180.0..180.0).contains(c)) {
            return Err(Error::Domain("bin centers must lie in [-180, 180)".into()));
        }
        if bin_centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("bin centers must be strictly increasing".into()));
        }
        if bins
            .iter()
            .any(|b| !b.cos_delta.is_finite() || !b.sin_delta.is_finite())
        {
            return Err(Error::Domain("bin residuals must be finite".into()));
        }
        Ok(Self { bins, bin_centers })
    }

    pub fn bins(&self) -> &[BinOutput] {
        &self.bins
    }

    pub fn bin_centers(&self) -> &[f64] {
        &self.bin_centers
    }
}

/// Highest-confidence bin (lowest index on ties) plus its residual angle.
pub fn decode_multibin(out: &MultiBinOutput) -> Result<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in out.bins.iter().enumerate() {
        if !b.confidence.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, c)| b.confidence > c) {
            best = Some((i, b.confidence));
        }
    }
    let (i, _) = best.ok_or_else(|| Error::Domain("no finite bin confidence".into()))?;
    let bin = &out.bins[i];
    let residual = bin.sin_delta.atan2(bin.cos_delta).to_degrees();
    normalize_angle(out.bin_centers[i] + residual)
}

/// Log-space depth: `exp(raw)` metres.
pub fn decode_depth(raw: f64) -> Result<f64> {
    if !raw.is_finite() {
        return Err(Error::Domain(format!("raw depth {raw} is not finite")));
    }
    let depth = raw.exp();
    if !depth.is_finite() {
        return Err(Error::Range(format!("exp({raw}) overflows")));
    }
    if depth <= 0.0 {
        return Err(Error::Range(format!("exp({raw}) underflows to zero")));
    }
    Ok(depth)
}

/// Squared-error sum over the three extents of one sample.
pub fn dims_loss(pred: Dims, truth: Dims) -> f64 {
    (pred.w - truth.w).powi(2) + (pred.h - truth.h).powi(2) + (pred.l - truth.l).powi(2)
}

/// Mean of the per-sample component sums.
pub fn dims_loss_batch(samples: &[(Dims, Dims)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("dimension loss over an empty batch".into()));
    }
    let total: f64 = samples.iter().map(|(p, t)| dims_loss(*p, *t)).sum();
    Ok(total / samples.len() as f64)
}

pub fn rotation_matrix(o: Orientation) -> Matrix3<f64> {
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), o.azimuth.to_radians());
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), o.elevation.to_radians());
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), o.roll.to_radians());
    (rz * rx * ry).into_inner()
}

pub fn project_point(k: &CameraIntrinsics, p: [f64; 3]) -> Result<(f64, f64)> {
    if p[2] <= 0.0 {
        return Err(Error::BehindCamera { z: p[2] });
    }
    let h = k.matrix() * Vector4::new(p[0], p[1], p[2], 1.0);
    if h.z == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    let (u, v) = (h.x / h.z, h.y / h.z);
    if !u.is_finite() || !v.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    Ok((u, v))
}

/// Camera-frame point at depth `z` whose projection is `(u, v)`.
///
/// Solves the two projection equations for `(x, y)` with the full 3x4
/// matrix, so skew and translation columns are honoured.
pub fn back_project(k: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Result<[f64; 3]> {
    if z <= 0.0 {
        return Err(Error::BehindCamera { z });
    }
    let p = k.matrix();
    let a11 = p[(0, 0)] - u * p[(2, 0)];
    let a12 = p[(0, 1)] - u * p[(2, 1)];
    let a21 = p[(1, 0)] - v * p[(2, 0)];
    let a22 = p[(1, 1)] - v * p[(2, 1)];
    let b1 = u * (p[(2, 2)] * z + p[(2, 3)]) - p[(0, 2)] * z - p[(0, 3)];
    let b2 = v * (p[(2, 2)] * z + p[(2, 3)]) - p[(1, 2)] * z - p[(1, 3)];
    let det = a11 * a22 - a12 * a21;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    Ok([(b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det, z])
}

/// The 8 corners in camera coordinates.
///
/// Corner `i` uses sign bit 0 for x (`w/2`), bit 1 for y (`h/2`) and bit 2 for
/// z (`l/2`); a set bit means `+`. Corner 7 is `(+w/2, +h/2, +l/2)` before
/// rotation.
pub fn box3d_corners(b: &Box3D) -> [[f64; 3]; 8] {
    let r = rotation_matrix(b.orientation());
    let d = b.dims();
    let c = Vector3::from(b.center());
    let mut out = [[0.0; 3]; 8];
    for (i, corner) in out.iter_mut().enumerate() {
        let sign = |bit: usize| if i >> bit & 1 == 1 { 0.5 } else { -0.5 };
        let local = Vector3::new(sign(0) * d.w, sign(1) * d.h, sign(2) * d.l);
        let world = r * local + c;
        *corner = [world.x, world.y, world.z];
    }
    out
}

/// Tight image-space hull of the projected corners. No clipping.
pub fn project_box3d(k: &CameraIntrinsics, b: &Box3D) -> Result<Box2D> {
    let mut u_min = f64::INFINITY;
    let mut v_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for corner in box3d_corners(b) {
        let (u, v) = project_point(k, corner)?;
        u_min = u_min.min(u);
        v_min = v_min.min(v);
        u_max = u_max.max(u);
        v_max = v_max.max(v);
    }
    Box2D::new(u_min, v_min, u_max, v_max)?
        .with_class(b.class_id())
        .with_score(b.score())
}

/// Places a box of known size, orientation and depth so that its projection
/// is centered on the 2D box.
///
/// The first estimate back-projects the 2D center at `depth`. The box is then
/// re-projected once and the center ray is shifted by the observed hull-center
/// residual.
pub fn fit_center_from_2d(
    k: &CameraIntrinsics,
    box2d: &Box2D,
    dims: Dims,
    orientation: Orientation,
    depth: f64,
) -> Result<Box3D> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::Domain(format!("depth {depth} must be finite and positive")));
    }
    let (u, v) = box2d.center();
    let build = |center: [f64; 3]| -> Result<Box3D> {
        Box3D::new(center, dims, orientation)?
            .with_class(box2d.class_id())
            .with_score(box2d.score())
    };
    // Shift the aim point by the hull-center residual. One step is usually
    // enough; strong perspective needs a few more.
    let (mut au, mut av) = (u, v);
    let mut fit = build(back_project(k, au, av, depth)?)?;
    for _ in 0..8 {
        let (hu, hv) = match project_box3d(k, &fit) {
            Ok(hull) => hull.center(),
            // Corners straddle the image plane; keep the current estimate.
            Err(Error::BehindCamera { .. }) => return Ok(fit),
            Err(e) => return Err(e),
        };
        if (hu - u).abs().max((hv - v).abs()) < 1e-3 {
            break;
        }
        au += u - hu;
        av += v - hv;
        fit = build(back_project(k, au, av, depth)?)?;
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bin(confidence: f64, cos_delta: f64, sin_delta: f64) -> BinOutput {
        BinOutput {
            confidence,
            cos_delta,
            sin_delta,
        }
    }

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::pinhole(100.0, 100.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn uniform_centers() {
        assert_eq!(uniform_bin_centers(2), vec![-90.0, 90.0]);
        assert_eq!(uniform_bin_centers(4), vec![-135.0, -45.0, 45.0, 135.0]);
        assert_eq!(uniform_bin_centers(1), vec![0.0]);
    }

    #[test]
    fn multibin_examples() {
        let one = MultiBinOutput::new(vec![bin(1.0, 1.0, 0.0)], vec![0.0]).unwrap();
        assert_eq!(decode_multibin(&one).unwrap(), 0.0);

        let two = MultiBinOutput::new(
            vec![bin(0.2, 1.0, 0.0), bin(0.8, 0.0, 1.0)],
            vec![-90.0, 90.0],
        )
        .unwrap();
        assert_eq!(decode_multibin(&two).unwrap(), -180.0);

        let four = MultiBinOutput::new(
            vec![
                bin(0.1, 1.0, 0.0),
                bin(0.7, 3f64.sqrt() / 2.0, 0.5),
                bin(0.1, 1.0, 0.0),
                bin(0.1, 1.0, 0.0),
            ],
            uniform_bin_centers(4),
        )
        .unwrap();
        assert!((decode_multibin(&four).unwrap() - -15.0).abs() < 1e-12);
    }

    #[test]
    fn multibin_ties_and_errors() {
        let tie = MultiBinOutput::new(
            vec![bin(0.5, 1.0, 0.0), bin(0.5, 1.0, 0.0)],
            vec![-90.0, 90.0],
        )
        .unwrap();
        assert_eq!(decode_multibin(&tie).unwrap(), -90.0);

        let nan = MultiBinOutput::new(
            vec![bin(f64::NAN, 1.0, 0.0), bin(f64::INFINITY, 1.0, 0.0)],
            vec![-90.0, 90.0],
        )
        .unwrap();
        assert!(matches!(decode_multibin(&nan), Err(Error::Domain(_))));

        let skip_nan = MultiBinOutput::new(
            vec![bin(f64::NAN, 1.0, 0.0), bin(0.1, 1.0, 0.0)],
            vec![-90.0, 90.0],
        )
        .unwrap();
        assert_eq!(decode_multibin(&skip_nan).unwrap(), 90.0);

        assert!(MultiBinOutput::new(vec![], vec![]).is_err());
        assert!(MultiBinOutput::new(vec![bin(1., 1., 0.); 2], vec![90.0, -90.0]).is_err());
        assert!(MultiBinOutput::new(vec![bin(1., 1., 0.)], vec![180.0]).is_err());
        assert!(MultiBinOutput::new(vec![bin(1., f64::NAN, 0.)], vec![0.0]).is_err());
    }

    #[test]
    fn depth_examples() {
        assert_eq!(decode_depth(0.0).unwrap(), 1.0);
        assert!((decode_depth(70f64.ln()).unwrap() - 70.0).abs() < 1e-12);
        assert!((decode_depth(15f64.ln()).unwrap() - 15.0).abs() < 1e-12);
        assert!(matches!(decode_depth(1000.0), Err(Error::Range(_))));
        assert!(matches!(decode_depth(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn dims_loss_examples() {
        let a = Dims::new(1.5, 1.6, 4.0);
        assert_eq!(dims_loss(a, a), 0.0);
        assert_eq!(dims_loss(Dims::new(2., 2., 2.), Dims::new(1., 1., 1.)), 3.0);
        let batch = [
            (Dims::new(2., 2., 2.), Dims::new(1., 1., 1.)),
            (Dims::new(2., 1., 1.), Dims::new(1., 1., 1.)),
        ];
        assert_eq!(dims_loss_batch(&batch).unwrap(), 2.0);
        assert!(dims_loss_batch(&[]).is_err());
    }

    #[test]
    fn projection_examples() {
        let unit = CameraIntrinsics::pinhole(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(project_point(&unit, [0.0, 0.0, 5.0]).unwrap(), (0.0, 0.0));
        assert_eq!(project_point(&k100(), [1.0, 0.0, 10.0]).unwrap(), (330.0, 240.0));
        assert_eq!(project_point(&k100(), [0.0, -2.0, 20.0]).unwrap(), (320.0, 230.0));
        assert!(matches!(
            project_point(&k100(), [0.0, 0.0, 0.0]),
            Err(Error::BehindCamera { .. })
        ));
        assert!(matches!(
            project_point(&k100(), [0.0, 0.0, -1.0]),
            Err(Error::BehindCamera { .. })
        ));
        // last row cancels z: w' = z - 5
        let odd = CameraIntrinsics::from_row_slice(&[
            1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., -5.,
        ])
        .unwrap();
        assert!(matches!(
            project_point(&odd, [0.0, 0.0, 5.0]),
            Err(Error::DegenerateProjection)
        ));
    }

    #[test]
    fn corner_examples() {
        let cube = Box3D::new([0.0, 0.0, 0.5], Dims::new(1., 1., 1.), Orientation::default())
            .unwrap();
        let corners = box3d_corners(&cube);
        for (i, c) in corners.iter().enumerate() {
            let s = |bit: usize| if i >> bit & 1 == 1 { 0.5 } else { -0.5 };
            assert_eq!(*c, [s(0), s(1), 0.5 + s(2)]);
        }

        let turned = Box3D::new(
            [0.0, 0.0, 10.0],
            Dims::new(2., 2., 2.),
            Orientation::new(90.0, 0.0, 0.0),
        )
        .unwrap();
        let c7 = box3d_corners(&turned)[7];
        for (got, want) in c7.iter().zip([1.0, 1.0, 9.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn projected_hull_examples() {
        let cube = |z: f64| {
            Box3D::new([0.0, 0.0, z], Dims::new(1., 1., 1.), Orientation::default()).unwrap()
        };
        let hull = project_box3d(&k100(), &cube(10.0)).unwrap();
        let half = 0.5 * 100.0 / 9.5;
        assert!((hull.x_min() - (320.0 - half)).abs() < 1e-9);
        assert!((hull.x_max() - (320.0 + half)).abs() < 1e-9);
        assert_eq!(hull.center(), (320.0, 240.0));
        let far = project_box3d(&k100(), &cube(20.0)).unwrap();
        assert!(far.area() < hull.area());

        let straddle = Box3D::new([0.0, 0.0, 0.2], Dims::new(1., 1., 1.), Orientation::default())
            .unwrap();
        assert!(matches!(
            project_box3d(&k100(), &straddle),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn fit_center_examples() {
        let dims = Dims::new(1.8, 1.6, 4.2);
        let b = Box2D::new(300.0, 220.0, 340.0, 260.0).unwrap();
        let fit = fit_center_from_2d(&k100(), &b, dims, Orientation::default(), 10.0).unwrap();
        assert_eq!(fit.center(), [0.0, 0.0, 10.0]);

        // the hull of an unrotated box is symmetric about its projected center
        let b = Box2D::new(320.0, 230.0, 340.0, 250.0).unwrap();
        let fit = fit_center_from_2d(&k100(), &b, dims, Orientation::default(), 10.0).unwrap();
        let first = back_project(&k100(), 330.0, 240.0, 10.0).unwrap();
        assert_eq!(first, [1.0, 0.0, 10.0]);
        let hull = project_box3d(&k100(), &fit).unwrap();
        let (u, v) = hull.center();
        assert!((u - 330.0).abs() < 1.0 && (v - 240.0).abs() < 1.0);

        assert!(matches!(
            fit_center_from_2d(&k100(), &b, dims, Orientation::default(), 0.0),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #[test]
        fn corner_centroid_is_center(
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in 1.0f64..50.0,
            w in 0.1f64..5.0, h in 0.1f64..5.0, l in 0.1f64..5.0,
            az in -180.0f64..180.0, el in -180.0f64..180.0, ro in -180.0f64..180.0,
        ) {
            let b = Box3D::new([x, y, z], Dims::new(w, h, l), Orientation::new(az, el, ro)).unwrap();
            let corners = box3d_corners(&b);
            for axis in 0..3 {
                let mean = corners.iter().map(|c| c[axis]).sum::<f64>() / 8.0;
                prop_assert!((mean - b.center()[axis]).abs() < 1e-9);
            }
        }

        #[test]
        fn dims_loss_nonnegative(a in proptest::array::uniform3(0.1f64..10.0),
                                 b in proptest::array::uniform3(0.1f64..10.0)) {
            let (p, t) = (Dims::new(a[0], a[1], a[2]), Dims::new(b[0], b[1], b[2]));
            let loss = dims_loss(p, t);
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(loss == 0.0, a == b);
        }

        #[test]
        fn multibin_confidence_scaling(confs in proptest::collection::vec(0.0f64..1.0, 1..8),
                                       scale in 0.01f64..100.0) {
            let n = confs.len();
            let bins: Vec<_> = confs.iter().map(|c| bin(*c, 0.9, 0.1)).collect();
            let scaled: Vec<_> = confs.iter().map(|c| bin(c * scale, 0.9, 0.1)).collect();
            let a = MultiBinOutput::new(bins, uniform_bin_centers(n)).unwrap();
            let b = MultiBinOutput::new(scaled, uniform_bin_centers(n)).unwrap();
            prop_assert_eq!(decode_multibin(&a).unwrap(), decode_multibin(&b).unwrap());
        }
    }
}
