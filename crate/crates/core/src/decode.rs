//! Anchor-free decode: heatmap peaks, associative-embedding grouping of
//! corners, offset refinement, center validation and the optional 3D lift.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bundle::{Head3D, MapBundle, PerKind};
use crate::error::{Error, Result};
use crate::geometry::{
    decode_depth, decode_multibin, fit_center_from_2d, uniform_bin_centers, BinOutput,
    MultiBinOutput,
};
use crate::model::{
    Box2D, Box3D, CameraIntrinsics, Dims, FeatureMap, Keypoint, KeypointKind, MapRole,
    Orientation,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakExtractionConfig {
    score_threshold: f64,
    nms_window: usize,
    top_k: usize,
}

impl PeakExtractionConfig {
    pub fn new(score_threshold: f64, nms_window: usize, top_k: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score_threshold) {
            return Err(Error::Config(format!(
                "score threshold {score_threshold} is outside [0, 1]"
            )));
        }
        if nms_window % 2 == 0 {
            return Err(Error::Config(format!(
                "NMS window must be odd and >= 1, got {nms_window}"
            )));
        }
        if top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(Self {
            score_threshold,
            nms_window,
            top_k,
        })
    }

    pub fn score_threshold(&self) -> f64 {
        self.score_threshold
    }
    pub fn nms_window(&self) -> usize {
        self.nms_window
    }
    pub fn top_k(&self) -> usize {
        self.top_k
    }
}

impl Default for PeakExtractionConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.3,
            nms_window: 3,
            top_k: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    theta: f64,
    geometric_gate: bool,
}

impl GroupingConfig {
    pub fn new(theta: f64, geometric_gate: bool) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::Config(format!(
                "tag threshold must be finite and positive, got {theta}"
            )));
        }
        Ok(Self {
            theta,
            geometric_gate,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn geometric_gate(&self) -> bool {
        self.geometric_gate
    }
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            geometric_gate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub peaks: PeakExtractionConfig,
    pub grouping: GroupingConfig,
    /// Input pixels per feature-map cell.
    pub stride: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            peaks: PeakExtractionConfig::default(),
            grouping: GroupingConfig::default(),
            stride: 1,
        }
    }
}

/// Sub-cell displacement in feature-map units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetVector {
    pub o_x: f64,
    pub o_y: f64,
}

impl OffsetVector {
    pub fn new(o_x: f64, o_y: f64) -> Result<Self> {
        if !o_x.is_finite() || !o_y.is_finite() {
            return Err(Error::Domain(format!("offset ({o_x}, {o_y}) is not finite")));
        }
        Ok(Self { o_x, o_y })
    }
}

/// A validated corner pair with its center keypoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub box2d: Box2D,
    pub top_left: Keypoint,
    pub bottom_right: Keypoint,
    pub center: Keypoint,
    /// Refined center keypoint position in image pixels.
    pub center_px: (f64, f64),
    pub box3d: Option<Box3D>,
}

/// Score descending, then row, then col, then class.
fn peak_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.row.cmp(&b.row))
        .then(a.col.cmp(&b.col))
        .then(a.class_id.cmp(&b.class_id))
}

fn is_window_max(plane: &[f32], h: usize, w: usize, r: usize, c: usize, half: usize) -> bool {
    let v = plane[r * w + c];
    for rr in r.saturating_sub(half)..=(r + half).min(h - 1) {
        for cc in c.saturating_sub(half)..=(c + half).min(w - 1) {
            if (rr, cc) == (r, c) {
                continue;
            }
            let n = plane[rr * w + cc];
            // equal neighbours earlier in (row, col) order win the tie
            if n > v || (n == v && (rr, cc) < (r, c)) {
                return false;
            }
        }
    }
    true
}

/// Local maxima of every heatmap channel.
///
/// A cell is kept when it beats every other cell of its `nms_window`
/// neighbourhood (equal values go to the lexicographically smallest cell) and
/// its score reaches the threshold. At most `top_k` peaks per channel.
pub fn extract_peaks(
    heatmap: &FeatureMap,
    cfg: &PeakExtractionConfig,
    kind: KeypointKind,
) -> Result<Vec<Keypoint>> {
    if heatmap.role() != MapRole::Heatmap {
        return Err(Error::Config(format!(
            "peak extraction needs a heatmap, got a {:?} map",
            heatmap.role()
        )));
    }
    let (h, w) = (heatmap.height(), heatmap.width());
    let half = cfg.nms_window / 2;
    let mut all = Vec::new();
    for class_id in 0..heatmap.channels() {
        let plane = heatmap.channel_plane(class_id)?;
        let mut peaks: Vec<Keypoint> = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let score = plane[r * w + c] as f64;
                if score < cfg.score_threshold || !is_window_max(&plane, h, w, r, c, half) {
                    continue;
                }
                peaks.push(Keypoint {
                    kind,
                    class_id,
                    row: r,
                    col: c,
                    score,
                    tag: 0.0,
                });
            }
        }
        peaks.sort_by(peak_order);
        peaks.truncate(cfg.top_k);
        all.extend(peaks);
    }
    all.sort_by(peak_order);
    Ok(all)
}

/// Reads each keypoint's tag from a 1-channel embedding map.
pub fn attach_tags(keypoints: &mut [Keypoint], embedding: &FeatureMap) -> Result<()> {
    if embedding.channels() != 1 {
        return Err(Error::Config(format!(
            "embedding map must have 1 channel, got {}",
            embedding.channels()
        )));
    }
    for kp in keypoints {
        kp.tag = embedding.get(kp.row, kp.col, 0)? as f64;
    }
    Ok(())
}

/// Greedy best-first corner matching by tag distance.
///
/// Candidate pairs of the same class are ranked by `|t_i - t_j|` ascending
/// (then by input positions) and accepted while both corners are unused and
/// the distance is below `theta`. With the geometric gate on, the top-left
/// corner must not lie below or right of the bottom-right corner.
pub fn group_corners(
    top_lefts: &[Keypoint],
    bottom_rights: &[Keypoint],
    cfg: &GroupingConfig,
) -> Vec<(Keypoint, Keypoint)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, tl) in top_lefts.iter().enumerate() {
        for (j, br) in bottom_rights.iter().enumerate() {
            if tl.class_id != br.class_id {
                continue;
            }
            if cfg.geometric_gate && (tl.row > br.row || tl.col > br.col) {
                continue;
            }
            let d = (tl.tag - br.tag).abs();
            if d < cfg.theta {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_tl = vec![false; top_lefts.len()];
    let mut used_br = vec![false; bottom_rights.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_tl[i] || used_br[j] {
            continue;
        }
        used_tl[i] = true;
        used_br[j] = true;
        pairs.push((top_lefts[i], bottom_rights[j]));
    }
    pairs
}

pub fn offset_at(kp: &Keypoint, offsets: &FeatureMap) -> Result<OffsetVector> {
    if offsets.channels() != 2 {
        return Err(Error::Config(format!(
            "offset map must have 2 channels (o_x, o_y), got {}",
            offsets.channels()
        )));
    }
    OffsetVector::new(
        offsets.get(kp.row, kp.col, 0)? as f64,
        offsets.get(kp.row, kp.col, 1)? as f64,
    )
}

/// Image-pixel position `((col + o_x) * stride, (row + o_y) * stride)`.
pub fn refine_with_offsets(kp: &Keypoint, offsets: &FeatureMap, stride: u32) -> Result<(f64, f64)> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let o = offset_at(kp, offsets)?;
    let s = stride as f64;
    Ok(((kp.col as f64 + o.o_x) * s, (kp.row as f64 + o.o_y) * s))
}

/// Middle third of the box in each dimension, inclusive.
pub fn central_region(b: &Box2D) -> (f64, f64, f64, f64) {
    let (w3, h3) = (b.width() / 3.0, b.height() / 3.0);
    (b.x_min() + w3, b.y_min() + h3, b.x_max() - w3, b.y_max() - h3)
}

/// Builds boxes from corner pairs and keeps those whose central region holds a
/// same-class center keypoint.
///
/// Among several valid centers the highest-scoring one is attached (ties go
/// to the one nearest the box center, then peak order). Box score is the mean
/// of the three keypoint scores.
pub fn assemble_boxes(
    pairs: &[(Keypoint, Keypoint)],
    centers: &[Keypoint],
    offsets: &PerKind<FeatureMap>,
    stride: u32,
) -> Result<Vec<Detection>> {
    let refined_centers = centers
        .iter()
        .map(|c| refine_with_offsets(c, &offsets.center, stride))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (tl, br) in pairs {
        let (x0, y0) = refine_with_offsets(tl, &offsets.top_left, stride)?;
        let (x1, y1) = refine_with_offsets(br, &offsets.bottom_right, stride)?;
        let Ok(shape) = Box2D::new(x0, y0, x1, y1) else {
            continue;
        };
        let (rx0, ry0, rx1, ry1) = central_region(&shape);
        let (bx, by) = shape.center();
        let mut best: Option<(usize, f64)> = None;
        for (i, (c, &(u, v))) in centers.iter().zip(&refined_centers).enumerate() {
            if c.class_id != tl.class_id || u < rx0 || u > rx1 || v < ry0 || v > ry1 {
                continue;
            }
            let dist = (u - bx).powi(2) + (v - by).powi(2);
            let better = match best {
                None => true,
                Some((j, d)) => match c.score.total_cmp(&centers[j].score) {
                    Ordering::Greater => true,
                    Ordering::Equal => dist < d,
                    Ordering::Less => false,
                },
            };
            if better {
                best = Some((i, dist));
            }
        }
        let Some((ci, _)) = best else { continue };
        let center = centers[ci];
        let score = ((tl.score + br.score + center.score) / 3.0).clamp(0.0, 1.0);
        out.push(Detection {
            box2d: shape.with_class(tl.class_id).with_score(score)?,
            top_left: *tl,
            bottom_right: *br,
            center,
            center_px: refined_centers[ci],
            box3d: None,
        });
    }
    Ok(out)
}

/// Reads the MultiBin output for one angle (0 azimuth, 1 elevation, 2 roll).
pub fn multibin_at(head: &Head3D, row: usize, col: usize, angle: usize) -> Result<MultiBinOutput> {
    let n = head.bins();
    if n == 0 {
        return Err(Error::Config("orientation map has no bins".into()));
    }
    let mut bins = Vec::with_capacity(n);
    for i in 0..n {
        let base = angle * 3 * n + 3 * i;
        bins.push(BinOutput {
            confidence: head.orientation.get(row, col, base)? as f64,
            cos_delta: head.orientation.get(row, col, base + 1)? as f64,
            sin_delta: head.orientation.get(row, col, base + 2)? as f64,
        });
    }
    MultiBinOutput::new(bins, uniform_bin_centers(n))
}

/// Decodes depth, dims and orientation at the center cell and fits the 3D
/// center to the detected 2D box.
pub fn lift_to_3d(det: &Detection, head: &Head3D, camera: &CameraIntrinsics) -> Result<Box3D> {
    let (r, c) = (det.center.row, det.center.col);
    let depth = decode_depth(head.depth.get(r, c, 0)? as f64)?;
    let dims = Dims::new(
        head.dims.get(r, c, 0)? as f64,
        head.dims.get(r, c, 1)? as f64,
        head.dims.get(r, c, 2)? as f64,
    );
    let orientation = Orientation::new(
        decode_multibin(&multibin_at(head, r, c, 0)?)?,
        decode_multibin(&multibin_at(head, r, c, 1)?)?,
        decode_multibin(&multibin_at(head, r, c, 2)?)?,
    );
    fit_center_from_2d(camera, &det.box2d, dims, orientation, depth)
}

/// Full per-frame decode. Detections whose 3D head output is unusable keep
/// `box3d = None`.
pub fn decode_frame(
    bundle: &MapBundle,
    cfg: &DecodeConfig,
    camera: Option<&CameraIntrinsics>,
) -> Result<Vec<Detection>> {
    bundle.validate()?;
    let mut tls = extract_peaks(&bundle.heatmaps.top_left, &cfg.peaks, KeypointKind::TopLeft)?;
    let mut brs = extract_peaks(
        &bundle.heatmaps.bottom_right,
        &cfg.peaks,
        KeypointKind::BottomRight,
    )?;
    let centers = extract_peaks(&bundle.heatmaps.center, &cfg.peaks, KeypointKind::Center)?;
    attach_tags(&mut tls, &bundle.embeddings.top_left)?;
    attach_tags(&mut brs, &bundle.embeddings.bottom_right)?;
    let pairs = group_corners(&tls, &brs, &cfg.grouping);
    let mut dets = assemble_boxes(&pairs, &centers, &bundle.offsets, cfg.stride)?;
    if let (Some(head), Some(k)) = (&bundle.head3d, camera) {
        for d in &mut dets {
            d.box3d = lift_to_3d(d, head, k).ok();
        }
    }
    dets.sort_by(|a, b| b.box2d.score().total_cmp(&a.box2d.score()));
    Ok(dets)
}
