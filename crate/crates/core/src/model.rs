//! Shared data types: feature maps, keypoints, 2D/3D boxes, the camera model
//! and the class taxonomy.
//!
//! Every type here is immutable once constructed. Constructors validate their
//! invariants and reject bad input instead of repairing it.

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};

/// What a feature map carries. Heatmaps are restricted to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapRole {
    Heatmap,
    Embedding,
    Offset,
    Generic,
}

impl MapRole {
    pub fn tag(self) -> u8 {
        match self {
            MapRole::Heatmap => 0,
            MapRole::Embedding => 1,
            MapRole::Offset => 2,
            MapRole::Generic => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => MapRole::Heatmap,
            1 => MapRole::Embedding,
            2 => MapRole::Offset,
            3 => MapRole::Generic,
            _ => return None,
        })
    }
}

/// Dense `H x W x C` grid stored row-major as `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    role: MapRole,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        role: MapRole,
        data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "feature map dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Shape("feature map size overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} values for {height}x{width}x{channels}, got {}",
                data.len()
            )));
        }
        if role == MapRole::Heatmap {
            if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain(format!(
                    "heatmap value {} at flat index {i} is outside [0, 1]",
                    data[i]
                )));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            role,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, role: MapRole) -> Result<Self> {
        let n = height.saturating_mul(width).saturating_mul(channels);
        Self::new(height, width, channels, role, vec![0.0; n])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        role: MapRole,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, role, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn role(&self) -> MapRole {
        self.role
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn same_grid(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> Result<f32> {
        self.check_channel(channel)?;
        if row >= self.height {
            return Err(Error::OutOfBounds {
                axis: Axis::Row,
                index: row,
                len: self.height,
            });
        }
        if col >= self.width {
            return Err(Error::OutOfBounds {
                axis: Axis::Col,
                index: col,
                len: self.width,
            });
        }
        Ok(self.at(row, col, channel))
    }

    pub(crate) fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.channels {
            return Err(Error::OutOfBounds {
                axis: Axis::Channel,
                index: channel,
                len: self.channels,
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn at(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Copies one channel into a contiguous row-major plane.
    pub fn channel_plane(&self, channel: usize) -> Result<Vec<f32>> {
        self.check_channel(channel)?;
        Ok(self
            .data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect())
    }

    /// Interleaves single-channel planes of identical size into one map.
    pub fn from_planes(
        height: usize,
        width: usize,
        role: MapRole,
        planes: &[Vec<f32>],
    ) -> Result<Self> {
        let channels = planes.len();
        if planes.iter().any(|p| p.len() != height * width) {
            return Err(Error::Shape("plane size does not match H*W".into()));
        }
        let mut data = vec![0.0; height * width * channels];
        for (ch, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + ch] = *v;
            }
        }
        Self::new(height, width, channels, role, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointKind {
    TopLeft,
    BottomRight,
    Center,
}

/// A heatmap peak in feature-map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub kind: KeypointKind,
    pub class_id: usize,
    pub row: usize,
    pub col: usize,
    pub score: f64,
    pub tag: f64,
}

fn check_score(score: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::Domain(format!("score {score} is outside [0, 1]")));
    }
    Ok(score)
}

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Box2DRepr")]
pub struct Box2D {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    class_id: usize,
    score: f64,
}

#[derive(Deserialize)]
struct Box2DRepr {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    #[serde(default)]
    class_id: usize,
    #[serde(default = "one")]
    score: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<Box2DRepr> for Box2D {
    type Error = Error;

    fn try_from(r: Box2DRepr) -> Result<Self> {
        Box2D::new(r.x_min, r.y_min, r.x_max, r.y_max)?
            .with_class(r.class_id)
            .with_score(r.score)
    }
}

impl Box2D {
    /// Class 0, score 1.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("box coordinates must be finite".into()));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::Domain(format!(
                "box extents are negative: [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id: 0,
            score: 1.0,
        })
    }

    pub fn with_class(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn with_score(mut self, score: f64) -> Result<Self> {
        self.score = check_score(score)?;
        Ok(self)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }
    pub fn class_id(&self) -> usize {
        self.class_id
    }
    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn corners(&self) -> [(f64, f64); 2] {
        [(self.x_min, self.y_min), (self.x_max, self.y_max)]
    }
}

/// Box extents in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub w: f64,
    pub h: f64,
    pub l: f64,
}

impl Dims {
    pub fn new(w: f64, h: f64, l: f64) -> Self {
        Self { w, h, l }
    }

    fn validate(&self) -> Result<()> {
        if [self.w, self.h, self.l].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "dimensions must be finite and positive, got ({}, {}, {})",
                self.w, self.h, self.l
            )))
        }
    }
}

/// Azimuth, elevation and roll in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Orientation {
    pub azimuth: f64,
    pub elevation: f64,
    pub roll: f64,
}

impl Orientation {
    pub fn new(azimuth: f64, elevation: f64, roll: f64) -> Self {
        Self {
            azimuth,
            elevation,
            roll,
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            azimuth: normalize_angle(self.azimuth)?,
            elevation: normalize_angle(self.elevation)?,
            roll: normalize_angle(self.roll)?,
        })
    }
}

/// 3D box in the camera frame: center (m), dims (m), orientation (deg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Box3DRepr")]
pub struct Box3D {
    center: [f64; 3],
    dims: Dims,
    orientation: Orientation,
    class_id: usize,
    score: f64,
}

#[derive(Deserialize)]
struct Box3DRepr {
    center: [f64; 3],
    dims: Dims,
    orientation: Orientation,
    #[serde(default)]
    class_id: usize,
    #[serde(default = "one")]
    score: f64,
}

impl TryFrom<Box3DRepr> for Box3D {
    type Error = Error;

    fn try_from(r: Box3DRepr) -> Result<Self> {
        Box3D::new(r.center, r.dims, r.orientation)?
            .with_class(r.class_id)
            .with_score(r.score)
    }
}

impl Box3D {
    /// Angles are normalized to `[-180, 180)`.
    pub fn new(center: [f64; 3], dims: Dims, orientation: Orientation) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("box center must be finite".into()));
        }
        if center[2] <= 0.0 {
            return Err(Error::BehindCamera { z: center[2] });
        }
        dims.validate()?;
        Ok(Self {
            center,
            dims,
            orientation: orientation.normalized()?,
            class_id: 0,
            score: 1.0,
        })
    }

    pub fn with_class(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn with_score(mut self, score: f64) -> Result<Self> {
        self.score = check_score(score)?;
        Ok(self)
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }
    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn orientation(&self) -> Orientation {
        self.orientation
    }
    pub fn class_id(&self) -> usize {
        self.class_id
    }
    pub fn score(&self) -> f64 {
        self.score
    }
}

/// 3x4 projection matrix from the camera frame to homogeneous pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 3]", into = "[[f64; 4]; 3]")]
pub struct CameraIntrinsics {
    p: Matrix3x4<f64>,
}

impl CameraIntrinsics {
    pub fn new(p: Matrix3x4<f64>) -> Result<Self> {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("projection matrix must be finite".into()));
        }
        if p[(0, 0)] == 0.0 || p[(1, 1)] == 0.0 {
            return Err(Error::Domain("focal entries must be nonzero".into()));
        }
        Ok(Self { p })
    }

    pub fn from_row_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 12 {
            return Err(Error::Shape(format!(
                "projection matrix needs 12 values, got {}",
                values.len()
            )));
        }
        Self::new(Matrix3x4::from_row_slice(values))
    }

    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::from_row_slice(&[
            fx, 0.0, cx, 0.0, //
            0.0, fy, cy, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ])
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.p
    }

    pub fn fx(&self) -> f64 {
        self.p[(0, 0)]
    }
    pub fn fy(&self) -> f64 {
        self.p[(1, 1)]
    }
    pub fn cx(&self) -> f64 {
        self.p[(0, 2)]
    }
    pub fn cy(&self) -> f64 {
        self.p[(1, 2)]
    }

    pub fn rows(&self) -> [[f64; 4]; 3] {
        let mut out = [[0.0; 4]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.p[(r, c)];
            }
        }
        out
    }

    pub fn row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, v) in self.rows().iter().flatten().enumerate() {
            out[i] = *v;
        }
        out
    }
}

impl TryFrom<[[f64; 4]; 3]> for CameraIntrinsics {
    type Error = Error;

    fn try_from(rows: [[f64; 4]; 3]) -> Result<Self> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(&flat)
    }
}

impl From<CameraIntrinsics> for [[f64; 4]; 3] {
    fn from(k: CameraIntrinsics) -> Self {
        k.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuperCategory {
    Air,
    Ground,
}

impl SuperCategory {
    pub fn name(self) -> &'static str {
        match self {
            SuperCategory::Air => "air",
            SuperCategory::Ground => "ground",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub super_category: SuperCategory,
}

/// Ordered class list; the class index is the heatmap channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassInfo>", into = "Vec<ClassInfo>")]
pub struct ClassTaxonomy {
    classes: Vec<ClassInfo>,
}

impl ClassTaxonomy {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("taxonomy needs at least one class".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Config(format!("duplicate class name {:?}", c.name)));
            }
        }
        Ok(Self { classes })
    }

    fn from_pairs(pairs: &[(&str, SuperCategory)]) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|(n, s)| ClassInfo {
                    name: (*n).to_string(),
                    super_category: *s,
                })
                .collect(),
        )
        .expect("static taxonomy is valid")
    }

    /// Classes used by the synthetic scene generator.
    pub fn synthetic() -> Self {
        use SuperCategory::*;
        Self::from_pairs(&[
            ("Car", Ground),
            ("Truck", Ground),
            ("Drone", Air),
            ("Helicopter", Air),
        ])
    }

    pub fn kitti() -> Self {
        use SuperCategory::*;
        Self::from_pairs(&[("Car", Ground), ("Pedestrian", Ground), ("Cyclist", Ground)])
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.classes.get(class_id).map(|c| c.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn super_of(&self, class_id: usize) -> Option<SuperCategory> {
        self.classes.get(class_id).map(|c| c.super_category)
    }

    pub fn ids_in(&self, sup: SuperCategory) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.super_category == sup)
            .map(|(i, _)| i)
    }

    /// Heatmap channel count must equal the class count.
    pub fn check_heatmap(&self, map: &FeatureMap) -> Result<()> {
        if map.channels() != self.len() {
            return Err(Error::Config(format!(
                "heatmap has {} channels but the taxonomy has {} classes",
                map.channels(),
                self.len()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<ClassInfo>> for ClassTaxonomy {
    type Error = Error;

    fn try_from(v: Vec<ClassInfo>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassTaxonomy> for Vec<ClassInfo> {
    fn from(t: ClassTaxonomy) -> Self {
        t.classes
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn normalize_angle(deg: f64) -> Result<f64> {
    if !deg.is_finite() {
        return Err(Error::Domain(format!("angle {deg} is not finite")));
    }
    if (-180.0..180.0).contains(&deg) {
        return Ok(deg);
    }
    let r = deg.rem_euclid(360.0);
    Ok(if r >= 180.0 { r - 360.0 } else { r })
}
