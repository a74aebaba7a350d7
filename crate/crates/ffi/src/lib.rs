//! C ABI over `det3d`.
//!
//! Every function returns a [`Det3dStatus`]. On failure the message is
//! available from [`det3d_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_read_file`/`det3d_decode_*` and released with
//! the matching `*_free`; freeing a null handle is a no-op.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use det3d::bundle::MapBundle;
use det3d::decode::{decode_frame, DecodeConfig, Detection, GroupingConfig, PeakExtractionConfig};
use det3d::geometry::{back_project, decode_multibin, project_point, uniform_bin_centers, BinOutput, MultiBinOutput};
use det3d::metrics::{self, Interpolation, MatchPolicy};
use det3d::model::{Box2D, CameraIntrinsics, FeatureMap, MapRole};
use det3d::pooling::{self, Corner, PoolingDirection, ScanAxis, ScanSense};
use det3d::{fmap, Error};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Det3dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfBounds = 3,
    Shape = 4,
    Domain = 5,
    Config = 6,
    BehindCamera = 7,
    Format = 8,
    Parse = 9,
    Io = 10,
    Validation = 11,
    Internal = 99,
}

/// Feature map handle.
pub struct Det3dFeatureMap(FeatureMap);

/// Camera projection matrix handle.
pub struct Det3dCamera(CameraIntrinsics);

/// Decoded detections handle.
pub struct Det3dDetections(Vec<Detection>);

/// Image box in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det3dBox2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class_id: u32,
    pub score: f64,
}

/// 3D box in the camera frame; angles in degrees.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det3dBox3D {
    pub center: [f64; 3],
    /// Width, height, length in metres.
    pub dims: [f64; 3],
    /// Azimuth, elevation, roll.
    pub orientation: [f64; 3],
    pub class_id: u32,
    pub score: f64,
}

/// Settings for `det3d_decode_bundle_dir`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct Det3dDecodeConfig {
    pub score_threshold: f64,
    pub nms_window: u32,
    pub top_k: u32,
    pub theta: f64,
    /// Nonzero to require the top-left corner above and left of the bottom-right.
    pub geometric_gate: u8,
    pub stride: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> Det3dStatus {
    match e {
        Error::OutOfBounds { .. } => Det3dStatus::OutOfBounds,
        Error::Shape(_) => Det3dStatus::Shape,
        Error::Domain(_) | Error::Range(_) | Error::DegenerateProjection => Det3dStatus::Domain,
        Error::Config(_) | Error::Render(_) | Error::Generation { .. } => Det3dStatus::Config,
        Error::BehindCamera { .. } => Det3dStatus::BehindCamera,
        Error::Format { .. } => Det3dStatus::Format,
        Error::Parse { .. } | Error::Json { .. } => Det3dStatus::Parse,
        Error::Io { .. } => Det3dStatus::Io,
        Error::Validation(_) => Det3dStatus::Validation,
    }
}

struct Fail(Det3dStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(Det3dStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(Det3dStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> Det3dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            Det3dStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error".into());
            Det3dStatus::Internal
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn to_box(b: &Det3dBox2D) -> Result<Box2D, Fail> {
    Ok(Box2D::new(b.x_min, b.y_min, b.x_max, b.y_max)?
        .with_class(b.class_id as usize)
        .with_score(b.score)?)
}

fn from_box(b: &Box2D) -> Det3dBox2D {
    Det3dBox2D {
        x_min: b.x_min(),
        y_min: b.y_min(),
        x_max: b.x_max(),
        y_max: b.y_max(),
        class_id: b.class_id() as u32,
        score: b.score(),
    }
}

fn boxes(p: *const Det3dBox2D, n: usize, what: &str) -> Result<Vec<Box2D>, Fail> {
    unsafe { slice(p, n, what) }?.iter().map(to_box).collect()
}

fn give<T>(dst: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = unsafe { out(dst, "output handle") }?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn det3d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a map from `h * w * c` row-major values. `role`: 0 heatmap,
/// 1 embedding, 2 offset, 3 generic.
#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_new(
    height: usize,
    width: usize,
    channels: usize,
    role: u8,
    data: *const f32,
    len: usize,
    out_map: *mut *mut Det3dFeatureMap,
) -> Det3dStatus {
    guard(|| {
        let role = MapRole::from_tag(role).ok_or_else(|| invalid(format!("unknown map role {role}")))?;
        let values = slice(data, len, "data")?.to_vec();
        give(out_map, Det3dFeatureMap(FeatureMap::new(height, width, channels, role, values)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_free(map: *mut Det3dFeatureMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_shape(
    map: *const Det3dFeatureMap,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> Det3dStatus {
    guard(|| {
        let m = &as_ref(map, "map")?.0;
        *out(height, "height")? = m.height();
        *out(width, "width")? = m.width();
        *out(channels, "channels")? = m.channels();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_get(
    map: *const Det3dFeatureMap,
    row: usize,
    col: usize,
    channel: usize,
    value: *mut f32,
) -> Det3dStatus {
    guard(|| {
        *out(value, "value")? = as_ref(map, "map")?.0.get(row, col, channel)?;
        Ok(())
    })
}

/// Borrowed pointer to the `h * w * c` values; valid while the map lives.
#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_data(map: *const Det3dFeatureMap) -> *const f32 {
    map.as_ref().map_or(ptr::null(), |m| m.0.data().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_read_file(
    path: *const c_char,
    out_map: *mut *mut Det3dFeatureMap,
) -> Det3dStatus {
    guard(|| give(out_map, Det3dFeatureMap(fmap::read_file(&path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn det3d_feature_map_write_file(
    map: *const Det3dFeatureMap,
    path: *const c_char,
) -> Det3dStatus {
    guard(|| {
        let m = &as_ref(map, "map")?.0;
        det3d::io::write_atomic(&path_arg(path)?, &fmap::encode(m))?;
        Ok(())
    })
}

/// `axis`: 0 horizontal, 1 vertical. `sense`: 0 toward increasing index,
/// 1 toward decreasing index.
#[no_mangle]
pub unsafe extern "C" fn det3d_directional_max_scan(
    map: *const Det3dFeatureMap,
    channel: usize,
    axis: u32,
    sense: u32,
    out_map: *mut *mut Det3dFeatureMap,
) -> Det3dStatus {
    guard(|| {
        let axis = match axis {
            0 => ScanAxis::Horizontal,
            1 => ScanAxis::Vertical,
            a => return Err(invalid(format!("unknown scan axis {a}"))),
        };
        let sense = match sense {
            0 => ScanSense::TowardIncreasingIndex,
            1 => ScanSense::TowardDecreasingIndex,
            s => return Err(invalid(format!("unknown scan sense {s}"))),
        };
        let m = &as_ref(map, "map")?.0;
        let r = pooling::directional_max_scan(m, channel, PoolingDirection::new(axis, sense))?;
        give(out_map, Det3dFeatureMap(r))
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_center_pool(
    map: *const Det3dFeatureMap,
    channel: usize,
    out_map: *mut *mut Det3dFeatureMap,
) -> Det3dStatus {
    guard(|| {
        let r = pooling::center_pool(&as_ref(map, "map")?.0, channel)?;
        give(out_map, Det3dFeatureMap(r))
    })
}

/// `corner`: 0 top-left, 1 bottom-right.
#[no_mangle]
pub unsafe extern "C" fn det3d_cascade_corner_pool(
    map: *const Det3dFeatureMap,
    channel: usize,
    corner: u32,
    out_map: *mut *mut Det3dFeatureMap,
) -> Det3dStatus {
    guard(|| {
        let corner = match corner {
            0 => Corner::TopLeft,
            1 => Corner::BottomRight,
            c => return Err(invalid(format!("unknown corner {c}"))),
        };
        let r = pooling::cascade_corner_pool(&as_ref(map, "map")?.0, channel, corner)?;
        give(out_map, Det3dFeatureMap(r))
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_iou(a: *const Det3dBox2D, b: *const Det3dBox2D, value: *mut f64) -> Det3dStatus {
    guard(|| {
        let (a, b) = (to_box(as_ref(a, "a")?)?, to_box(as_ref(b, "b")?)?);
        *out(value, "value")? = metrics::iou(&a, &b);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_diou(a: *const Det3dBox2D, b: *const Det3dBox2D, value: *mut f64) -> Det3dStatus {
    guard(|| {
        let (a, b) = (to_box(as_ref(a, "a")?)?, to_box(as_ref(b, "b")?)?);
        *out(value, "value")? = metrics::diou(&a, &b);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_loss_diou(
    a: *const Det3dBox2D,
    b: *const Det3dBox2D,
    value: *mut f64,
) -> Det3dStatus {
    guard(|| {
        let (a, b) = (to_box(as_ref(a, "a")?)?, to_box(as_ref(b, "b")?)?);
        *out(value, "value")? = metrics::loss_diou(&a, &b);
        Ok(())
    })
}

/// Scale-invariant log-depth error over `n` depth pairs.
#[no_mangle]
pub unsafe extern "C" fn det3d_sie(
    truth: *const f64,
    pred: *const f64,
    n: usize,
    value: *mut f64,
) -> Det3dStatus {
    guard(|| {
        let t = slice(truth, n, "truth")?;
        let p = slice(pred, n, "pred")?;
        *out(value, "value")? = metrics::sie(t, p)?;
        Ok(())
    })
}

/// Single-class AP of one frame. `interpolation`: 0 all-point, 1 eleven-point.
/// `defined` is set to 0 when there are neither detections nor truths.
#[no_mangle]
pub unsafe extern "C" fn det3d_average_precision(
    dets: *const Det3dBox2D,
    n_dets: usize,
    truths: *const Det3dBox2D,
    n_truths: usize,
    iou_threshold: f64,
    interpolation: u32,
    value: *mut f64,
    defined: *mut u8,
) -> Det3dStatus {
    guard(|| {
        let interp = match interpolation {
            0 => Interpolation::AllPoint,
            1 => Interpolation::ElevenPoint,
            i => return Err(invalid(format!("unknown interpolation {i}"))),
        };
        let policy = MatchPolicy::new(iou_threshold, interp)?;
        let d = boxes(dets, n_dets, "dets")?;
        let t = boxes(truths, n_truths, "truths")?;
        let ap = metrics::average_precision(&d, &t, &policy);
        *out(value, "value")? = ap.unwrap_or(0.0);
        *out(defined, "defined")? = ap.is_some() as u8;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_mean_average_precision(
    per_class: *const f64,
    n: usize,
    value: *mut f64,
) -> Det3dStatus {
    guard(|| {
        let map = slice(per_class, n, "per_class")?
            .iter()
            .copied()
            .enumerate()
            .collect();
        *out(value, "value")? = metrics::mean_average_precision(&map)?;
        Ok(())
    })
}

/// Angle in degrees from `n` bins with uniform centers.
#[no_mangle]
pub unsafe extern "C" fn det3d_decode_multibin(
    confidence: *const f64,
    cos_delta: *const f64,
    sin_delta: *const f64,
    n: usize,
    angle: *mut f64,
) -> Det3dStatus {
    guard(|| {
        let (c, co, si) = (
            slice(confidence, n, "confidence")?,
            slice(cos_delta, n, "cos_delta")?,
            slice(sin_delta, n, "sin_delta")?,
        );
        let bins = (0..n)
            .map(|i| BinOutput {
                confidence: c[i],
                cos_delta: co[i],
                sin_delta: si[i],
            })
            .collect();
        *out(angle, "angle")? = decode_multibin(&MultiBinOutput::new(bins, uniform_bin_centers(n))?)?;
        Ok(())
    })
}

/// Camera from a row-major 3x4 projection matrix (12 values).
#[no_mangle]
pub unsafe extern "C" fn det3d_camera_new(p: *const f64, out_camera: *mut *mut Det3dCamera) -> Det3dStatus {
    guard(|| {
        let values = slice(p, 12, "p")?;
        give(out_camera, Det3dCamera(CameraIntrinsics::from_row_slice(values)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_camera_free(camera: *mut Det3dCamera) {
    if !camera.is_null() {
        drop(Box::from_raw(camera));
    }
}

#[no_mangle]
pub unsafe extern "C" fn det3d_project_point(
    camera: *const Det3dCamera,
    point: *const f64,
    u: *mut f64,
    v: *mut f64,
) -> Det3dStatus {
    guard(|| {
        let k = &as_ref(camera, "camera")?.0;
        let p = slice(point, 3, "point")?;
        let (pu, pv) = project_point(k, [p[0], p[1], p[2]])?;
        *out(u, "u")? = pu;
        *out(v, "v")? = pv;
        Ok(())
    })
}

/// Writes the camera-frame point with depth `z` seen at pixel `(u, v)` into
/// `point[0..3]`.
#[no_mangle]
pub unsafe extern "C" fn det3d_back_project(
    camera: *const Det3dCamera,
    u: f64,
    v: f64,
    z: f64,
    point: *mut f64,
) -> Det3dStatus {
    guard(|| {
        let k = &as_ref(camera, "camera")?.0;
        if point.is_null() {
            return Err(null("point"));
        }
        let p = back_project(k, u, v, z)?;
        std::slice::from_raw_parts_mut(point, 3).copy_from_slice(&p);
        Ok(())
    })
}

/// Decodes a directory of FMAP files. `camera` may be null, in which case
/// no 3D boxes are produced.
#[no_mangle]
pub unsafe extern "C" fn det3d_decode_bundle_dir(
    path: *const c_char,
    config: *const Det3dDecodeConfig,
    camera: *const Det3dCamera,
    out_detections: *mut *mut Det3dDetections,
) -> Det3dStatus {
    guard(|| {
        let c = as_ref(config, "config")?;
        let cfg = DecodeConfig {
            peaks: PeakExtractionConfig::new(c.score_threshold, c.nms_window as usize, c.top_k as usize)?,
            grouping: GroupingConfig::new(c.theta, c.geometric_gate != 0)?,
            stride: c.stride,
        };
        let bundle = MapBundle::read_dir(&path_arg(path)?)?;
        let k = camera.as_ref().map(|k| &k.0);
        give(out_detections, Det3dDetections(decode_frame(&bundle, &cfg, k)?))
    })
}

/// Decode settings used by the command line tool.
#[no_mangle]
pub extern "C" fn det3d_decode_config_default() -> Det3dDecodeConfig {
    let d = DecodeConfig::default();
    Det3dDecodeConfig {
        score_threshold: d.peaks.score_threshold(),
        nms_window: d.peaks.nms_window() as u32,
        top_k: d.peaks.top_k() as u32,
        theta: d.grouping.theta(),
        geometric_gate: d.grouping.geometric_gate() as u8,
        stride: 4,
    }
}

#[no_mangle]
pub unsafe extern "C" fn det3d_detections_len(dets: *const Det3dDetections) -> usize {
    dets.as_ref().map_or(0, |d| d.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn det3d_detections_box2d(
    dets: *const Det3dDetections,
    index: usize,
    value: *mut Det3dBox2D,
) -> Det3dStatus {
    guard(|| {
        let d = &as_ref(dets, "detections")?.0;
        let det = d
            .get(index)
            .ok_or_else(|| Fail(Det3dStatus::OutOfBounds, format!("detection {index} of {}", d.len())))?;
        *out(value, "value")? = from_box(&det.box2d);
        Ok(())
    })
}

/// Sets `has_box3d` to 0 when the detection could not be lifted to 3D.
#[no_mangle]
pub unsafe extern "C" fn det3d_detections_box3d(
    dets: *const Det3dDetections,
    index: usize,
    value: *mut Det3dBox3D,
    has_box3d: *mut u8,
) -> Det3dStatus {
    guard(|| {
        let d = &as_ref(dets, "detections")?.0;
        let det = d
            .get(index)
            .ok_or_else(|| Fail(Det3dStatus::OutOfBounds, format!("detection {index} of {}", d.len())))?;
        let has = out(has_box3d, "has_box3d")?;
        *has = det.box3d.is_some() as u8;
        if let Some(b) = det.box3d {
            let dims = b.dims();
            let o = b.orientation();
            *out(value, "value")? = Det3dBox3D {
                center: b.center(),
                dims: [dims.w, dims.h, dims.l],
                orientation: [o.azimuth, o.elevation, o.roll],
                class_id: b.class_id() as u32,
                score: b.score(),
            };
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn det3d_detections_free(dets: *mut Det3dDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}
