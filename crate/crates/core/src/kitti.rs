//! KITTI label and calibration text formats.
//!
//! Angles are radians here and degrees everywhere else in the crate; the
//! conversion happens only in this module.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Box2D, Box3D, CameraIntrinsics, ClassTaxonomy, Dims, Orientation};
use crate::synth::SceneSample;

/// One object line of a KITTI label file.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabelRecord {
    pub kind: String,
    pub truncated: f64,
    pub occluded: u8,
    /// Observation angle, radians.
    pub alpha: f64,
    /// `(left, top, right, bottom)` pixels.
    pub bbox: [f64; 4],
    /// `(h, w, l)` metres.
    pub dimensions: [f64; 3],
    /// Bottom center of the box in camera coordinates, metres.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

const FIELD_NAMES: [&str; 16] = [
    "type",
    "truncated",
    "occluded",
    "alpha",
    "bbox_left",
    "bbox_top",
    "bbox_right",
    "bbox_bottom",
    "height",
    "width",
    "length",
    "x",
    "y",
    "z",
    "rotation_y",
    "score",
];

fn number(fields: &[&str], i: usize, line: usize) -> Result<f64> {
    let v: f64 = fields[i].parse().map_err(|_| Error::Parse {
        line,
        msg: format!("field {} ({}) is not a number: {:?}", i + 1, FIELD_NAMES[i], fields[i]),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("field {} ({}) is not finite", i + 1, FIELD_NAMES[i]),
        });
    }
    Ok(v)
}

/// Parses one label line. `line` is the 1-based line number used in errors.
pub fn parse_kitti_label(text: &str, line: usize) -> Result<KittiLabelRecord> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(Error::Parse {
            line,
            msg: format!("expected 15 or 16 fields, found {}", fields.len()),
        });
    }
    let n = |i| number(&fields, i, line);
    let truncated = n(1)?;
    if !(0.0..=1.0).contains(&truncated) {
        return Err(Error::Parse {
            line,
            msg: format!("truncated {truncated} is outside [0, 1]"),
        });
    }
    let occluded = match fields[2].parse::<u8>() {
        Ok(v) if v <= 3 => v,
        _ => {
            return Err(Error::Parse {
                line,
                msg: format!("field 3 (occluded) must be 0, 1, 2 or 3, got {:?}", fields[2]),
            })
        }
    };
    let bbox = [n(4)?, n(5)?, n(6)?, n(7)?];
    if bbox[0] > bbox[2] || bbox[1] > bbox[3] {
        return Err(Error::Parse {
            line,
            msg: format!("bbox {bbox:?} is not ordered (left <= right, top <= bottom)"),
        });
    }
    let score = if fields.len() == 16 { Some(n(15)?) } else { None };
    Ok(KittiLabelRecord {
        kind: fields[0].to_string(),
        truncated,
        occluded,
        alpha: n(3)?,
        bbox,
        dimensions: [n(8)?, n(9)?, n(10)?],
        location: [n(11)?, n(12)?, n(13)?],
        rotation_y: n(14)?,
        score,
    })
}

/// Formats a record as one line without a trailing newline. Reals use six
/// decimals, so writing a parsed line reproduces it byte for byte.
pub fn write_kitti_label(r: &KittiLabelRecord) -> String {
    let mut s = format!("{} {:.6} {} {:.6}", r.kind, r.truncated, r.occluded, r.alpha);
    for v in r.bbox.iter().chain(&r.dimensions).chain(&r.location) {
        let _ = write!(s, " {v:.6}");
    }
    let _ = write!(s, " {:.6}", r.rotation_y);
    if let Some(score) = r.score {
        let _ = write!(s, " {score:.6}");
    }
    s
}

/// Parses a whole label file; blank lines are skipped.
pub fn parse_kitti_labels(text: &str) -> Result<Vec<KittiLabelRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_kitti_label(l, i + 1))
        .collect()
}

pub fn write_kitti_labels(records: &[KittiLabelRecord]) -> String {
    records.iter().map(|r| write_kitti_label(r) + "\n").collect()
}

/// `%.12e` style: two-digit signed exponent.
fn sci(v: f64) -> String {
    let raw = format!("{v:.12e}");
    let (mantissa, exp) = raw.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn matrix_line(name: &str, values: &[f64]) -> String {
    let mut s = format!("{name}:");
    for v in values {
        let _ = write!(s, " {}", sci(*v));
    }
    s.push('\n');
    s
}

/// Calibration file with every projection matrix set to `camera` and
/// identity rectification and sensor transforms.
pub fn write_kitti_calib(camera: &CameraIntrinsics) -> String {
    let p = camera.row_major();
    let eye3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let eye34 = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let mut s = String::new();
    for name in ["P0", "P1", "P2", "P3"] {
        s += &matrix_line(name, &p);
    }
    s += &matrix_line("R0_rect", &eye3);
    s += &matrix_line("Tr_velo_to_cam", &eye34);
    s += &matrix_line("Tr_imu_to_velo", &eye34);
    s
}

/// Reads the `P2` matrix of a calibration file.
pub fn parse_kitti_calib(text: &str) -> Result<CameraIntrinsics> {
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.trim_start().strip_prefix("P2:") else {
            continue;
        };
        let values = rest
            .split_whitespace()
            .enumerate()
            .map(|(j, t)| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: i + 1,
                        msg: format!("P2 value {} is not a finite number: {t:?}", j + 1),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 12 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("P2 needs 12 values, found {}", values.len()),
            });
        }
        return CameraIntrinsics::from_row_slice(&values).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        });
    }
    Err(Error::Parse {
        line: text.lines().count().max(1),
        msg: "no P2 line".into(),
    })
}

/// Wraps radians into `[-pi, pi)`.
pub fn wrap_radians(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Object in crate types plus the KITTI-only annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiObject {
    pub box2d: Box2D,
    pub box3d: Box3D,
    pub truncated: f64,
    pub occluded: u8,
    /// Radians.
    pub alpha: f64,
}

impl KittiObject {
    /// `rotation_y` becomes the azimuth in degrees; elevation and roll are 0.
    pub fn from_record(r: &KittiLabelRecord, taxonomy: &ClassTaxonomy) -> Result<Self> {
        let class_id = taxonomy
            .id_of(&r.kind)
            .ok_or_else(|| Error::Validation(format!("unknown class {:?}", r.kind)))?;
        let score = r.score.unwrap_or(1.0);
        let [h, w, l] = r.dimensions;
        let [x, y, z] = r.location;
        let box2d = Box2D::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3])?
            .with_class(class_id)
            .with_score(score)?;
        let box3d = Box3D::new(
            [x, y - h / 2.0, z],
            Dims::new(w, h, l),
            Orientation::new(r.rotation_y.to_degrees(), 0.0, 0.0),
        )?
        .with_class(class_id)
        .with_score(score)?;
        Ok(Self {
            box2d,
            box3d,
            truncated: r.truncated,
            occluded: r.occluded,
            alpha: r.alpha,
        })
    }

    pub fn to_record(&self, taxonomy: &ClassTaxonomy, with_score: bool) -> Result<KittiLabelRecord> {
        let class_id = self.box2d.class_id();
        let kind = taxonomy
            .name(class_id)
            .ok_or_else(|| Error::Validation(format!("class id {class_id} is not in the taxonomy")))?;
        let b = &self.box2d;
        let d = self.box3d.dims();
        let [x, y, z] = self.box3d.center();
        Ok(KittiLabelRecord {
            kind: kind.to_string(),
            truncated: self.truncated,
            occluded: self.occluded,
            alpha: self.alpha,
            bbox: [b.x_min(), b.y_min(), b.x_max(), b.y_max()],
            dimensions: [d.h, d.w, d.l],
            location: [x, y + d.h / 2.0, z],
            rotation_y: self.box3d.orientation().azimuth.to_radians(),
            score: with_score.then(|| b.score()),
        })
    }
}

/// Observation angle for a box at `(x, z)` with heading `rotation_y`.
pub fn observation_angle(rotation_y: f64, x: f64, z: f64) -> f64 {
    wrap_radians(rotation_y - x.atan2(z))
}

/// Label and calibration text for a synthetic scene.
///
/// Lossy: elevation and roll are dropped, and the location is the geometric
/// center shifted down by half the height, which is the bottom center only
/// for upright boxes.
pub fn convert_scene_to_kitti(sample: &SceneSample, taxonomy: &ClassTaxonomy) -> Result<(String, String)> {
    let mut records = Vec::with_capacity(sample.objects.len());
    for o in &sample.objects {
        let ry = o.box3d.orientation().azimuth.to_radians();
        let [x, _, z] = o.box3d.center();
        let obj = KittiObject {
            box2d: o.box2d,
            box3d: o.box3d,
            truncated: 0.0,
            occluded: 0,
            alpha: observation_angle(ry, x, z),
        };
        records.push(obj.to_record(taxonomy, false)?);
    }
    Ok((write_kitti_labels(&records), write_kitti_calib(&sample.camera)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "Car 0.00 0 1.57 100.0 100.0 200.0 180.0 1.5 1.6 4.0 1.0 1.0 20.0 1.60";

    #[test]
    fn parse_example() {
        let r = parse_kitti_label(EXAMPLE, 1).unwrap();
        assert_eq!(r.kind, "Car");
        assert_eq!(r.location, [1.0, 1.0, 20.0]);
        assert_eq!(r.dimensions, [1.5, 1.6, 4.0]);
        assert_eq!(r.bbox, [100.0, 100.0, 200.0, 180.0]);
        assert_eq!(r.rotation_y, 1.6);
        assert_eq!(r.score, None);
        let again = parse_kitti_label(&write_kitti_label(&r), 1).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn malformed_lines() {
        let fourteen = "Car 0.00 0 1.57 100.0 100.0 200.0 180.0 1.5 1.6 4.0 1.0 1.0 20.0";
        match parse_kitti_label(fourteen, 7) {
            Err(Error::Parse { line: 7, msg }) => assert!(msg.contains("14")),
            other => panic!("{other:?}"),
        }
        let bad = EXAMPLE.replace("20.0", "far");
        match parse_kitti_label(&bad, 3) {
            Err(Error::Parse { line: 3, msg }) => assert!(msg.contains("(z)")),
            other => panic!("{other:?}"),
        }
        assert!(parse_kitti_label(&EXAMPLE.replace(" 0 1.57", " 5 1.57"), 1).is_err());
        assert!(parse_kitti_label(&EXAMPLE.replace("200.0", "50.0"), 1).is_err());
        let text = format!("{EXAMPLE}\n\n{fourteen}\n");
        match parse_kitti_labels(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calib_round_trip() {
        let k = CameraIntrinsics::pinhole(721.5377, 721.5377, 609.5593, 172.854).unwrap();
        let text = write_kitti_calib(&k);
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("P0: 7.215377000000e+02 0.000000000000e+00"));
        assert_eq!(sci(-0.00125), "-1.250000000000e-03");
        assert_eq!(parse_kitti_calib(&text).unwrap(), k);
        assert!(parse_kitti_calib("P0: 1 2 3\n").is_err());
        match parse_kitti_calib("P1: 1\nP2: 1 0 0\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn object_round_trip() {
        let tax = ClassTaxonomy::kitti();
        let r = parse_kitti_label(&format!("{EXAMPLE} 0.75"), 1).unwrap();
        let obj = KittiObject::from_record(&r, &tax).unwrap();
        assert_eq!(obj.box3d.center()[1], 0.25);
        let back = obj.to_record(&tax, true).unwrap();
        assert_eq!(write_kitti_label(&back), write_kitti_label(&r));
        assert!(KittiObject::from_record(&parse_kitti_label(&EXAMPLE.replace("Car", "Tram"), 1).unwrap(), &tax).is_err());
    }

    #[test]
    fn observation_angles() {
        assert_eq!(observation_angle(0.3, 0.0, 10.0), 0.3);
        assert!((observation_angle(0.0, 10.0, 10.0) + PI / 4.0).abs() < 1e-15);
        assert!((wrap_radians(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(90f64.to_radians(), PI / 2.0);
    }
}
