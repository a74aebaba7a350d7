use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sweep::{sample_rng, CameraPose, SweepPoint};
use crate::error::{Error, Result};
use crate::geometry::{back_project, project_box3d};
use crate::metrics::iou;
use crate::model::{
    normalize_angle, Box2D, Box3D, CameraIntrinsics, ClassTaxonomy, Dims, Orientation,
    SuperCategory,
};

/// Nominal `(w, h, l)` in metres for the synthetic classes. Sampled sizes
/// vary by up to 5% around these.
pub fn dimension_prior(class_name: &str) -> Option<Dims> {
    Some(match class_name {
        "Car" => Dims::new(1.8, 1.6, 4.2),
        "Truck" => Dims::new(2.5, 3.2, 7.5),
        "Drone" => Dims::new(3.0, 1.0, 3.0),
        "Helicopter" => Dims::new(2.5, 3.0, 9.0),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub focal_ground: f64,
    pub focal_air: f64,
    /// Minimum distance from any projected hull to the image border.
    pub margin_px: f64,
    /// Minimum Chebyshev distance between same-class keypoints of one kind.
    pub min_keypoint_separation_px: f64,
    /// Pairwise projected IoU must stay below this.
    pub max_pair_iou: f64,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            image_width: 960,
            image_height: 540,
            focal_ground: 600.0,
            focal_air: 2000.0,
            margin_px: 8.0,
            min_keypoint_separation_px: 32.0,
            max_pair_iou: 0.1,
            max_attempts: 500,
        }
    }
}

impl GeneratorConfig {
    pub fn camera(&self, sup: SuperCategory) -> Result<CameraIntrinsics> {
        let f = match sup {
            SuperCategory::Air => self.focal_air,
            SuperCategory::Ground => self.focal_ground,
        };
        CameraIntrinsics::pinhole(
            f,
            f,
            self.image_width as f64 / 2.0,
            self.image_height as f64 / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: String,
    pub box3d: Box3D,
    /// Projection of `box3d`.
    pub box2d: Box2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub id: String,
    pub point: SweepPoint,
    pub image_width: u32,
    pub image_height: u32,
    pub camera: CameraIntrinsics,
    pub pose: CameraPose,
    pub objects: Vec<SceneObject>,
}

/// Six-digit zero-padded frame id.
pub fn frame_id(index: usize) -> String {
    format!("{index:06}")
}

fn keypoints(b: &Box2D) -> [(f64, f64); 3] {
    [(b.x_min(), b.y_min()), (b.x_max(), b.y_max()), b.center()]
}

fn too_close(a: &Box2D, b: &Box2D, sep: f64) -> bool {
    a.class_id() == b.class_id()
        && keypoints(a)
            .iter()
            .zip(keypoints(b))
            .any(|(p, q)| (p.0 - q.0).abs().max((p.1 - q.1).abs()) < sep)
}

fn jitter(rng: &mut ChaCha8Rng, v: f64, frac: f64) -> f64 {
    v * rng.random_range(1.0 - frac..=1.0 + frac)
}

fn place_one(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    k: &CameraIntrinsics,
    point: &SweepPoint,
    class_id: usize,
    prior: Dims,
    placed: &[SceneObject],
) -> Result<Option<SceneObject>> {
    let dims = Dims::new(
        jitter(rng, prior.w, 0.05),
        jitter(rng, prior.h, 0.05),
        jitter(rng, prior.l, 0.05),
    );
    let z = jitter(rng, point.camera.distance_m, 0.1);
    let heading: f64 = rng.random_range(0.0..360.0);
    let orientation = Orientation::new(
        normalize_angle(heading - point.camera.azimuth_deg)?,
        point.camera.elevation_deg,
        0.0,
    );
    let (w, h, m) = (cfg.image_width as f64, cfg.image_height as f64, cfg.margin_px);
    let u = rng.random_range(m..w - m);
    let v = rng.random_range(m..h - m);
    let center = back_project(k, u, v, z)?;
    let box3d = Box3D::new(center, dims, orientation)?.with_class(class_id);
    let box2d = match project_box3d(k, &box3d) {
        Ok(b) => b,
        Err(Error::BehindCamera { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let inside = box2d.x_min() >= m
        && box2d.y_min() >= m
        && box2d.x_max() <= w - m
        && box2d.y_max() <= h - m;
    if !inside {
        return Ok(None);
    }
    let clash = placed.iter().any(|o| {
        iou(&o.box2d, &box2d) >= cfg.max_pair_iou
            || too_close(&o.box2d, &box2d, cfg.min_keypoint_separation_px)
    });
    if clash {
        return Ok(None);
    }
    Ok(Some(SceneObject {
        class: String::new(),
        box3d,
        box2d,
    }))
}

/// Places `n_objects` vehicles of the point's super-category at the camera
/// distance (within 10%), with projections inside the image and pairwise
/// overlap below the configured limit.
///
/// `index` selects the per-sample random stream, so the result depends only
/// on `(point, seed, index, n_objects, cfg)`.
pub fn generate_scene(
    point: &SweepPoint,
    seed: u64,
    index: usize,
    n_objects: usize,
    taxonomy: &ClassTaxonomy,
    cfg: &GeneratorConfig,
) -> Result<SceneSample> {
    let id = frame_id(index);
    let fail = |reason: String| Error::Generation {
        point: format!(
            "sample {id} ({} {}, distance {} m, elevation {} deg, azimuth {} deg)",
            point.super_category.name(),
            point.category.name(),
            point.camera.distance_m,
            point.camera.elevation_deg,
            point.camera.azimuth_deg
        ),
        reason,
    };
    if n_objects == 0 {
        return Err(fail("at least one object is required".into()));
    }
    let classes: Vec<(usize, Dims)> = taxonomy
        .ids_in(point.super_category)
        .filter_map(|c| taxonomy.name(c).and_then(dimension_prior).map(|d| (c, d)))
        .collect();
    if classes.is_empty() {
        return Err(fail("taxonomy has no classes with size priors for this category".into()));
    }
    let k = cfg.camera(point.super_category)?;
    let mut rng = sample_rng(seed, index, 1);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects);
    while objects.len() < n_objects {
        let (class_id, prior) = classes[rng.random_range(0..classes.len())];
        let mut found = None;
        for _ in 0..cfg.max_attempts {
            if let Some(o) = place_one(&mut rng, cfg, &k, point, class_id, prior, &objects)? {
                found = Some(o);
                break;
            }
        }
        let Some(mut obj) = found else {
            return Err(fail(format!(
                "could not place object {} of {} after {} attempts",
                objects.len() + 1,
                n_objects,
                cfg.max_attempts
            )));
        };
        obj.class = taxonomy.name(class_id).unwrap_or_default().to_string();
        objects.push(obj);
    }
    Ok(SceneSample {
        id,
        point: *point,
        image_width: cfg.image_width,
        image_height: cfg.image_height,
        camera: k,
        pose: point.camera,
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sweep::{enumerate_sweep, SweepCategory, SweepSpec};

    fn points(sup: SuperCategory) -> Vec<SweepPoint> {
        enumerate_sweep(&SweepSpec {
            category: SweepCategory::Camera,
            super_category: sup,
            repeats: 1,
            seed: 3,
        })
    }

    #[test]
    fn single_ground_object_at_distance() {
        let tax = ClassTaxonomy::synthetic();
        let cfg = GeneratorConfig::default();
        let p = points(SuperCategory::Ground)[0];
        assert_eq!(p.camera.distance_m, 15.0);
        let s = generate_scene(&p, 1, 0, 1, &tax, &cfg).unwrap();
        assert_eq!(s.objects.len(), 1);
        let o = &s.objects[0];
        assert!((13.5..=16.5).contains(&o.box3d.center()[2]));
        assert_eq!(project_box3d(&s.camera, &o.box3d).unwrap(), o.box2d);
        assert!(o.box2d.x_min() >= 0.0 && o.box2d.x_max() <= 960.0);
        assert!(o.box2d.y_min() >= 0.0 && o.box2d.y_max() <= 540.0);
        assert_eq!(tax.super_of(o.box2d.class_id()), Some(SuperCategory::Ground));
        assert_eq!(o.class, tax.name(o.box3d.class_id()).unwrap());
    }

    #[test]
    fn deterministic_per_seed() {
        let tax = ClassTaxonomy::synthetic();
        let cfg = GeneratorConfig::default();
        let p = points(SuperCategory::Air)[5];
        let a = generate_scene(&p, 9, 5, 3, &tax, &cfg).unwrap();
        assert_eq!(a, generate_scene(&p, 9, 5, 3, &tax, &cfg).unwrap());
        assert_ne!(a, generate_scene(&p, 10, 5, 3, &tax, &cfg).unwrap());
    }

    #[test]
    fn five_objects_do_not_overlap() {
        let tax = ClassTaxonomy::synthetic();
        let cfg = GeneratorConfig::default();
        for sup in [SuperCategory::Air, SuperCategory::Ground] {
            for (i, p) in points(sup).iter().enumerate().step_by(7) {
                let s = generate_scene(p, 11, i, 5, &tax, &cfg).unwrap();
                for a in 0..5 {
                    for b in a + 1..5 {
                        assert!(iou(&s.objects[a].box2d, &s.objects[b].box2d) < 0.1);
                    }
                }
            }
        }
    }

    #[test]
    fn impossible_placement_reports_point() {
        let tax = ClassTaxonomy::synthetic();
        let cfg = GeneratorConfig {
            max_attempts: 5,
            ..GeneratorConfig::default()
        };
        let p = points(SuperCategory::Ground)[0];
        let err = generate_scene(&p, 1, 0, 200, &tax, &cfg).unwrap_err();
        match err {
            Error::Generation { point, .. } => assert!(point.contains("distance 15 m")),
            e => panic!("unexpected {e}"),
        }
        assert!(generate_scene(&p, 1, 0, 0, &tax, &cfg).is_err());
    }
}
