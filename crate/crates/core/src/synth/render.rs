use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::SceneSample;
use crate::bundle::{CornerMaps, Head3D, MapBundle, PerKind};
use crate::error::{Error, Result};
use crate::geometry::uniform_bin_centers;
use crate::model::{normalize_angle, FeatureMap, KeypointKind, MapRole};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Input pixels per feature-map cell.
    pub stride: u32,
    /// Gaussian bump width in cells.
    pub sigma: f64,
    /// MultiBin bins per angle in the 3D head.
    pub bins: usize,
    pub with_head3d: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            sigma: 1.5,
            bins: 2,
            with_head3d: true,
        }
    }
}

impl RenderConfig {
    /// Feature-map `(height, width)` covering an image.
    pub fn grid_for(&self, image_width: u32, image_height: u32) -> (usize, usize) {
        let s = self.stride.max(1);
        (image_height.div_ceil(s) as usize, image_width.div_ceil(s) as usize)
    }
}

/// Writable planes for one map, later frozen into a `FeatureMap`.
struct Planes {
    h: usize,
    w: usize,
    planes: Vec<Vec<f32>>,
}

impl Planes {
    fn new(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            planes: vec![vec![0.0; h * w]; c],
        }
    }

    fn set(&mut self, ch: usize, r: usize, c: usize, v: f32) {
        self.planes[ch][r * self.w + c] = v;
    }

    fn max_in(&mut self, ch: usize, r: usize, c: usize, v: f32) {
        let cell = &mut self.planes[ch][r * self.w + c];
        *cell = cell.max(v);
    }

    fn freeze(self, role: MapRole) -> Result<FeatureMap> {
        FeatureMap::from_planes(self.h, self.w, role, &self.planes)
    }
}

/// Cell holding an image point and the fractional remainder inside it.
fn cell_of(x: f64, y: f64, stride: f64, h: usize, w: usize) -> Result<((usize, usize), (f64, f64))> {
    let (fx, fy) = (x / stride, y / stride);
    let (col, row) = (fx.floor(), fy.floor());
    if !(col >= 0.0 && row >= 0.0 && (col as usize) < w && (row as usize) < h) {
        return Err(Error::Render(format!(
            "keypoint ({x:.3}, {y:.3}) px falls outside the {h}x{w} feature map"
        )));
    }
    Ok(((row as usize, col as usize), (fx - col, fy - row)))
}

fn bump_cells(
    (r0, c0): (usize, usize),
    sigma: f64,
    h: usize,
    w: usize,
) -> impl Iterator<Item = (usize, usize, f32)> {
    let radius = (3.0 * sigma).ceil() as usize;
    let rows = r0.saturating_sub(radius)..=(r0 + radius).min(h - 1);
    rows.flat_map(move |r| {
        (c0.saturating_sub(radius)..=(c0 + radius).min(w - 1)).map(move |c| {
            let d2 = (r as f64 - r0 as f64).powi(2) + (c as f64 - c0 as f64).powi(2);
            (r, c, (-d2 / (2.0 * sigma * sigma)).exp() as f32)
        })
    })
}

/// `(confidence, cos, sin)` per bin for one angle: confidence 1 on the
/// nearest bin center, residual angle stored for every bin.
fn encode_multibin(angle: f64, centers: &[f64]) -> Result<Vec<[f32; 3]>> {
    let residuals = centers
        .iter()
        .map(|c| normalize_angle(angle - c))
        .collect::<Result<Vec<f64>>>()?;
    let nearest = (0..centers.len())
        .min_by(|&a, &b| residuals[a].abs().total_cmp(&residuals[b].abs()))
        .unwrap_or(0);
    Ok(residuals
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let r = d.to_radians();
            [(i == nearest) as u8 as f32, r.cos() as f32, r.sin() as f32]
        })
        .collect())
}

/// Maps a perfect network would emit for the scene.
///
/// Each object gets a Gaussian bump (peak 1) on its class channel at the cell
/// of each keypoint, the exact sub-cell remainder in the offset maps, and tag
/// `k + 1` in both corner embeddings. The center keypoint is the 2D box
/// center. The 3D head holds log-depth, dims and MultiBin orientation over
/// the center bump, where the object with the stronger bump wins.
pub fn render_ideal_maps(
    sample: &SceneSample,
    classes: usize,
    height: usize,
    width: usize,
    cfg: &RenderConfig,
) -> Result<MapBundle> {
    if cfg.stride == 0 || !(cfg.sigma > 0.0) || cfg.bins == 0 {
        return Err(Error::Config(format!(
            "render needs stride > 0, sigma > 0 and at least one bin, got {cfg:?}"
        )));
    }
    if height == 0 || width == 0 || classes == 0 {
        return Err(Error::Config("feature map dimensions must be positive".into()));
    }
    let (h, w) = (height, width);
    let stride = cfg.stride as f64;
    let mut heat = PerKind {
        top_left: Planes::new(h, w, classes),
        bottom_right: Planes::new(h, w, classes),
        center: Planes::new(h, w, classes),
    };
    let mut offsets = PerKind {
        top_left: Planes::new(h, w, 2),
        bottom_right: Planes::new(h, w, 2),
        center: Planes::new(h, w, 2),
    };
    let mut emb_tl = Planes::new(h, w, 1);
    let mut emb_br = Planes::new(h, w, 1);
    let n = cfg.bins;
    let mut depth = Planes::new(h, w, 1);
    let mut dims = Planes::new(h, w, 3);
    let mut orient = Planes::new(h, w, 9 * n);
    let mut owner = vec![0.0f32; h * w];
    let centers = uniform_bin_centers(n);

    for (k, obj) in sample.objects.iter().enumerate() {
        let class = obj.box2d.class_id();
        if class >= classes {
            return Err(Error::Render(format!(
                "object {k} has class {class} but the maps have {classes} channels"
            )));
        }
        let b = &obj.box2d;
        let points = [
            (KeypointKind::TopLeft, (b.x_min(), b.y_min())),
            (KeypointKind::BottomRight, (b.x_max(), b.y_max())),
            (KeypointKind::Center, b.center()),
        ];
        let tag = (k + 1) as f32;
        for (kind, (x, y)) in points {
            let (cell, (ox, oy)) = cell_of(x, y, stride, h, w)?;
            for (r, c, v) in bump_cells(cell, cfg.sigma, h, w) {
                heat.get_mut(kind).max_in(class, r, c, v);
            }
            let off = offsets.get_mut(kind);
            off.set(0, cell.0, cell.1, ox as f32);
            off.set(1, cell.0, cell.1, oy as f32);
            match kind {
                KeypointKind::TopLeft => emb_tl.set(0, cell.0, cell.1, tag),
                KeypointKind::BottomRight => emb_br.set(0, cell.0, cell.1, tag),
                KeypointKind::Center if cfg.with_head3d => {
                    let b3 = &obj.box3d;
                    let d = b3.dims();
                    let o = b3.orientation();
                    let mut bins = Vec::with_capacity(3 * n);
                    for angle in [o.azimuth, o.elevation, o.roll] {
                        bins.extend(encode_multibin(angle, &centers)?);
                    }
                    let log_z = b3.center()[2].ln() as f32;
                    for (r, c, v) in bump_cells(cell, cfg.sigma, h, w) {
                        if v <= owner[r * w + c] {
                            continue;
                        }
                        owner[r * w + c] = v;
                        depth.set(0, r, c, log_z);
                        for (i, x) in [d.w, d.h, d.l].into_iter().enumerate() {
                            dims.set(i, r, c, x as f32);
                        }
                        for (i, bin) in bins.iter().enumerate() {
                            for (f, x) in bin.iter().enumerate() {
                                orient.set(3 * i + f, r, c, *x);
                            }
                        }
                    }
                }
                KeypointKind::Center => {}
            }
        }
    }

    let bundle = MapBundle {
        heatmaps: PerKind {
            top_left: heat.top_left.freeze(MapRole::Heatmap)?,
            bottom_right: heat.bottom_right.freeze(MapRole::Heatmap)?,
            center: heat.center.freeze(MapRole::Heatmap)?,
        },
        embeddings: CornerMaps {
            top_left: emb_tl.freeze(MapRole::Embedding)?,
            bottom_right: emb_br.freeze(MapRole::Embedding)?,
        },
        offsets: PerKind {
            top_left: offsets.top_left.freeze(MapRole::Offset)?,
            bottom_right: offsets.bottom_right.freeze(MapRole::Offset)?,
            center: offsets.center.freeze(MapRole::Offset)?,
        },
        head3d: if cfg.with_head3d {
            Some(Head3D {
                depth: depth.freeze(MapRole::Generic)?,
                dims: dims.freeze(MapRole::Generic)?,
                orientation: orient.freeze(MapRole::Generic)?,
            })
        } else {
            None
        },
    };
    bundle.validate()?;
    Ok(bundle)
}

fn perturb(
    map: &FeatureMap,
    rng: &mut ChaCha8Rng,
    noise: &Normal<f64>,
    clamp: bool,
) -> Result<FeatureMap> {
    let data = map
        .data()
        .iter()
        .map(|&v| {
            let x = v + noise.sample(rng) as f32;
            if clamp {
                x.clamp(0.0, 1.0)
            } else {
                x
            }
        })
        .collect();
    FeatureMap::new(map.height(), map.width(), map.channels(), map.role(), data)
}

/// Adds seeded Gaussian noise: `noise_level` to heatmaps (clamped to
/// `[0, 1]`) and offsets, a tenth of it to embeddings. The 3D head is left
/// alone. A level of 0 returns an identical copy.
pub fn corrupt_maps(bundle: &MapBundle, noise_level: f64, seed: u64) -> Result<MapBundle> {
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(Error::Domain(format!(
            "noise level {noise_level} must be finite and non-negative"
        )));
    }
    if noise_level == 0.0 {
        return Ok(bundle.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = Normal::new(0.0, noise_level).map_err(|e| Error::Domain(e.to_string()))?;
    let tenth = Normal::new(0.0, noise_level / 10.0).map_err(|e| Error::Domain(e.to_string()))?;
    let mut out = bundle.clone();
    for kind in [KeypointKind::TopLeft, KeypointKind::BottomRight, KeypointKind::Center] {
        *out.heatmaps.get_mut(kind) = perturb(bundle.heatmaps.get(kind), &mut rng, &full, true)?;
        *out.offsets.get_mut(kind) = perturb(bundle.offsets.get(kind), &mut rng, &full, false)?;
    }
    out.embeddings.top_left = perturb(&bundle.embeddings.top_left, &mut rng, &tenth, false)?;
    out.embeddings.bottom_right = perturb(&bundle.embeddings.bottom_right, &mut rng, &tenth, false)?;
    Ok(out)
}
