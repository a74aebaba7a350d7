//! Corner and center pooling as deterministic feature-map scans.
//!
//! All scans run in `O(H * W)` per channel: a directional max over a ray is a
//! running prefix or suffix maximum along each row or column.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{FeatureMap, MapRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanSense {
    TowardIncreasingIndex,
    TowardDecreasingIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolingDirection {
    pub axis: ScanAxis,
    pub sense: ScanSense,
}

impl PoolingDirection {
    pub const fn new(axis: ScanAxis, sense: ScanSense) -> Self {
        Self { axis, sense }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    TopLeft,
    BottomRight,
}

#[inline]
fn max_f32(a: f32, b: f32) -> f32 {
    if b > a {
        b
    } else {
        a
    }
}

/// In-place ray max over a row-major `h x w` plane.
fn scan_plane(plane: &mut [f32], h: usize, w: usize, dir: PoolingDirection) {
    use ScanAxis::*;
    use ScanSense::*;
    match (dir.axis, dir.sense) {
        (Horizontal, TowardIncreasingIndex) => {
            for row in plane.chunks_exact_mut(w) {
                for c in (0..w - 1).rev() {
                    row[c] = max_f32(row[c], row[c + 1]);
                }
            }
        }
        (Horizontal, TowardDecreasingIndex) => {
            for row in plane.chunks_exact_mut(w) {
                for c in 1..w {
                    row[c] = max_f32(row[c], row[c - 1]);
                }
            }
        }
        // Column scans walk whole rows at a time to stay cache friendly.
        (Vertical, TowardIncreasingIndex) => {
            for r in (0..h - 1).rev() {
                let (upper, lower) = plane.split_at_mut((r + 1) * w);
                let cur = &mut upper[r * w..];
                for (a, b) in cur.iter_mut().zip(&lower[..w]) {
                    *a = max_f32(*a, *b);
                }
            }
        }
        (Vertical, TowardDecreasingIndex) => {
            for r in 1..h {
                let (upper, lower) = plane.split_at_mut(r * w);
                let prev = &upper[(r - 1) * w..];
                for (a, b) in lower[..w].iter_mut().zip(prev) {
                    *a = max_f32(*a, *b);
                }
            }
        }
    }
}

fn single(map: &FeatureMap, plane: Vec<f32>) -> FeatureMap {
    FeatureMap::new(map.height(), map.width(), 1, MapRole::Generic, plane)
        .expect("plane has the source grid size")
}

/// `out[r][c]` is the max along the ray from `(r, c)` in `dir`, inclusive.
pub fn directional_max_scan(
    map: &FeatureMap,
    channel: usize,
    dir: PoolingDirection,
) -> Result<FeatureMap> {
    let mut plane = map.channel_plane(channel)?;
    scan_plane(&mut plane, map.height(), map.width(), dir);
    Ok(single(map, plane))
}

/// Row maximum plus column maximum at every cell.
pub fn center_pool(map: &FeatureMap, channel: usize) -> Result<FeatureMap> {
    let plane = map.channel_plane(channel)?;
    let (h, w) = (map.height(), map.width());
    let row_max: Vec<f32> = plane
        .chunks_exact(w)
        .map(|row| row.iter().copied().fold(f32::NEG_INFINITY, max_f32))
        .collect();
    let mut col_max = vec![f32::NEG_INFINITY; w];
    for row in plane.chunks_exact(w) {
        for (m, v) in col_max.iter_mut().zip(row) {
            *m = max_f32(*m, *v);
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for rm in &row_max {
        out.extend(col_max.iter().map(|cm| rm + cm));
    }
    Ok(single(map, out))
}

/// Horizontal scan, then a vertical scan of that result, summed with the
/// horizontal result. Top-left scans toward increasing indices, bottom-right
/// toward decreasing indices.
pub fn cascade_corner_pool(map: &FeatureMap, channel: usize, corner: Corner) -> Result<FeatureMap> {
    let sense = match corner {
        Corner::TopLeft => ScanSense::TowardIncreasingIndex,
        Corner::BottomRight => ScanSense::TowardDecreasingIndex,
    };
    let (h, w) = (map.height(), map.width());
    let mut horizontal = map.channel_plane(channel)?;
    scan_plane(&mut horizontal, h, w, PoolingDirection::new(ScanAxis::Horizontal, sense));
    let mut vertical = horizontal.clone();
    scan_plane(&mut vertical, h, w, PoolingDirection::new(ScanAxis::Vertical, sense));
    for (v, hz) in vertical.iter_mut().zip(&horizontal) {
        *v += hz;
    }
    Ok(single(map, vertical))
}

fn pool_channels(
    map: &FeatureMap,
    op: impl Fn(&FeatureMap, usize) -> Result<FeatureMap> + Sync,
) -> Result<FeatureMap> {
    let planes = (0..map.channels())
        .into_par_iter()
        .map(|ch| op(map, ch).map(FeatureMap::into_data))
        .collect::<Result<Vec<_>>>()?;
    FeatureMap::from_planes(map.height(), map.width(), MapRole::Generic, &planes)
}

/// Center pooling over every channel, channels processed in parallel.
pub fn center_pool_all(map: &FeatureMap) -> Result<FeatureMap> {
    pool_channels(map, center_pool)
}

/// Cascade corner pooling over every channel, channels processed in parallel.
pub fn cascade_corner_pool_all(map: &FeatureMap, corner: Corner) -> Result<FeatureMap> {
    pool_channels(map, |m, ch| cascade_corner_pool(m, ch, corner))
}
