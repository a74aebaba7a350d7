//! Per-frame set of network output maps, stored as one FMAP file each.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fmap;
use crate::io::write_atomic;
use crate::model::{FeatureMap, KeypointKind, MapRole};

/// One value per keypoint kind.
#[derive(Debug, Clone, PartialEq)]
pub struct PerKind<T> {
    pub top_left: T,
    pub bottom_right: T,
    pub center: T,
}

impl<T> PerKind<T> {
    pub fn get(&self, kind: KeypointKind) -> &T {
        match kind {
            KeypointKind::TopLeft => &self.top_left,
            KeypointKind::BottomRight => &self.bottom_right,
            KeypointKind::Center => &self.center,
        }
    }

    pub fn get_mut(&mut self, kind: KeypointKind) -> &mut T {
        match kind {
            KeypointKind::TopLeft => &mut self.top_left,
            KeypointKind::BottomRight => &mut self.bottom_right,
            KeypointKind::Center => &mut self.center,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerMaps {
    pub top_left: FeatureMap,
    pub bottom_right: FeatureMap,
}

/// Regression maps read at center keypoints to lift boxes to 3D.
///
/// `depth` holds the raw log-depth (1 channel), `dims` holds `(w, h, l)`
/// metres (3 channels), `orientation` holds MultiBin outputs for azimuth,
/// elevation and roll in that order, each as `N` bins of
/// `(confidence, cos, sin)`, so `9 N` channels in total.
#[derive(Debug, Clone, PartialEq)]
pub struct Head3D {
    pub depth: FeatureMap,
    pub dims: FeatureMap,
    pub orientation: FeatureMap,
}

impl Head3D {
    pub fn bins(&self) -> usize {
        self.orientation.channels() / 9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapBundle {
    pub heatmaps: PerKind<FeatureMap>,
    pub embeddings: CornerMaps,
    pub offsets: PerKind<FeatureMap>,
    pub head3d: Option<Head3D>,
}

const KINDS: [(KeypointKind, &str); 3] = [
    (KeypointKind::TopLeft, "tl"),
    (KeypointKind::BottomRight, "br"),
    (KeypointKind::Center, "ct"),
];

fn expect(map: &FeatureMap, name: &str, role: MapRole, channels: Option<usize>) -> Result<()> {
    if map.role() != role {
        return Err(Error::Config(format!(
            "{name} has role {:?}, expected {role:?}",
            map.role()
        )));
    }
    if let Some(c) = channels {
        if map.channels() != c {
            return Err(Error::Config(format!(
                "{name} has {} channels, expected {c}",
                map.channels()
            )));
        }
    }
    Ok(())
}

impl MapBundle {
    pub fn height(&self) -> usize {
        self.heatmaps.top_left.height()
    }

    pub fn width(&self) -> usize {
        self.heatmaps.top_left.width()
    }

    pub fn classes(&self) -> usize {
        self.heatmaps.top_left.channels()
    }

    fn named_maps(&self) -> Vec<(String, &FeatureMap)> {
        let mut out = Vec::new();
        for (kind, tag) in KINDS {
            out.push((format!("heatmap_{tag}"), self.heatmaps.get(kind)));
        }
        out.push(("embedding_tl".into(), &self.embeddings.top_left));
        out.push(("embedding_br".into(), &self.embeddings.bottom_right));
        for (kind, tag) in KINDS {
            out.push((format!("offset_{tag}"), self.offsets.get(kind)));
        }
        if let Some(h) = &self.head3d {
            out.push(("depth".into(), &h.depth));
            out.push(("dims".into(), &h.dims));
            out.push(("orientation".into(), &h.orientation));
        }
        out
    }

    /// Checks roles, channel counts and that every map shares one grid.
    pub fn validate(&self) -> Result<()> {
        let c = self.classes();
        for (kind, tag) in KINDS {
            expect(self.heatmaps.get(kind), &format!("heatmap_{tag}"), MapRole::Heatmap, Some(c))?;
            expect(self.offsets.get(kind), &format!("offset_{tag}"), MapRole::Offset, Some(2))?;
        }
        expect(&self.embeddings.top_left, "embedding_tl", MapRole::Embedding, Some(1))?;
        expect(&self.embeddings.bottom_right, "embedding_br", MapRole::Embedding, Some(1))?;
        if let Some(h) = &self.head3d {
            expect(&h.depth, "depth", MapRole::Generic, Some(1))?;
            expect(&h.dims, "dims", MapRole::Generic, Some(3))?;
            expect(&h.orientation, "orientation", MapRole::Generic, None)?;
            if h.orientation.channels() % 9 != 0 {
                return Err(Error::Config(format!(
                    "orientation has {} channels, expected a multiple of 9",
                    h.orientation.channels()
                )));
            }
        }
        let reference = &self.heatmaps.top_left;
        for (name, map) in self.named_maps() {
            if !map.same_grid(reference) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {}x{}",
                    map.height(),
                    map.width(),
                    reference.height(),
                    reference.width()
                )));
            }
        }
        Ok(())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, map) in self.named_maps() {
            write_atomic(&dir.join(format!("{name}.fmap")), &fmap::encode(map))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let load = |name: &str| fmap::read_file(&dir.join(format!("{name}.fmap")));
        let heatmaps = PerKind {
            top_left: load("heatmap_tl")?,
            bottom_right: load("heatmap_br")?,
            center: load("heatmap_ct")?,
        };
        let embeddings = CornerMaps {
            top_left: load("embedding_tl")?,
            bottom_right: load("embedding_br")?,
        };
        let offsets = PerKind {
            top_left: load("offset_tl")?,
            bottom_right: load("offset_br")?,
            center: load("offset_ct")?,
        };
        let head3d = if dir.join("depth.fmap").exists() {
            Some(Head3D {
                depth: load("depth")?,
                dims: load("dims")?,
                orientation: load("orientation")?,
            })
        } else {
            None
        };
        let bundle = MapBundle {
            heatmaps,
            embeddings,
            offsets,
            head3d,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}
