//! On-disk synthetic datasets and the frames JSON used for detections and
//! ground truth.
//!
//! A dataset directory holds `manifest.json`, one `scenes/<id>.json` per
//! sample and one `tensors/<id>/` map bundle per sample.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::Detection;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::metrics::{EvalFrame, EvalObject};
use crate::model::{Box2D, Box3D, ClassTaxonomy, SuperCategory};
use crate::synth::{
    condition_noise, corrupt_maps, enumerate_sweep, frame_id, generate_scene, render_ideal_maps,
    GeneratorConfig, RenderConfig, SceneSample, SweepCategory, SweepPoint, SweepSpec,
};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub scene: String,
    pub tensors: String,
    pub point: SweepPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub category: SweepCategory,
    pub super_category: SuperCategory,
    pub repeats: usize,
    pub objects_per_scene: usize,
    /// Whether bundles carry the viewing-condition noise.
    pub condition_noise: bool,
    pub classes: ClassTaxonomy,
    pub generator: GeneratorConfig,
    pub render: RenderConfig,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub spec: SweepSpec,
    pub objects_per_scene: usize,
    pub condition_noise: bool,
    pub generator: GeneratorConfig,
    pub render: RenderConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// Accepts either a dataset directory or the path of its manifest.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST)
    } else {
        path.to_path_buf()
    }
}

pub fn render_sample(
    sample: &SceneSample,
    taxonomy: &ClassTaxonomy,
    opts: &DatasetOptions,
) -> Result<crate::bundle::MapBundle> {
    let (h, w) = opts.render.grid_for(sample.image_width, sample.image_height);
    let bundle = render_ideal_maps(sample, taxonomy.len(), h, w, &opts.render)?;
    if opts.condition_noise {
        let index: u64 = sample.id.parse().unwrap_or(0);
        corrupt_maps(&bundle, condition_noise(&sample.point), opts.spec.seed ^ index.rotate_left(32))
    } else {
        Ok(bundle)
    }
}

/// Generates, renders and writes every sample of the sweep, then the
/// manifest. Samples are processed on the current rayon pool; the output is
/// identical for any pool size.
pub fn write_dataset(dir: &Path, taxonomy: &ClassTaxonomy, opts: &DatasetOptions) -> Result<Manifest> {
    let points = enumerate_sweep(&opts.spec);
    let scenes = dir.join("scenes");
    std::fs::create_dir_all(&scenes).map_err(|e| Error::io(&scenes, e))?;
    let entries = points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let sample = generate_scene(
                point,
                opts.spec.seed,
                i,
                opts.objects_per_scene,
                taxonomy,
                &opts.generator,
            )?;
            let bundle = render_sample(&sample, taxonomy, opts)?;
            let entry = ManifestEntry {
                id: sample.id.clone(),
                scene: format!("scenes/{}.json", sample.id),
                tensors: format!("tensors/{}", sample.id),
                point: *point,
            };
            write_json(&dir.join(&entry.scene), &sample)?;
            bundle.write_dir(&dir.join(&entry.tensors))?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed: opts.spec.seed,
        category: opts.spec.category,
        super_category: opts.spec.super_category,
        repeats: opts.spec.repeats,
        objects_per_scene: opts.objects_per_scene,
        condition_noise: opts.condition_noise,
        classes: taxonomy.clone(),
        generator: opts.generator.clone(),
        render: opts.render,
        samples: entries,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_scene(dataset_dir: &Path, entry: &ManifestEntry) -> Result<SceneSample> {
    read_json(&dataset_dir.join(&entry.scene))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub class: String,
    pub score: f64,
    pub box2d: Box2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box3d: Option<Box3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FramesFile {
    pub frames: Vec<FrameRecord>,
}

fn class_name(taxonomy: &ClassTaxonomy, id: usize) -> Result<String> {
    taxonomy
        .name(id)
        .map(str::to_string)
        .ok_or_else(|| Error::Validation(format!("class id {id} is not in the taxonomy")))
}

impl FrameRecord {
    pub fn from_detections(
        id: &str,
        category: Option<String>,
        dets: &[Detection],
        taxonomy: &ClassTaxonomy,
    ) -> Result<Self> {
        let objects = dets
            .iter()
            .map(|d| {
                Ok(ObjectRecord {
                    class: class_name(taxonomy, d.box2d.class_id())?,
                    score: d.box2d.score(),
                    box2d: d.box2d,
                    box3d: d.box3d,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: id.to_string(),
            category,
            objects,
        })
    }

    pub fn from_scene(sample: &SceneSample, taxonomy: &ClassTaxonomy) -> Result<Self> {
        let objects = sample
            .objects
            .iter()
            .map(|o| {
                Ok(ObjectRecord {
                    class: class_name(taxonomy, o.box2d.class_id())?,
                    score: 1.0,
                    box2d: o.box2d,
                    box3d: Some(o.box3d),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: sample.id.clone(),
            category: Some(sample.point.category.name().to_string()),
            objects,
        })
    }

    /// Resolves class names; the `class` and `score` fields override any
    /// values embedded in the boxes.
    pub fn eval_objects(&self, taxonomy: &ClassTaxonomy) -> Result<Vec<EvalObject>> {
        self.objects
            .iter()
            .map(|o| {
                let class = taxonomy.id_of(&o.class).ok_or_else(|| {
                    Error::Validation(format!("frame {}: unknown class {:?}", self.id, o.class))
                })?;
                let box2d = o.box2d.with_class(class).with_score(o.score)?;
                let box3d = o
                    .box3d
                    .map(|b| b.with_class(class).with_score(o.score))
                    .transpose()?;
                Ok(EvalObject { box2d, box3d })
            })
            .collect()
    }
}

/// Ground truth of every sample in a dataset, in manifest order.
pub fn truth_frames(dataset_dir: &Path, manifest: &Manifest) -> Result<FramesFile> {
    let frames = manifest
        .samples
        .par_iter()
        .map(|e| FrameRecord::from_scene(&load_scene(dataset_dir, e)?, &manifest.classes))
        .collect::<Result<Vec<_>>>()?;
    Ok(FramesFile { frames })
}

/// Joins predictions to truths by frame id.
///
/// Both files must cover the same ids. The group label comes from the truth
/// frame, falling back to the prediction frame.
pub fn pair_frames(
    predictions: &FramesFile,
    truths: &FramesFile,
    taxonomy: &ClassTaxonomy,
) -> Result<Vec<EvalFrame>> {
    let ids = |f: &FramesFile| -> Result<BTreeSet<String>> {
        let mut set = BTreeSet::new();
        for fr in &f.frames {
            if !set.insert(fr.id.clone()) {
                return Err(Error::Validation(format!("duplicate frame id {}", fr.id)));
            }
        }
        Ok(set)
    };
    let pred_ids = ids(predictions)?;
    let truth_ids = ids(truths)?;
    if pred_ids != truth_ids {
        let missing_pred: Vec<_> = truth_ids.difference(&pred_ids).cloned().collect();
        let missing_truth: Vec<_> = pred_ids.difference(&truth_ids).cloned().collect();
        let mut msg = String::from("frame ids differ");
        if !missing_pred.is_empty() {
            msg += &format!("; missing from predictions: {}", missing_pred.join(", "));
        }
        if !missing_truth.is_empty() {
            msg += &format!("; missing from truth: {}", missing_truth.join(", "));
        }
        return Err(Error::Validation(msg));
    }
    let mut preds: Vec<&FrameRecord> = predictions.frames.iter().collect();
    preds.sort_by(|a, b| a.id.cmp(&b.id));
    let mut gts: Vec<&FrameRecord> = truths.frames.iter().collect();
    gts.sort_by(|a, b| a.id.cmp(&b.id));
    preds
        .iter()
        .zip(gts)
        .map(|(p, t)| {
            Ok(EvalFrame {
                id: t.id.clone(),
                group: t.category.clone().or_else(|| p.category.clone()),
                detections: p.eval_objects(taxonomy)?,
                truths: t.eval_objects(taxonomy)?,
            })
        })
        .collect()
}

/// Index of a six-digit frame id.
pub fn parse_frame_id(id: &str) -> Option<usize> {
    (id.len() == 6 && id.bytes().all(|b| b.is_ascii_digit()))
        .then(|| id.parse().ok())
        .flatten()
        .filter(|i| frame_id(*i) == id)
}
