use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::SuperCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCategory {
    Camera,
    Light,
    Weather,
    Sensor,
}

impl SweepCategory {
    pub const ALL: [SweepCategory; 4] = [Self::Camera, Self::Light, Self::Weather, Self::Sensor];

    pub fn name(self) -> &'static str {
        match self {
            Self::Camera => "camera",
            Self::Light => "light",
            Self::Weather => "weather",
            Self::Sensor => "sensor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    City,
    Desert,
    Forest,
    Grass,
}

impl Environment {
    pub const ALL: [Environment; 4] = [Self::City, Self::Desert, Self::Forest, Self::Grass];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorStyle {
    Rgb,
    Night,
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub distance_m: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub intensity_pct: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weather {
    pub rain: bool,
    pub wind: f64,
}

/// Every parameter of one generated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub category: SweepCategory,
    pub super_category: SuperCategory,
    pub environment: Environment,
    pub camera: CameraPose,
    pub light: Light,
    pub weather: Weather,
    pub sensor: SensorStyle,
}

/// Which parameter family is varied over its full grid, for which vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub category: SweepCategory,
    pub super_category: SuperCategory,
    /// Independent samples per grid point.
    pub repeats: usize,
    pub seed: u64,
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn camera_distances(sup: SuperCategory) -> Vec<f64> {
    match sup {
        SuperCategory::Air => linspace(70.0, 350.0, 4),
        SuperCategory::Ground => linspace(15.0, 75.0, 4),
    }
}

pub fn camera_elevations() -> Vec<f64> {
    linspace(5.0, 85.0, 4)
}

pub fn camera_azimuths() -> Vec<f64> {
    linspace(0.0, 240.0, 3)
}

pub fn light_intensities() -> Vec<f64> {
    linspace(10.0, 100.0, 3)
}

pub fn light_elevations() -> Vec<f64> {
    linspace(5.0, 90.0, 3)
}

pub fn light_azimuths() -> Vec<f64> {
    linspace(0.0, 180.0, 3)
}

pub fn weather_states() -> Vec<Weather> {
    vec![
        Weather { rain: false, wind: 0.0 },
        Weather { rain: true, wind: 0.0 },
        Weather { rain: true, wind: 10.0 },
    ]
}

/// Styles swept by the sensor category.
pub fn swept_sensor_styles() -> Vec<SensorStyle> {
    vec![SensorStyle::Night, SensorStyle::Thermal]
}

/// Styles drawn for samples of the other categories.
pub fn background_sensor_styles() -> Vec<SensorStyle> {
    vec![SensorStyle::Rgb, SensorStyle::Night, SensorStyle::Thermal]
}

fn camera_grid(sup: SuperCategory) -> Vec<CameraPose> {
    let mut out = Vec::new();
    for &distance_m in &camera_distances(sup) {
        for &elevation_deg in &camera_elevations() {
            for &azimuth_deg in &camera_azimuths() {
                out.push(CameraPose {
                    distance_m,
                    elevation_deg,
                    azimuth_deg,
                });
            }
        }
    }
    out
}

fn light_grid() -> Vec<Light> {
    let mut out = Vec::new();
    for &intensity_pct in &light_intensities() {
        for &elevation_deg in &light_elevations() {
            for &azimuth_deg in &light_azimuths() {
                out.push(Light {
                    intensity_pct,
                    elevation_deg,
                    azimuth_deg,
                });
            }
        }
    }
    out
}

/// Number of grid points of a category before repeats.
pub fn grid_size(category: SweepCategory, sup: SuperCategory) -> usize {
    match category {
        SweepCategory::Camera => camera_grid(sup).len(),
        SweepCategory::Light => light_grid().len(),
        SweepCategory::Weather => weather_states().len(),
        SweepCategory::Sensor => swept_sensor_styles().len(),
    }
}

/// Per-sample generator: stream `2 id` for parameters, `2 id + 1` for scenes.
pub(crate) fn sample_rng(seed: u64, id: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * id as u64 + stream);
    rng
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, values: &[T]) -> T {
    *values.choose(rng).expect("parameter sets are non-empty")
}

/// Full grid of the varied family, each point repeated `repeats` times, in
/// grid-major order. Parameters outside the varied family are drawn uniformly
/// from their own grids, seeded per sample index.
pub fn enumerate_sweep(spec: &SweepSpec) -> Vec<SweepPoint> {
    let sup = spec.super_category;
    let cameras = camera_grid(sup);
    let lights = light_grid();
    let weathers = weather_states();
    let n = grid_size(spec.category, sup);
    let mut out = Vec::with_capacity(n * spec.repeats);
    for g in 0..n {
        for _ in 0..spec.repeats {
            let mut rng = sample_rng(spec.seed, out.len(), 0);
            let environment = pick(&mut rng, &Environment::ALL);
            let mut point = SweepPoint {
                category: spec.category,
                super_category: sup,
                environment,
                camera: pick(&mut rng, &cameras),
                light: pick(&mut rng, &lights),
                weather: pick(&mut rng, &weathers),
                sensor: pick(&mut rng, &background_sensor_styles()),
            };
            match spec.category {
                SweepCategory::Camera => point.camera = cameras[g],
                SweepCategory::Light => point.light = lights[g],
                SweepCategory::Weather => point.weather = weathers[g],
                SweepCategory::Sensor => point.sensor = swept_sensor_styles()[g],
            }
            out.push(point);
        }
    }
    out
}

/// Heatmap noise level implied by the sample's viewing conditions, for use
/// with [`corrupt_maps`](super::corrupt_maps). Clear daylight RGB is 0.
pub fn condition_noise(point: &SweepPoint) -> f64 {
    let mut level = match point.sensor {
        SensorStyle::Rgb => 0.0,
        SensorStyle::Thermal => 0.01,
        SensorStyle::Night => 0.02,
    };
    if point.weather.rain {
        level += 0.01;
    }
    if point.weather.wind > 0.0 {
        level += 0.005;
    }
    if point.light.intensity_pct < 50.0 {
        level += 0.01;
    }
    level
}
