//! Synthetic scene oracle: sweep grids over viewing conditions, random
//! vehicle layouts, and the ideal maps a perfect network would emit for them.

mod render;
mod scene;
mod sweep;

pub use render::{corrupt_maps, render_ideal_maps, RenderConfig};
pub use scene::{
    dimension_prior, frame_id, generate_scene, GeneratorConfig, SceneObject, SceneSample,
};
pub use sweep::{
    background_sensor_styles, camera_azimuths, camera_distances, camera_elevations,
    condition_noise, enumerate_sweep, grid_size, light_azimuths, light_elevations,
    light_intensities, linspace, swept_sensor_styles, weather_states, CameraPose, Environment,
    Light, SensorStyle, SweepCategory, SweepPoint, SweepSpec, Weather,
};
