use det3d::decode::{decode_frame, DecodeConfig};
use det3d::metrics::{evaluate, EvalFrame, EvalObject, MatchPolicy};
use det3d::model::{ClassTaxonomy, SuperCategory};
use det3d::synth::{
    enumerate_sweep, generate_scene, render_ideal_maps, GeneratorConfig, RenderConfig,
    SweepCategory, SweepSpec,
};
use proptest::prelude::*;

fn round_trip_map(category: SweepCategory, sup: SuperCategory, seed: u64, objects: usize) -> f64 {
    let tax = ClassTaxonomy::synthetic();
    let render = RenderConfig::default();
    let cfg = DecodeConfig {
        stride: render.stride,
        ..DecodeConfig::default()
    };
    let spec = SweepSpec {
        category,
        super_category: sup,
        repeats: 1,
        seed,
    };
    let points = enumerate_sweep(&spec);
    let mut frames = Vec::new();
    for (i, point) in points.iter().enumerate().step_by(5) {
        let scene = generate_scene(point, seed, i, objects, &tax, &GeneratorConfig::default()).unwrap();
        let (h, w) = render.grid_for(scene.image_width, scene.image_height);
        let maps = render_ideal_maps(&scene, tax.len(), h, w, &render).unwrap();
        let dets = decode_frame(&maps, &cfg, Some(&scene.camera)).unwrap();
        assert_eq!(dets.len(), objects, "scene {i}");
        frames.push(EvalFrame {
            id: scene.id.clone(),
            group: None,
            detections: dets
                .iter()
                .map(|d| EvalObject { box2d: d.box2d, box3d: d.box3d })
                .collect(),
            truths: scene
                .objects
                .iter()
                .map(|o| EvalObject { box2d: o.box2d, box3d: Some(o.box3d) })
                .collect(),
        });
    }
    let report = evaluate(&frames, &tax, &MatchPolicy::default()).unwrap();
    assert!(report.mean_center_error_m.unwrap() < 0.5, "{report:?}");
    report.map
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn multi_object_scenes_decode_exactly(
        seed in 0u64..10_000,
        objects in 1usize..=4,
        category in prop::sample::select(SweepCategory::ALL.to_vec()),
        air in any::<bool>(),
    ) {
        let sup = if air { SuperCategory::Air } else { SuperCategory::Ground };
        prop_assert_eq!(round_trip_map(category, sup, seed, objects), 1.0);
    }
}
