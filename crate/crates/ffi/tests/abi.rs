use std::ffi::{CStr, CString};
use std::ptr;

use det3d_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(det3d_last_error()) }.to_string_lossy().into_owned()
}

fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> Det3dBox2D {
    Det3dBox2D {
        x_min: x0,
        y_min: y0,
        x_max: x1,
        y_max: y1,
        class_id: 0,
        score: 1.0,
    }
}

#[test]
fn box_metrics() {
    let (a, c) = (b(0., 0., 2., 2.), b(1., 0., 3., 2.));
    let mut v = 0.0;
    unsafe {
        assert_eq!(det3d_iou(&a, &c, &mut v), Det3dStatus::Ok);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        let (u, w) = (b(0., 0., 1., 1.), b(2., 0., 3., 1.));
        assert_eq!(det3d_diou(&u, &w, &mut v), Det3dStatus::Ok);
        assert!((v + 0.4).abs() < 1e-12);
        assert_eq!(det3d_loss_diou(&u, &w, &mut v), Det3dStatus::Ok);
        assert!((v - 1.4).abs() < 1e-12);
        let bad = b(2., 0., 1., 1.);
        assert_eq!(det3d_iou(&bad, &a, &mut v), Det3dStatus::Domain);
        assert!(last_error().contains("negative"));
        assert_eq!(det3d_iou(ptr::null(), &a, &mut v), Det3dStatus::NullPointer);
    }
}

#[test]
fn ap_and_map() {
    let t = [b(0., 0., 10., 10.)];
    let mut d = [b(0., 0., 10., 10.), b(50., 50., 60., 60.)];
    d[0].score = 0.9;
    d[1].score = 0.8;
    let (mut v, mut defined) = (0.0, 0u8);
    unsafe {
        assert_eq!(
            det3d_average_precision(d.as_ptr(), 2, t.as_ptr(), 1, 0.5, 0, &mut v, &mut defined),
            Det3dStatus::Ok
        );
        assert_eq!((v, defined), (1.0, 1));
        assert_eq!(
            det3d_average_precision(ptr::null(), 0, ptr::null(), 0, 0.5, 0, &mut v, &mut defined),
            Det3dStatus::Ok
        );
        assert_eq!(defined, 0);
        assert_eq!(
            det3d_average_precision(d.as_ptr(), 2, t.as_ptr(), 1, 0.5, 7, &mut v, &mut defined),
            Det3dStatus::InvalidArgument
        );
        let aps = [87.846443, 60.852219, 48.693352];
        assert_eq!(det3d_mean_average_precision(aps.as_ptr(), 3, &mut v), Det3dStatus::Ok);
        assert!((v - 65.797338).abs() < 1e-6);
        assert_eq!(det3d_mean_average_precision(ptr::null(), 0, &mut v), Det3dStatus::Domain);
    }
}

#[test]
fn sie_and_multibin() {
    let t = [1.0, 2.0, 5.0];
    let p = [2.0, 4.0, 10.0];
    let mut v = 1.0;
    unsafe {
        assert_eq!(det3d_sie(t.as_ptr(), p.as_ptr(), 3, &mut v), Det3dStatus::Ok);
        assert!(v.abs() < 1e-15);
        assert_eq!(det3d_sie(t.as_ptr(), p.as_ptr(), 0, &mut v), Det3dStatus::Domain);
        let conf = [0.2, 0.8];
        let cos = [1.0, 0.0];
        let sin = [0.0, 1.0];
        assert_eq!(
            det3d_decode_multibin(conf.as_ptr(), cos.as_ptr(), sin.as_ptr(), 2, &mut v),
            Det3dStatus::Ok
        );
        assert!((v - -180.0).abs() < 1e-9);
    }
}

#[test]
fn camera_round_trip() {
    let p = [100.0, 0.0, 320.0, 0.0, 0.0, 100.0, 240.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let mut cam = ptr::null_mut();
    unsafe {
        assert_eq!(det3d_camera_new(p.as_ptr(), &mut cam), Det3dStatus::Ok);
        let (mut u, mut v) = (0.0, 0.0);
        let x = [1.0, 2.0, 10.0];
        assert_eq!(det3d_project_point(cam, x.as_ptr(), &mut u, &mut v), Det3dStatus::Ok);
        assert_eq!((u, v), (330.0, 260.0));
        let mut back = [0.0; 3];
        assert_eq!(det3d_back_project(cam, u, v, 10.0, back.as_mut_ptr()), Det3dStatus::Ok);
        assert!(back.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-9));
        let behind = [0.0, 0.0, -1.0];
        assert_eq!(
            det3d_project_point(cam, behind.as_ptr(), &mut u, &mut v),
            Det3dStatus::BehindCamera
        );
        det3d_camera_free(cam);
        det3d_camera_free(ptr::null_mut());
    }
}

#[test]
fn pooling_and_files() {
    let data = [1.0f32, 3.0, 2.0, 0.0];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(det3d_feature_map_new(2, 2, 1, 3, data.as_ptr(), 4, &mut m), Det3dStatus::Ok);
        let mut pooled = ptr::null_mut();
        assert_eq!(det3d_center_pool(m, 0, &mut pooled), Det3dStatus::Ok);
        let out = std::slice::from_raw_parts(det3d_feature_map_data(pooled), 4);
        assert_eq!(out, &[5.0, 6.0, 4.0, 5.0]);
        let mut scan = ptr::null_mut();
        assert_eq!(det3d_directional_max_scan(m, 0, 0, 0, &mut scan), Det3dStatus::Ok);
        let mut v = 0.0f32;
        assert_eq!(det3d_feature_map_get(scan, 0, 1, 0, &mut v), Det3dStatus::Ok);
        assert_eq!(v, 3.0);
        assert_eq!(det3d_feature_map_get(scan, 5, 0, 0, &mut v), Det3dStatus::OutOfBounds);
        let mut corner = ptr::null_mut();
        assert_eq!(det3d_cascade_corner_pool(m, 0, 0, &mut corner), Det3dStatus::Ok);
        assert_eq!(det3d_cascade_corner_pool(m, 0, 9, &mut corner), Det3dStatus::InvalidArgument);
        assert_eq!(det3d_center_pool(m, 3, &mut pooled), Det3dStatus::OutOfBounds);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.fmap").to_str().unwrap()).unwrap();
        assert_eq!(det3d_feature_map_write_file(pooled, path.as_ptr()), Det3dStatus::Ok);
        let mut read = ptr::null_mut();
        assert_eq!(det3d_feature_map_read_file(path.as_ptr(), &mut read), Det3dStatus::Ok);
        let (mut h, mut w, mut c) = (0, 0, 0);
        assert_eq!(det3d_feature_map_shape(read, &mut h, &mut w, &mut c), Det3dStatus::Ok);
        assert_eq!((h, w, c), (2, 2, 1));
        let missing = CString::new(dir.path().join("nope.fmap").to_str().unwrap()).unwrap();
        assert_eq!(det3d_feature_map_read_file(missing.as_ptr(), &mut read), Det3dStatus::Io);
        assert!(last_error().contains("nope.fmap"));

        let bad = [2.0f32];
        assert_eq!(det3d_feature_map_new(1, 1, 1, 0, bad.as_ptr(), 1, &mut m), Det3dStatus::Domain);
        for p in [pooled, scan, corner, read, m] {
            det3d_feature_map_free(p);
        }
    }
}

#[test]
fn decode_synthetic_bundle() {
    use det3d::model::ClassTaxonomy;
    use det3d::synth::*;
    let tax = ClassTaxonomy::synthetic();
    let point = enumerate_sweep(&SweepSpec {
        category: SweepCategory::Camera,
        super_category: det3d::model::SuperCategory::Ground,
        repeats: 1,
        seed: 1,
    })[3];
    let scene = generate_scene(&point, 1, 3, 2, &tax, &GeneratorConfig::default()).unwrap();
    let rc = RenderConfig::default();
    let (h, w) = rc.grid_for(scene.image_width, scene.image_height);
    let dir = tempfile::tempdir().unwrap();
    render_ideal_maps(&scene, tax.len(), h, w, &rc)
        .unwrap()
        .write_dir(dir.path())
        .unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let cfg = det3d_decode_config_default();
    let p = scene.camera.row_major();
    unsafe {
        let mut cam = ptr::null_mut();
        assert_eq!(det3d_camera_new(p.as_ptr(), &mut cam), Det3dStatus::Ok);
        let mut dets = ptr::null_mut();
        assert_eq!(det3d_decode_bundle_dir(path.as_ptr(), &cfg, cam, &mut dets), Det3dStatus::Ok);
        assert_eq!(det3d_detections_len(dets), 2);
        let mut bx = b(0., 0., 0., 0.);
        let mut b3 = std::mem::zeroed::<Det3dBox3D>();
        let mut has = 0u8;
        for i in 0..2 {
            assert_eq!(det3d_detections_box2d(dets, i, &mut bx), Det3dStatus::Ok);
            assert!(scene
                .objects
                .iter()
                .any(|o| (o.box2d.x_min() - bx.x_min).abs() < 1e-3 && (o.box2d.y_max() - bx.y_max).abs() < 1e-3));
            assert_eq!(det3d_detections_box3d(dets, i, &mut b3, &mut has), Det3dStatus::Ok);
            assert_eq!(has, 1);
        }
        assert_eq!(det3d_detections_box2d(dets, 2, &mut bx), Det3dStatus::OutOfBounds);
        det3d_detections_free(dets);
        det3d_camera_free(cam);

        let mut bad = cfg;
        bad.nms_window = 2;
        assert_eq!(det3d_decode_bundle_dir(path.as_ptr(), &bad, ptr::null(), &mut dets), Det3dStatus::Config);
    }
}
