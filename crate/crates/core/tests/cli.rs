use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use det3d::dataset::{manifest_path, FramesFile, Manifest};

fn det3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_det3d"))
        .args(args)
        .env_remove("DET3D_SEED")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_decode_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = det3d(&["synth", "--category", "camera", "--super", "ground", "--seed", "5", "--out", p(&ds)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = Manifest::load(&manifest_path(&ds)).unwrap();
    assert_eq!(manifest.samples.len(), 48);

    let pred = tmp.path().join("pred.json");
    let out = det3d(&["decode", "--input", p(&ds), "--out", p(&pred)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let frames: FramesFile = serde_json::from_str(&fs::read_to_string(&pred).unwrap()).unwrap();
    assert_eq!(frames.frames.len(), 48);

    let report = tmp.path().join("report.json");
    let out = det3d(&["eval", "--pred", p(&pred), "--truth", p(&ds), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("mAP"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["map"], 1.0);
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let dir = tmp.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_det3d"))
            .args(["synth", "--jobs", jobs, "--category", "sensor", "--super", "air", "--out", p(&dir)])
            .env("DET3D_SEED", "77")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        dir
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    let ma = fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(ma, fs::read(b.join("manifest.json")).unwrap());
    assert_eq!(Manifest::load(&manifest_path(&a)).unwrap().seed, 77);
    for entry in Manifest::load(&manifest_path(&a)).unwrap().samples {
        assert_eq!(fs::read(a.join(&entry.scene)).unwrap(), fs::read(b.join(&entry.scene)).unwrap());
    }
}

#[test]
fn per_class_ap_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("ap.json");
    fs::write(&table, r#"{"Car": 87.846443, "Pedestrian": 60.852219, "Cyclist": 48.693352}"#).unwrap();
    let out = det3d(&["eval", "--per-class-ap", p(&table)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("65.797338"), "{}", stdout(&out));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(det3d(&[]).status.code(), Some(2));
    assert_eq!(det3d(&["synth", "--category", "rain", "--out", "x"]).status.code(), Some(2));
    assert_eq!(det3d(&["decode", "--input", "x", "--score-threshold", "1.5"]).status.code(), Some(2));

    let missing = tmp.path().join("missing");
    let out = det3d(&["decode", "--input", p(&missing)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let bad = tmp.path().join("bad.fmap");
    fs::write(&bad, b"FMAP\x01\x00").unwrap();
    let out = det3d(&["pool", "--input", p(&bad), "--op", "center", "--out", p(&tmp.path().join("o.fmap"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!stderr(&out).is_empty());

    let garbage = tmp.path().join("pred.json");
    fs::write(&garbage, "{ not json").unwrap();
    let out = det3d(&["eval", "--pred", p(&garbage), "--truth", p(&garbage)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn kitti_conversion_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = det3d(&["synth", "--category", "weather", "--super", "ground", "--seed", "1", "--out", p(&ds)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let kitti = tmp.path().join("kitti");
    let out = det3d(&["convert", "to-kitti", "--input", p(&ds), "--out", p(&kitti)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let labels = kitti.join("label_2");
    let n = Manifest::load(&manifest_path(&ds)).unwrap().samples.len();
    assert_eq!(fs::read_dir(&labels).unwrap().count(), n);
    assert_eq!(fs::read_dir(kitti.join("calib")).unwrap().count(), n);

    let frames = tmp.path().join("frames.json");
    let out = det3d(&["convert", "from-kitti", "--labels", p(&labels), "--classes", "synthetic", "--out", p(&frames)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // The 2D boxes survive the trip exactly enough to score perfectly.
    let out = det3d(&["eval", "--pred", p(&frames), "--truth", p(&ds)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("mAP         100.000000"), "{}", stdout(&out));
}

#[test]
fn pool_writes_single_channel_map() {
    use det3d::model::{FeatureMap, MapRole};
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.fmap");
    let data = vec![1.0, 0.0, 0.0, 0.0, 0.0, 3.0];
    let map = FeatureMap::new(2, 3, 1, MapRole::Generic, data).unwrap();
    fs::write(&input, det3d::fmap::encode(&map)).unwrap();
    let output = tmp.path().join("out.fmap");
    let out = det3d(&["pool", "--input", p(&input), "--op", "top-left", "--out", p(&output)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let pooled = det3d::fmap::read_file(&output).unwrap();
    // quadrant max plus row-rightward max
    assert_eq!(pooled.get(0, 0, 0).unwrap(), 3.0 + 1.0);
    assert_eq!(pooled.get(1, 0, 0).unwrap(), 3.0 + 3.0);
    assert_eq!(pooled.get(0, 1, 0).unwrap(), 3.0 + 0.0);
}
