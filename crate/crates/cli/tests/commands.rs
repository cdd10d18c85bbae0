use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use panobev::datagen::{
    generate_bev_gt, intrinsics_for_fov, stitch_views, synth_scene, view_rotation, PinholeView, StitchedPayload,
    SynthConfig, ViewPayload,
};
use panobev::io::depth::load_depth;
use panobev::io::manifest::parse_pose_text;
use panobev::io::png::{decode_label_png, decode_rgb_png, encode_label_png};
use panobev::io::{read_bytes, read_text, write_bytes};
use panobev::mapper::{train, MapperModel, TrainingScene};
use panobev::raster::LabelRaster;
use panobev::vocab::{Palette, Vocabulary};
use panobev::Vec3;
use serde_json::{json, Value};

fn panobev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panobev")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = panobev(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes one synthetic scene with a 50-cell grid and returns its file stem.
fn synth_files(dir: &Path, seed: u64) -> PathBuf {
    ok(&["synth", "--seed", &seed.to_string(), "--out-dir", s(dir), "--set", "bev.size=50"]);
    dir.join(format!("scene{seed:04}"))
}

fn with(stem: &Path, suffix: &str) -> String {
    format!("{}_{suffix}", stem.display())
}

#[test]
fn gen_bev_matches_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let stem = synth_files(dir.path(), 3);
    let out = dir.path().join("out/bev.png");
    ok(&[
        "gen-bev",
        "--image",
        &with(&stem, "rgb.png"),
        "--depth",
        &with(&stem, "depth.png"),
        "--sem",
        &with(&stem, "sem.png"),
        "--pose",
        &with(&stem, "pose.txt"),
        "--spec",
        "size=50",
        "--out",
        s(&out),
    ]);
    let sem = decode_label_png(&read_bytes(with(&stem, "sem.png")).unwrap()).unwrap();
    let depth = load_depth(with(&stem, "depth.png")).unwrap();
    let pose = parse_pose_text(&read_text(with(&stem, "pose.txt")).unwrap()).unwrap();
    let cfg = SynthConfig::default();
    let spec = panobev::bev::BevGridSpec { size: 50, ..cfg.spec };
    let grid = generate_bev_gt(&sem, &depth, &pose, &spec).unwrap();
    let expected = encode_label_png(
        &LabelRaster::new(50, 50, grid.labels.clone()).unwrap(),
        &Vocabulary::matterport().palette(),
    )
    .unwrap();
    assert_eq!(read_bytes(&out).unwrap(), expected);
    let side: Value = serde_json::from_slice(&read_bytes(dir.path().join("out/bev.json")).unwrap()).unwrap();
    assert_eq!(side["cell_size_m"], json!(0.2));
    assert_eq!(side["range_m"], json!(10.0));
    assert_eq!(side["pose"].as_array().unwrap().len(), 12);
    assert_eq!(side["classes"][0], "wall");
}

#[test]
fn gen_bev_default_spec_is_500_cells_of_2cm() {
    let dir = tempfile::tempdir().unwrap();
    let stem = synth_files(dir.path(), 0);
    let out = dir.path().join("full.png");
    ok(&[
        "gen-bev",
        "--image",
        &with(&stem, "rgb.png"),
        "--depth",
        &with(&stem, "depth.png"),
        "--sem",
        &with(&stem, "sem.png"),
        "--pose",
        &with(&stem, "pose.txt"),
        "--out",
        s(&out),
    ]);
    let r = decode_label_png(&read_bytes(&out).unwrap()).unwrap();
    assert_eq!((r.height, r.width), (500, 500));
    let side: Value = serde_json::from_slice(&read_bytes(dir.path().join("full.json")).unwrap()).unwrap();
    assert_eq!(side["cell_size_m"], json!(0.02));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let out = panobev(&[
        "gen-bev", "--image", s(&missing), "--depth", s(&missing), "--sem", s(&missing), "--pose", s(&missing),
        "--out", s(&dir.path().join("o.png")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.png"));
    assert!(!dir.path().join("o.png").exists());
}

fn cube_faces() -> Vec<(Vec3, Vec3)> {
    vec![
        (Vec3::z(), Vec3::y()),
        (-Vec3::z(), Vec3::y()),
        (Vec3::x(), Vec3::y()),
        (-Vec3::x(), Vec3::y()),
        (Vec3::y(), -Vec3::z()),
        (-Vec3::y(), Vec3::z()),
    ]
}

/// Renders pinhole label views of a synthetic scene, writes them and a manifest.
fn write_views(dir: &Path, seed: u64, faces: &[(Vec3, Vec3)], size: usize) -> (PathBuf, Vec<PinholeView>) {
    let scene = synth_scene(seed, &SynthConfig::default()).unwrap();
    let k = intrinsics_for_fov(size, PI / 2.0);
    let palette = Vocabulary::matterport().palette();
    let mut entries = Vec::new();
    let mut views = Vec::new();
    for (i, (f, up)) in faces.iter().enumerate() {
        let rotation = view_rotation(*f, *up).unwrap();
        let (labels, _) = scene.render_pinhole(size, size, &k, &rotation);
        let name = format!("view{i}.png");
        write_bytes(dir.join(&name), &encode_label_png(&labels, &palette).unwrap()).unwrap();
        let rows: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| rotation[(r, c)])).collect();
        entries.push(json!({"path": name, "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "rotation": rows}));
        views.push(PinholeView {
            payload: ViewPayload::Labels(labels),
            intrinsics: k,
            rotation,
            translation: Vec3::zeros(),
            position: None,
        });
    }
    let manifest = json!({"height": 64, "width": 128, "kind": "label", "views": entries});
    let path = dir.join("views.json");
    write_bytes(&path, manifest.to_string().as_bytes()).unwrap();
    (path, views)
}

#[test]
fn stitch_single_view_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, views) = write_views(dir.path(), 2, &cube_faces()[..1], 32);
    let out = dir.path().join("pano.png");
    ok(&["stitch", "--views-manifest", s(&manifest), "--out", s(&out)]);
    let lib = stitch_views(&views, 64, 128, None).unwrap();
    let StitchedPayload::Labels(expected) = lib.payload else { unreachable!() };
    assert_eq!(decode_label_png(&read_bytes(&out).unwrap()).unwrap(), expected);
    let cov = decode_label_png(&read_bytes(dir.path().join("pano.coverage.png")).unwrap()).unwrap();
    let mask: Vec<bool> = cov.data.iter().map(|v| *v == 255).collect();
    assert_eq!(mask, lib.coverage);
    assert!(mask.iter().any(|c| !c));
}

#[test]
fn stitch_dual_render_agrees_with_panorama() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_views(dir.path(), 5, &cube_faces(), 48);
    let out = dir.path().join("pano.png");
    ok(&["stitch", "--views-manifest", s(&manifest), "--out", s(&out)]);
    let pano = decode_label_png(&read_bytes(&out).unwrap()).unwrap();
    let truth = synth_scene(5, &SynthConfig::default()).unwrap().semantic;
    let agree = pano.data.iter().zip(&truth.data).filter(|(a, b)| a == b).count();
    assert!(agree as f64 >= 0.98 * truth.data.len() as f64, "{agree} of {}", truth.data.len());
}

#[test]
fn stitch_empty_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("views.json");
    write_bytes(&manifest, br#"{"height": 8, "width": 16, "kind": "rgb", "views": []}"#).unwrap();
    let out = panobev(&["stitch", "--views-manifest", s(&manifest), "--out", s(&dir.path().join("p.png"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_labels(path: &Path, h: usize, w: usize, data: Vec<u8>) {
    let r = LabelRaster::new(h, w, data).unwrap();
    write_bytes(path, &encode_label_png(&r, &Palette::default()).unwrap()).unwrap();
}

fn eval_dirs(dir: &Path, pred: Vec<u8>, gt: Vec<u8>, extra: &[&str]) -> (Value, String) {
    for (sub, data) in [("pred", pred), ("gt", gt)] {
        std::fs::create_dir_all(dir.join(sub)).unwrap();
        write_labels(&dir.join(sub).join("a.png"), 2, 2, data);
    }
    let (pred_dir, gt_dir, rep_dir) = (dir.join("pred"), dir.join("gt"), dir.join("rep"));
    let mut args = vec!["eval", "--pred-dir", s(&pred_dir), "--gt-dir", s(&gt_dir), "--out", s(&rep_dir)];
    args.extend_from_slice(extra);
    ok(&args);
    let json = read_text(dir.join("rep/report.json")).unwrap();
    (serde_json::from_str(&json).unwrap(), read_text(dir.join("rep/report.csv")).unwrap())
}

#[test]
fn eval_hand_counted_two_by_two() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("ab.txt");
    write_bytes(&classes, b"a\nb\n").unwrap();
    // pred = [A,A;B,B], gt = [A,B;B,B].
    let (rep, csv) = eval_dirs(dir.path(), vec![0, 0, 1, 1], vec![0, 1, 1, 1], &["--classes", s(&classes)]);
    assert!((rep["mIoU"].as_f64().unwrap() - 7.0 / 12.0).abs() < 1e-12);
    assert_eq!(rep["Acc"], json!(0.75));
    let text = read_text(dir.path().join("rep/report.json")).unwrap();
    let pos: Vec<usize> = ["\"Acc\"", "\"mRecall\"", "\"mPrecision\"", "\"mIoU\""]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    assert!(csv.starts_with("class_id,class_name,Acc,Recall,Precision,IoU\n"));
    assert!(csv.contains("\nmean,,0.750000,0.833333,0.750000,0.583333\n"), "{csv}");
}

#[test]
fn eval_identical_dirs_score_one_in_both_void_modes() {
    for mode in ["class", "ignore"] {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![0, 255, 1, 13];
        let (rep, _) = eval_dirs(dir.path(), labels.clone(), labels, &["--classes", "matterport", "--void-mode", mode]);
        for k in ["Acc", "mRecall", "mPrecision", "mIoU"] {
            assert_eq!(rep[k], json!(1.0), "{mode} {k}");
        }
        let expected = if mode == "class" { 4 } else { 3 };
        assert_eq!(rep["classes_evaluated"], json!(expected));
    }
}

#[test]
fn eval_rejects_out_of_vocabulary_labels() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("pred")).unwrap();
    std::fs::create_dir_all(dir.path().join("gt")).unwrap();
    write_labels(&dir.path().join("pred/a.png"), 1, 2, vec![0, 0]);
    write_labels(&dir.path().join("gt/a.png"), 1, 2, vec![0, 40]);
    let out = panobev(&[
        "eval", "--pred-dir", s(&dir.path().join("pred")), "--gt-dir", s(&dir.path().join("gt")),
        "--classes", "stanford", "--out", s(&dir.path().join("rep")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_default_dims_pass() {
    let text = ok(&["gradcheck"]);
    let value: f64 = text.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{text}");
    assert_eq!(panobev(&["gradcheck", "--dims", "8,16,2"]).status.code(), Some(2));
}

#[test]
fn render_map_colors() {
    let dir = tempfile::tempdir().unwrap();
    let bev = dir.path().join("bev.png");
    write_labels(&bev, 2, 2, vec![255, 0, 255, 255]);
    let out = dir.path().join("rgb.png");
    ok(&["render-map", "--bev", s(&bev), "--out", s(&out)]);
    let img = decode_rgb_png(&read_bytes(&out).unwrap()).unwrap().to_rgb8();
    assert_eq!(&img[3..6], &[173, 199, 232]);
    for px in [0, 2, 3] {
        assert_eq!(&img[px * 3..px * 3 + 3], &[0, 0, 0]);
    }
    let palette = dir.path().join("pal.txt");
    write_bytes(&palette, b"0 1 2 3\n").unwrap();
    ok(&["render-map", "--bev", s(&bev), "--palette", s(&palette), "--out", s(&out)]);
    let img = decode_rgb_png(&read_bytes(&out).unwrap()).unwrap().to_rgb8();
    assert_eq!(&img[3..6], &[1, 2, 3]);
}

#[test]
fn train_toy_matches_library_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["bev.size=30", "train.epochs=3", "model.channels=8", "model.attention_layers=1"];
    let mut args = vec!["train-toy", "--scenes", "synth:2"];
    for kv in &sets {
        args.extend_from_slice(&["--set", kv]);
    }
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    ok(&[args.clone(), vec!["--out-model", s(&a)]].concat());
    ok(&[args.clone(), vec!["--out-model", s(&b)]].concat());
    assert_eq!(read_bytes(&a).unwrap(), read_bytes(&b).unwrap());

    let mut synth = SynthConfig::default();
    synth.spec.size = 30;
    let scenes: Vec<TrainingScene> = (0..2)
        .map(|seed| {
            let sc = synth_scene(seed, &synth).unwrap();
            let gt = generate_bev_gt(&sc.semantic, &sc.depth, &sc.pose, &synth.spec).unwrap();
            TrainingScene {
                image: sc.rgb,
                depth: sc.depth,
                pose: sc.pose,
                gt,
            }
        })
        .collect();
    let mut config = panobev::mapper::MapperConfig {
        channels: 8,
        attention_layers: 1,
        ..Default::default()
    };
    config.spec.size = 30;
    let mut model = MapperModel::new(config).unwrap();
    let tc = panobev::mapper::TrainConfig {
        epochs: 3,
        ..Default::default()
    };
    train(&mut model, &scenes, &tc).unwrap();
    assert_eq!(MapperModel::load(&a).unwrap(), model);
}

#[test]
fn dump_config_feeds_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let dumped = ok(&["--dump-config"]);
    assert!(dumped.contains("bev.size = 500"));
    assert!(dumped.contains("train.optimizer.learning_rate = 0.001"));
    let cfg = dir.path().join("cfg.txt");
    write_bytes(&cfg, dumped.replace("bev.size = 500", "bev.size = 40").as_bytes()).unwrap();
    ok(&["synth", "--out-dir", s(&dir.path().join("a")), "--config", s(&cfg)]);
    ok(&["synth", "--out-dir", s(&dir.path().join("b")), "--set", "bev.size=40"]);
    for f in ["scene0000_bev.png", "scene0000_rgb.png", "scene0000_depth.png", "scenes.json"] {
        assert_eq!(
            read_bytes(dir.path().join("a").join(f)).unwrap(),
            read_bytes(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let bad = panobev(&["synth", "--out-dir", s(&dir.path().join("c")), "--set", "synth.nope=1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn predict_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let stem = synth_files(dir.path(), 1);
    let model = dir.path().join("m.ckpt");
    ok(&[
        "train-toy", "--scenes", s(&dir.path().join("scenes.json")), "--out-model", s(&model), "--set",
        "bev.size=50", "--set", "train.epochs=2", "--report", s(&dir.path().join("r.json")),
    ]);
    let report: Value = serde_json::from_slice(&read_bytes(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["loss_curve"].as_array().unwrap().len(), 2);
    let out = dir.path().join("pred.png");
    ok(&[
        "predict", "--model", s(&model), "--image", &with(&stem, "rgb.png"), "--depth", &with(&stem, "depth.png"),
        "--pose", &with(&stem, "pose.txt"), "--out", s(&out),
    ]);
    let m = MapperModel::load(&model).unwrap();
    let image = decode_rgb_png(&read_bytes(with(&stem, "rgb.png")).unwrap()).unwrap();
    let depth = load_depth(with(&stem, "depth.png")).unwrap();
    let pose = parse_pose_text(&read_text(with(&stem, "pose.txt")).unwrap()).unwrap();
    let grid = panobev::mapper::predict_map(&m, &image, &depth, &pose).unwrap();
    assert_eq!(decode_label_png(&read_bytes(&out).unwrap()).unwrap().data, grid.labels);
}
