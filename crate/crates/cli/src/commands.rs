//! Subcommand bodies. Each one reads its inputs, makes the matching library
//! call and writes the result without further processing.

use std::path::{Path, PathBuf};

use panobev::attn::{attention_layer_gradcheck, GradCheckDims};
use panobev::bev::{BevGrid, BevGridSpec, CameraPose};
use panobev::datagen::{
    generate_bev_gt, stitch_views, synth_scene, Intrinsics, PinholeView, StitchedPayload, ViewPayload,
};
use panobev::geo::DepthPanorama;
use panobev::io::depth::{load_depth, save_depth};
use panobev::io::manifest::{
    format_pose_text, parse_pose_text, PayloadKind, SceneFrame, SceneManifest, VocabularyRef, ViewsManifest,
};
use panobev::io::png::{
    decode_label_png, decode_rgb_png, encode_gray8_png, encode_label_png, encode_rgb_png,
};
use panobev::io::{read_bytes, read_text, write_bytes};
use panobev::mapper::{evaluate_scenes, predict_map, train, MapperModel, TrainingScene};
use panobev::metrics::{remap_void, void_aware_matrix, VoidMode};
use panobev::raster::{LabelRaster, RgbImage};
use panobev::vocab::{Palette, Vocabulary};
use panobev::{Error, Mat3, Vec3, VOID_LABEL};
use serde_json::json;

use crate::settings::Settings;
use crate::Failure;

type CmdResult = Result<(), Failure>;

/// Largest relative error the gradient check accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// A bundled vocabulary name or a path to a class-list file.
pub fn load_vocabulary(arg: &str) -> panobev::Result<Vocabulary> {
    match Vocabulary::builtin(arg) {
        Some(v) => Ok(v),
        None => Vocabulary::parse(arg, &read_text(arg)?),
    }
}

/// A bundled vocabulary's legend colors or a palette file.
pub fn load_palette(arg: &str) -> panobev::Result<Palette> {
    match Vocabulary::builtin(arg) {
        Some(v) => Ok(v.palette()),
        None => Palette::parse(&read_text(arg)?),
    }
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn bev_raster(grid: &BevGrid) -> panobev::Result<LabelRaster> {
    LabelRaster::new(grid.spec.size, grid.spec.size, grid.labels.clone())
}

fn write_bev(out: &Path, grid: &BevGrid, pose: &CameraPose, vocab: &Vocabulary) -> panobev::Result<()> {
    write_bytes(out, &encode_label_png(&bev_raster(grid)?, &vocab.palette())?)?;
    let sidecar = json!({
        "cell_size_m": grid.spec.cell_size(),
        "range_m": grid.spec.range,
        "pose": pose.to_row_major(),
        "classes": vocab.classes,
    });
    write_bytes(sidecar_path(out), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

fn read_pose(path: &Path) -> panobev::Result<CameraPose> {
    parse_pose_text(&read_text(path)?)
}

pub fn gen_bev(
    image: &Path,
    depth: &Path,
    sem: &Path,
    pose: &Path,
    spec: &BevGridSpec,
    classes: &str,
    out: &Path,
) -> CmdResult {
    let vocab = load_vocabulary(classes)?;
    let rgb = decode_rgb_png(&read_bytes(image)?)?;
    let depth = load_depth(depth)?;
    let sem = decode_label_png(&read_bytes(sem)?)?;
    let pose = read_pose(pose)?;
    if (rgb.height, rgb.width) != (depth.height(), depth.width()) {
        return Err(Error::InvalidArgument(format!(
            "image is {}x{} but depth is {}x{}",
            rgb.height,
            rgb.width,
            depth.height(),
            depth.width()
        ))
        .into());
    }
    let grid = generate_bev_gt(&sem, &depth, &pose, spec)?;
    write_bev(out, &grid, &pose, &vocab)?;
    Ok(())
}

pub fn coverage_path(out: &Path) -> PathBuf {
    out.with_extension("coverage.png")
}

pub fn load_views(manifest: &ViewsManifest) -> panobev::Result<Vec<PinholeView>> {
    manifest
        .views
        .iter()
        .map(|v| {
            let bytes = read_bytes(&v.path)?;
            let payload = match manifest.kind {
                PayloadKind::Label => ViewPayload::Labels(decode_label_png(&bytes)?),
                PayloadKind::Rgb => ViewPayload::Rgb(decode_rgb_png(&bytes)?),
            };
            let t = v.translation.as_deref().unwrap_or(&[0.0, 0.0, 0.0]);
            Ok(PinholeView {
                payload,
                intrinsics: Intrinsics {
                    fx: v.fx,
                    fy: v.fy,
                    cx: v.cx,
                    cy: v.cy,
                },
                rotation: Mat3::from_row_slice(&v.rotation),
                translation: Vec3::new(t[0], t[1], t[2]),
                position: v.position.clone(),
            })
        })
        .collect()
}

pub fn stitch(manifest_path: &Path, depth: Option<&Path>, classes: &str, out: &Path, coverage: Option<&Path>) -> CmdResult {
    let mut manifest = ViewsManifest::parse(&read_bytes(manifest_path)?)?;
    manifest.resolve_paths(manifest_path.parent().unwrap_or(Path::new(".")));
    let views = load_views(&manifest)?;
    let depth = depth.map(load_depth).transpose()?;
    let s = stitch_views(&views, manifest.height, manifest.width, depth.as_ref())?;
    let bytes = match &s.payload {
        StitchedPayload::Labels(l) => encode_label_png(l, &load_palette(classes)?)?,
        StitchedPayload::Rgb(img) => encode_rgb_png(img)?,
    };
    write_bytes(out, &bytes)?;
    let mask: Vec<u8> = s.coverage.iter().map(|c| if *c { 255 } else { 0 }).collect();
    let cov = coverage.map(Path::to_path_buf).unwrap_or_else(|| coverage_path(out));
    write_bytes(cov, &encode_gray8_png(manifest.height, manifest.width, &mask)?)?;
    Ok(())
}

fn png_names(dir: &Path) -> panobev::Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") && !name.ends_with(".coverage.png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn eval(pred_dir: &Path, gt_dir: &Path, classes: &str, out: &Path, mode: VoidMode) -> CmdResult {
    let vocab = load_vocabulary(classes)?;
    let k = vocab.len();
    let names = png_names(gt_dir)?;
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!("no .png ground truth in {}", gt_dir.display())).into());
    }
    let mut cm = void_aware_matrix(k, VOID_LABEL, mode)?;
    for name in &names {
        let gt = decode_label_png(&read_bytes(gt_dir.join(name))?)?;
        let pred = decode_label_png(&read_bytes(pred_dir.join(name))?)?;
        if (gt.height, gt.width) != (pred.height, pred.width) {
            return Err(Error::InvalidArgument(format!("{name}: prediction and ground truth dims differ")).into());
        }
        cm.accumulate_slices(
            &remap_void(&pred.data, k, VOID_LABEL, mode),
            &remap_void(&gt.data, k, VOID_LABEL, mode),
        )
        .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")))?;
    }
    let report = cm.summarize()?;
    let mut class_names = vocab.classes.clone();
    if mode == VoidMode::Class {
        class_names.push("void".into());
    }
    write_bytes(out.join("report.csv"), report.to_csv(&class_names).as_bytes())?;
    write_bytes(out.join("report.json"), report.to_json().as_bytes())?;
    println!("{}", report.to_json());
    Ok(())
}

fn frame_scene(frame: &SceneFrame, spec: &BevGridSpec) -> panobev::Result<TrainingScene> {
    let image = decode_rgb_png(&read_bytes(&frame.image)?)?;
    let depth = load_depth(&frame.depth)?;
    let pose = frame.camera_pose()?;
    let gt = match (&frame.bev, &frame.semantic) {
        (Some(bev), _) => {
            let r = decode_label_png(&read_bytes(bev)?)?;
            if (r.height, r.width) != (spec.size, spec.size) {
                return Err(Error::InvalidArgument(format!(
                    "{}: BEV is {}x{}, grid is {}x{}",
                    bev.display(),
                    r.height,
                    r.width,
                    spec.size,
                    spec.size
                )));
            }
            let mut grid = BevGrid::empty(spec);
            for (k, l) in r.data.iter().enumerate() {
                grid.labels[k] = *l;
                grid.observed[k] = *l != spec.void_label;
            }
            grid
        }
        (None, Some(sem)) => generate_bev_gt(&decode_label_png(&read_bytes(sem)?)?, &depth, &pose, spec)?,
        (None, None) => {
            return Err(Error::InvalidArgument(format!(
                "{}: frame has neither `bev` nor `semantic`",
                frame.image.display()
            )))
        }
    };
    Ok(TrainingScene { image, depth, pose, gt })
}

/// Training scenes from `synth:N` (seeds `0..N`) or a scene manifest.
pub fn load_scenes(arg: &str, s: &Settings) -> panobev::Result<Vec<TrainingScene>> {
    if let Some(n) = arg.strip_prefix("synth:") {
        let n: u64 = n
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{arg:?}: expected synth:<count>")))?;
        return (0..n)
            .map(|seed| {
                let scene = synth_scene(seed, &s.synth)?;
                let gt = generate_bev_gt(&scene.semantic, &scene.depth, &scene.pose, &s.bev)?;
                Ok(TrainingScene {
                    image: scene.rgb,
                    depth: scene.depth,
                    pose: scene.pose,
                    gt,
                })
            })
            .collect();
    }
    let path = Path::new(arg);
    let mut m = SceneManifest::parse(&read_bytes(path)?)?;
    m.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    let vocab = m.vocabulary.resolve()?;
    if vocab.len() != s.model.num_classes {
        return Err(Error::InvalidArgument(format!(
            "manifest vocabulary has {} classes but model.num_classes = {}",
            vocab.len(),
            s.model.num_classes
        )));
    }
    m.frames.iter().map(|f| frame_scene(f, &s.bev)).collect()
}

pub fn train_toy(scenes: &str, s: &Settings, out_model: &Path, report: Option<&Path>) -> CmdResult {
    let scenes = load_scenes(scenes, s)?;
    let mut model = MapperModel::new(s.model)?;
    let r = train(&mut model, &scenes, &s.train)?;
    model.save(out_model)?;
    let metrics = evaluate_scenes(&model, &scenes, VoidMode::Ignore)?;
    let summary = json!({
        "epochs": r.loss_curve.len(),
        "steps": r.steps,
        "initial_loss": r.loss_curve.first(),
        "final_loss": r.loss_curve.last(),
        "train_metrics": metrics.summary(),
        "loss_curve": r.loss_curve,
    });
    if let Some(p) = report {
        write_bytes(p, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    }
    println!("{}", serde_json::to_string_pretty(&json!({
        "initial_loss": summary["initial_loss"],
        "final_loss": summary["final_loss"],
        "train_metrics": summary["train_metrics"],
    }))?);
    Ok(())
}

pub fn parse_dims(text: &str) -> panobev::Result<GradCheckDims> {
    let v = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .ok()
        .filter(|v| v.len() == 4 && v.iter().all(|x| *x > 0))
        .ok_or_else(|| Error::InvalidArgument(format!("--dims {text:?}: expected four positive integers C,N,H,P")))?;
    Ok(GradCheckDims {
        channels: v[0],
        queries: v[1],
        n_head: v[2],
        n_point: v[3],
    })
}

pub fn gradcheck(dims: &str, seed: u64, step: f64) -> CmdResult {
    let dims = parse_dims(dims)?;
    let r = attention_layer_gradcheck(dims, seed, step)?;
    println!(
        "max relative error {:e} over {} values (worst index {}: analytic {:e}, numeric {:e})",
        r.max_rel_error, r.checked, r.worst_index, r.analytic, r.numeric
    );
    if r.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("gradient check failed: {:e} >= {GRADCHECK_TOLERANCE:e}", r.max_rel_error),
        })
    }
}

/// Colors each label through `palette`; ids without a color render black.
pub fn colorize(labels: &LabelRaster, palette: &Palette) -> panobev::Result<RgbImage> {
    let bytes: Vec<u8> = labels.data.iter().flat_map(|l| palette.color(*l)).collect();
    RgbImage::from_rgb8(labels.height, labels.width, &bytes)
}

pub fn render_map(bev: &Path, palette: &str, out: &Path) -> CmdResult {
    let labels = decode_label_png(&read_bytes(bev)?)?;
    let img = colorize(&labels, &load_palette(palette)?)?;
    write_bytes(out, &encode_rgb_png(&img)?)?;
    Ok(())
}

pub fn predict(model: &Path, image: &Path, depth: &Path, pose: &Path, classes: &str, out: &Path) -> CmdResult {
    let model = MapperModel::load(model)?;
    let vocab = load_vocabulary(classes)?;
    if vocab.len() != model.config.num_classes {
        return Err(Error::InvalidArgument(format!(
            "vocabulary has {} classes, model predicts {}",
            vocab.len(),
            model.config.num_classes
        ))
        .into());
    }
    let image = decode_rgb_png(&read_bytes(image)?)?;
    let depth = load_depth(depth)?;
    let pose = read_pose(pose)?;
    let grid = predict_map(&model, &image, &depth, &pose)?;
    write_bev(out, &grid, &pose, &vocab)?;
    Ok(())
}

/// Writes `count` scenes with seeds `seed..seed + count` plus `scenes.json`.
pub fn synth(seed: u64, count: u64, s: &Settings, out_dir: &Path) -> CmdResult {
    let vocab = Vocabulary::matterport();
    let mut frames = Vec::new();
    for i in 0..count {
        let scene = synth_scene(seed + i, &s.synth)?;
        let stem = format!("scene{:04}", seed + i);
        let file = |suffix: &str| PathBuf::from(format!("{stem}_{suffix}"));
        write_bytes(out_dir.join(file("rgb.png")), &encode_rgb_png(&scene.rgb)?)?;
        save_depth(out_dir.join(file("depth.png")), &scene.depth)?;
        write_bytes(
            out_dir.join(file("sem.png")),
            &encode_label_png(&scene.semantic, &vocab.palette())?,
        )?;
        write_bytes(out_dir.join(file("pose.txt")), format_pose_text(&scene.pose).as_bytes())?;
        // Ground truth from the files as written, so it matches gen-bev on them.
        let depth: DepthPanorama = load_depth(out_dir.join(file("depth.png")))?;
        let grid = generate_bev_gt(&scene.semantic, &depth, &scene.pose, &s.bev)?;
        write_bev(&out_dir.join(file("bev.png")), &grid, &scene.pose, &vocab)?;
        frames.push(SceneFrame {
            image: file("rgb.png"),
            depth: file("depth.png"),
            semantic: Some(file("sem.png")),
            bev: Some(file("bev.png")),
            pose: scene.pose.to_row_major().to_vec(),
        });
    }
    let manifest = SceneManifest {
        vocabulary: VocabularyRef::Builtin("matterport".into()),
        frames,
    };
    write_bytes(out_dir.join("scenes.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}
