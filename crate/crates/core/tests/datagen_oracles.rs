use std::f64::consts::PI;

use panobev::bev::{apply_pose, CameraPose};
use panobev::datagen::{
    default_rig, generate_global_xyz, intrinsics_for_fov, stitch_views, synth_scene, view_rotation, PinholeView,
    StitchedPayload, SynthConfig, ViewPayload,
};
use panobev::geo::{depth_to_points, make_angle_grid, DepthPanorama};
use panobev::raster::{LabelRaster, RgbImage};
use panobev::{Mat3, Vec3};
use proptest::prelude::*;

fn pose(yaw: f64, pitch: f64, t: [f64; 3]) -> CameraPose {
    let r = nalgebra::Rotation3::from_euler_angles(0.0, pitch, yaw);
    CameraPose::new(*r.matrix(), Vec3::from(t)).unwrap()
}

proptest! {
    #[test]
    fn xyz_equals_composition(yaw in -PI..PI, pitch in -1.0f64..1.0, t in prop::array::uniform3(-3.0f64..3.0),
                              d in proptest::collection::vec(0.0f64..5.0, 6 * 12)) {
        let depth = DepthPanorama::new(6, 12, d).unwrap();
        let p = pose(yaw, pitch, t);
        let xyz = generate_global_xyz(&depth, &p).unwrap();
        let grid = make_angle_grid(6, 12).unwrap();
        for i in 0..6 {
            for j in 0..12 {
                let k = i * 12 + j;
                prop_assert_eq!(xyz.valid[k], depth.get(i, j) > 0.0);
                if xyz.valid[k] {
                    // Scalar oracle: camera point from angles, then R^T X - t.
                    let (th, ph) = (grid.theta(i), grid.phi(j));
                    let dd = depth.get(i, j);
                    let cam = Vec3::new(dd * th.sin() * ph.sin(), dd * th.cos(), dd * th.sin() * ph.cos());
                    let world = p.rotation().transpose() * cam - p.translation();
                    prop_assert!((xyz.xyz[k] - world).norm() < 1e-9);
                    // Undoing the pose recovers a camera point of norm D.
                    let back = p.rotation() * (xyz.xyz[k] + p.translation());
                    prop_assert!((back.norm() - dd).abs() < 1e-9);
                }
            }
        }
        let via_bev = apply_pose(&depth_to_points(&depth, &grid).unwrap(), &p);
        prop_assert_eq!(&via_bev.points, &xyz.xyz);
    }

    #[test]
    fn stitching_is_payload_agnostic(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let classes = 4u8;
        let rig = default_rig();
        let k = intrinsics_for_fov(6, 1.4);
        let rasters: Vec<LabelRaster> = rig
            .iter()
            .map(|_| LabelRaster::new(6, 6, (0..36).map(|_| rng.random_range(0..classes)).collect()).unwrap())
            .collect();
        let views = |f: &dyn Fn(&LabelRaster) -> LabelRaster| -> Vec<PinholeView> {
            rig.iter().zip(&rasters).map(|(r, l)| PinholeView {
                payload: ViewPayload::Labels(f(l)),
                intrinsics: k,
                rotation: r.rotation,
                translation: Vec3::zeros(),
                position: Some(r.position.clone()),
            }).collect()
        };
        let unwrap = |s: StitchedPayload| match s { StitchedPayload::Labels(l) => l, _ => unreachable!() };
        let direct = stitch_views(&views(&|l| l.clone()), 8, 16, None).unwrap();
        let indicators: Vec<LabelRaster> = (0..classes)
            .map(|c| unwrap(stitch_views(&views(&|l| LabelRaster::new(6, 6, l.data.iter().map(|v| (*v == c) as u8).collect()).unwrap()), 8, 16, None).unwrap().payload))
            .collect();
        let labels = unwrap(direct.payload);
        for px in 0..8 * 16 {
            if !direct.coverage[px] {
                continue;
            }
            let arg = (0..classes as usize).find(|c| indicators[*c].data[px] == 1).unwrap();
            prop_assert_eq!(labels.data[px], arg as u8);
        }
    }
}

#[test]
fn default_rig_covers_the_sphere_except_poles() {
    let k = intrinsics_for_fov(16, PI / 2.0);
    let views: Vec<PinholeView> = default_rig()
        .into_iter()
        .map(|r| PinholeView {
            payload: ViewPayload::Labels(LabelRaster::filled(16, 16, 1)),
            intrinsics: k,
            rotation: r.rotation,
            translation: Vec3::zeros(),
            position: Some(r.position),
        })
        .collect();
    let out = stitch_views(&views, 32, 64, None).unwrap();
    // Rows within 22.5 degrees of the poles lie above the high ring's field of view.
    for r in 4..28 {
        for c in 0..64 {
            assert!(out.coverage[r * 64 + c], "({r}, {c})");
        }
    }
}

#[test]
fn rgb_stitch_with_depth_uses_translation() {
    // A view displaced along its optical axis sees a wall at depth 2 as if at depth 1.
    let size = 9;
    let mut img = RgbImage::zeros(size, size);
    for r in 0..size {
        for c in 0..size {
            img.set_pixel(r, c, [c as f64 / 8.0, r as f64 / 8.0, 0.5]);
        }
    }
    let rot = view_rotation(Vec3::z(), Vec3::y()).unwrap();
    let view = |t: Vec3| PinholeView {
        payload: ViewPayload::Rgb(img.clone()),
        intrinsics: intrinsics_for_fov(size, PI / 2.0),
        rotation: rot,
        translation: t,
        position: None,
    };
    let depth = DepthPanorama::new(8, 16, vec![2.0; 128]).unwrap();
    let near = stitch_views(&[view(Vec3::new(0.0, 0.0, -1.0))], 8, 16, Some(&depth)).unwrap();
    let far = stitch_views(&[view(Vec3::zeros())], 8, 16, None).unwrap();
    // Moving the view towards the scene widens the covered angular region.
    let covered = |s: &panobev::datagen::Stitched| s.coverage.iter().filter(|c| **c).count();
    assert!(covered(&near) < covered(&far));
    assert!(matches!(near.payload, StitchedPayload::Rgb(_)));
    assert_eq!(rot, Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)));
}

#[test]
fn dual_render_agreement() {
    let faces = [
        (Vec3::z(), Vec3::y()),
        (-Vec3::z(), Vec3::y()),
        (Vec3::x(), Vec3::y()),
        (-Vec3::x(), Vec3::y()),
        (Vec3::y(), -Vec3::z()),
        (-Vec3::y(), Vec3::z()),
    ];
    for seed in 10..13 {
        let s = synth_scene(seed, &SynthConfig::default()).unwrap();
        let k = intrinsics_for_fov(48, PI / 2.0);
        let views: Vec<PinholeView> = faces
            .iter()
            .map(|(f, up)| {
                let rotation = view_rotation(*f, *up).unwrap();
                PinholeView {
                    payload: ViewPayload::Labels(s.render_pinhole(48, 48, &k, &rotation).0),
                    intrinsics: k,
                    rotation,
                    translation: Vec3::zeros(),
                    position: None,
                }
            })
            .collect();
        let out = stitch_views(&views, 64, 128, None).unwrap();
        let StitchedPayload::Labels(l) = out.payload else { unreachable!() };
        assert!(out.coverage.iter().all(|c| *c));
        let agree = l.data.iter().zip(&s.semantic.data).filter(|(a, b)| a == b).count();
        assert!(agree as f64 >= 0.98 * l.data.len() as f64, "seed {seed}: {agree}");
    }
}
