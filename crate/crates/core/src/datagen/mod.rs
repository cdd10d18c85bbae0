//! Dataset construction: pinhole-to-panorama stitching, global XYZ images,
//! BEV ground truth and a ray-cast synthetic room generator.

mod stitch;
mod synth;

pub use stitch::{
    default_rig, intrinsics_for_fov, stitch_views, view_rotation, Intrinsics, PinholeView, RigView, Stitched,
    StitchedPayload, ViewPayload,
};
pub use synth::{synth_scene, SynthBox, SynthConfig, SynthScene, SYNTH_OBJECTS};

use crate::bev::{apply_pose, rasterize_semantic_bev, BevGrid, BevGridSpec, CameraPose};
use crate::geo::{depth_to_points, make_angle_grid, DepthPanorama};
use crate::raster::LabelRaster;
use crate::{Error, Result, Vec3};

/// Per-pixel world coordinates with validity.
#[derive(Debug, Clone, PartialEq)]
pub struct XYZImage {
    pub height: usize,
    pub width: usize,
    pub xyz: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl XYZImage {
    pub fn get(&self, r: usize, c: usize) -> Option<Vec3> {
        let k = r * self.width + c;
        self.valid[k].then(|| self.xyz[k])
    }
}

pub fn generate_global_xyz(depth: &DepthPanorama, pose: &CameraPose) -> Result<XYZImage> {
    let grid = make_angle_grid(depth.height(), depth.width())?;
    let world = apply_pose(&depth_to_points(depth, &grid)?, pose);
    Ok(XYZImage {
        height: world.height,
        width: world.width,
        xyz: world.points,
        valid: world.valid,
    })
}

pub fn generate_bev_gt(
    semantic: &LabelRaster,
    depth: &DepthPanorama,
    pose: &CameraPose,
    spec: &BevGridSpec,
) -> Result<BevGrid> {
    if (semantic.height, semantic.width) != (depth.height(), depth.width()) {
        return Err(Error::invalid(format!(
            "semantic panorama is {}x{} but depth is {}x{}",
            semantic.height,
            semantic.width,
            depth.height(),
            depth.width()
        )));
    }
    let grid = make_angle_grid(depth.height(), depth.width())?;
    let world = apply_pose(&depth_to_points(depth, &grid)?, pose);
    rasterize_semantic_bev(&world, &semantic.data, spec)
}
