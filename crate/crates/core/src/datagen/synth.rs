//! Ray-cast box rooms with analytic top-down ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stitch::Intrinsics;
use crate::bev::{BevGrid, BevGridSpec, CameraPose};
use crate::geo::{make_angle_grid, DepthPanorama};
use crate::raster::{LabelRaster, RgbImage};
use crate::vocab::{Palette, Vocabulary};
use crate::{Error, Mat3, Result, Vec3};

const WALL: u8 = 0;
const FLOOR: u8 = 1;
const CEILING: u8 = 13;

/// Object classes (dense ids of the 20-class indoor vocabulary) and their
/// box heights in meters.
pub const SYNTH_OBJECTS: &[(u8, f64)] = &[
    (2, 0.45),  // chair
    (4, 0.75),  // table
    (6, 1.1),   // furniture
    (9, 0.85),  // sofa
    (10, 0.55), // bed
    (18, 0.95), // counter
    (19, 1.8),  // shelving
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub spec: BevGridSpec,
    /// Range of room side lengths in meters.
    pub room_extent: [f64; 2],
    /// Explicit room footprint `[x0, x1, z0, z1]` in world meters.
    pub fixed_room: Option<[f64; 4]>,
    pub camera_height: f64,
    pub room_height: f64,
    pub boxes: usize,
    pub random_yaw: bool,
    /// Moves every wall and box face 0.1 cell off the nearest cell boundary.
    pub snap: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 128,
            spec: BevGridSpec {
                size: 50,
                ..BevGridSpec::default()
            },
            room_extent: [4.0, 8.0],
            fixed_room: None,
            camera_height: 1.3,
            room_height: 2.8,
            boxes: 3,
            random_yaw: true,
            snap: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let [lo, hi] = self.room_extent;
        let ok = self.height > 0
            && self.width > 0
            && self.camera_height > 0.0
            && self.room_height > self.camera_height
            && self.room_height.is_finite()
            && lo > 0.0
            && hi >= lo
            && hi < self.spec.range - 2.0 * self.spec.cell_size();
        if !ok {
            return Err(Error::invalid(format!("degenerate synthetic scene configuration {self:?}")));
        }
        if let Some([x0, x1, z0, z1]) = self.fixed_room {
            if !(x0 < 0.0 && x1 > 0.0 && z0 < 0.0 && z1 > 0.0) {
                return Err(Error::invalid("fixed room must contain the camera"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthBox {
    pub min: Vec3,
    pub max: Vec3,
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub config: SynthConfig,
    pub room_min: Vec3,
    pub room_max: Vec3,
    pub boxes: Vec<SynthBox>,
    pub pose: CameraPose,
    pub rgb: RgbImage,
    pub depth: DepthPanorama,
    pub semantic: LabelRaster,
    /// Topmost in-band surface per cell from the layout itself.
    pub analytic_bev: BevGrid,
}

fn snap_lo(x: f64, spec: &BevGridSpec) -> f64 {
    let (c, half) = (spec.cell_size(), spec.range / 2.0);
    ((x + half) / c).floor() * c - half + 0.1 * c
}

fn snap_hi(x: f64, spec: &BevGridSpec) -> f64 {
    let (c, half) = (spec.cell_size(), spec.range / 2.0);
    ((x + half) / c).ceil() * c - half - 0.1 * c
}

pub fn synth_scene(seed: u64, config: &SynthConfig) -> Result<SynthScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = &config.spec;
    let c = spec.cell_size();
    let half = spec.range / 2.0;
    let yaw = if config.random_yaw {
        rng.random_range(0.0..std::f64::consts::TAU)
    } else {
        0.0
    };
    let pose = CameraPose::yaw(yaw, Vec3::zeros());
    let eye = pose.to_world(&Vec3::zeros());

    let side = |rng: &mut ChaCha8Rng, centre: f64| -> Result<[f64; 2]> {
        let [lo, hi] = config.room_extent;
        let extent = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let a = (-half + c).max(centre + 1.0 - extent);
        let b = (centre - 1.0).min(half - c - extent);
        if a > b {
            return Err(Error::invalid("room extent does not fit the grid around the camera"));
        }
        let x0 = if b > a { rng.random_range(a..b) } else { a };
        Ok([x0, x0 + extent])
    };
    let [mut x0, mut x1, mut z0, mut z1] = match config.fixed_room {
        Some(r) => r,
        None => {
            let [x0, x1] = side(&mut rng, eye.x)?;
            let [z0, z1] = side(&mut rng, eye.z)?;
            [x0, x1, z0, z1]
        }
    };
    if config.snap {
        (x0, x1, z0, z1) = (snap_lo(x0, spec), snap_hi(x1, spec), snap_lo(z0, spec), snap_hi(z1, spec));
    }
    let floor_y = eye.y - config.camera_height;
    let room_min = Vec3::new(x0, floor_y, z0);
    let room_max = Vec3::new(x1, floor_y + config.room_height, z1);

    let mut boxes: Vec<SynthBox> = Vec::with_capacity(config.boxes);
    let margin = 2.0 * c;
    for _ in 0..config.boxes {
        for _attempt in 0..200 {
            let (w, d) = (rng.random_range(0.4..1.2), rng.random_range(0.4..1.2));
            let (lo_x, hi_x) = (x0 + margin, x1 - margin - w);
            let (lo_z, hi_z) = (z0 + margin, z1 - margin - d);
            if lo_x >= hi_x || lo_z >= hi_z {
                break;
            }
            let bx = rng.random_range(lo_x..hi_x);
            let bz = rng.random_range(lo_z..hi_z);
            let (class, h) = SYNTH_OBJECTS[rng.random_range(0..SYNTH_OBJECTS.len())];
            let (mut bx0, mut bx1, mut bz0, mut bz1) = (bx, bx + w, bz, bz + d);
            if config.snap {
                (bx0, bx1, bz0, bz1) = (snap_lo(bx0, spec), snap_hi(bx1, spec), snap_lo(bz0, spec), snap_hi(bz1, spec));
            }
            let inside = bx0 >= x0 + margin && bx1 <= x1 - margin && bz0 >= z0 + margin && bz1 <= z1 - margin;
            let dx = (bx0 - eye.x).max(eye.x - bx1).max(0.0);
            let dz = (bz0 - eye.z).max(eye.z - bz1).max(0.0);
            let clear_of_camera = dx.hypot(dz) > 0.6;
            let apart = boxes.iter().all(|o| {
                bx0 > o.max.x + margin || bx1 < o.min.x - margin || bz0 > o.max.z + margin || bz1 < o.min.z - margin
            });
            if inside && clear_of_camera && apart {
                boxes.push(SynthBox {
                    min: Vec3::new(bx0, floor_y, bz0),
                    max: Vec3::new(bx1, floor_y + h, bz1),
                    class,
                });
                break;
            }
        }
    }

    let mut scene = SynthScene {
        config: *config,
        room_min,
        room_max,
        boxes,
        pose,
        rgb: RgbImage::zeros(config.height, config.width),
        depth: DepthPanorama::zeros(config.height, config.width)?,
        semantic: LabelRaster::filled(config.height, config.width, spec.void_label),
        analytic_bev: BevGrid::empty(spec),
    };
    scene.render_panorama()?;
    scene.analytic_bev = scene.analytic_layout();
    Ok(scene)
}

impl SynthScene {
    fn palette() -> Palette {
        Vocabulary::matterport().palette()
    }

    /// Nearest surface along a camera-frame ray: distance and class.
    pub fn cast(&self, dir_camera: &Vec3) -> Option<(f64, u8)> {
        let d = self.pose.rotation().transpose() * dir_camera.normalize();
        let o = self.pose.to_world(&Vec3::zeros());
        let mut best: Option<(f64, u8)> = None;
        for axis in 0..3 {
            let t = if d[axis] > 0.0 {
                (self.room_max[axis] - o[axis]) / d[axis]
            } else if d[axis] < 0.0 {
                (self.room_min[axis] - o[axis]) / d[axis]
            } else {
                continue;
            };
            let label = match (axis, d[axis] > 0.0) {
                (1, true) => CEILING,
                (1, false) => FLOOR,
                _ => WALL,
            };
            if best.is_none_or(|b| t < b.0) {
                best = Some((t, label));
            }
        }
        for b in &self.boxes {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for axis in 0..3 {
                if d[axis] == 0.0 {
                    if o[axis] < b.min[axis] || o[axis] > b.max[axis] {
                        t0 = f64::INFINITY;
                    }
                    continue;
                }
                let ta = (b.min[axis] - o[axis]) / d[axis];
                let tb = (b.max[axis] - o[axis]) / d[axis];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
            if t0 <= t1 && t0 > 0.0 && best.is_none_or(|h| t0 < h.0) {
                best = Some((t0, b.class));
            }
        }
        best
    }

    fn render_panorama(&mut self) -> Result<()> {
        let (h, w) = (self.config.height, self.config.width);
        let grid = make_angle_grid(h, w)?;
        let palette = Self::palette();
        for r in 0..h {
            for c in 0..w {
                if let Some((t, label)) = self.cast(&grid.direction(r, c)) {
                    self.depth.set(r, c, t);
                    self.semantic.set(r, c, label);
                    self.rgb.set_pixel(r, c, palette.color(label).map(|v| v as f64 / 255.0));
                }
            }
        }
        Ok(())
    }

    /// Renders a pinhole view with view-from-panorama rotation `rotation`.
    pub fn render_pinhole(&self, height: usize, width: usize, k: &Intrinsics, rotation: &Mat3) -> (LabelRaster, RgbImage) {
        let palette = Self::palette();
        let mut labels = LabelRaster::filled(height, width, self.config.spec.void_label);
        let mut rgb = RgbImage::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                let dv = Vec3::new((c as f64 - k.cx) / k.fx, (r as f64 - k.cy) / k.fy, 1.0);
                if let Some((_, label)) = self.cast(&(rotation.transpose() * dv)) {
                    labels.set(r, c, label);
                    rgb.set_pixel(r, c, palette.color(label).map(|v| v as f64 / 255.0));
                }
            }
        }
        (labels, rgb)
    }

    /// Label of the topmost in-band surface meeting each cell.
    fn analytic_layout(&self) -> BevGrid {
        let spec = &self.config.spec;
        let (c, half) = (spec.cell_size(), spec.range / 2.0);
        let (lo, hi) = (self.room_min, self.room_max);
        let vertical_top = |bottom: f64, top: f64| {
            let t = top.min(spec.ceiling_cut);
            (t >= bottom.max(spec.floor_cut)).then_some(t)
        };
        let overlaps = |a0: f64, a1: f64, s: f64| a0 < s + c && a1 >= s;
        let plane_in = |p: f64, s: f64| p >= s && p < s + c;
        let mut grid = BevGrid::empty(spec);
        for v in 0..spec.size {
            for u in 0..spec.size {
                let (xs, zs) = (u as f64 * c - half, v as f64 * c - half);
                let mut best: Option<(f64, u8)> = None;
                let mut offer = |h: Option<f64>, label: u8| {
                    if let Some(h) = h {
                        if best.is_none_or(|b| h > b.0) {
                            best = Some((h, label));
                        }
                    }
                };
                let in_x = overlaps(lo.x, hi.x, xs);
                let in_z = overlaps(lo.z, hi.z, zs);
                let wall = (in_z && (plane_in(lo.x, xs) || plane_in(hi.x, xs)))
                    || (in_x && (plane_in(lo.z, zs) || plane_in(hi.z, zs)));
                if wall {
                    offer(vertical_top(lo.y, hi.y), WALL);
                }
                for b in &self.boxes {
                    if overlaps(b.min.x, b.max.x, xs) && overlaps(b.min.z, b.max.z, zs) {
                        offer(vertical_top(b.min.y, b.max.y), b.class);
                    }
                }
                if in_x && in_z {
                    offer(spec.in_band(hi.y).then_some(hi.y), CEILING);
                    offer(spec.in_band(lo.y).then_some(lo.y), FLOOR);
                }
                if let Some((h, label)) = best {
                    let k = spec.index(u, v);
                    grid.labels[k] = label;
                    grid.heights[k] = h;
                    grid.observed[k] = true;
                }
            }
        }
        grid
    }
}
