//! World-frame transform, orthographic top-down projection and BEV rasters.
//!
//! Cells are addressed as `(u, v)` with `u` along world `x` and `v` along
//! world `z`; the grid is centred on the world origin. Storage is row-major
//! with `v` as the row, so a raster written to disk shows `x` left to right
//! and `z` top to bottom.

use serde::{Deserialize, Serialize};

use crate::geo::{depth_to_points, AngleGrid, DepthPanorama, PointCloud};
use crate::{Error, Mat3, Result, Vec3, VOID_LABEL};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid transform mapping camera-frame points to the world frame as
/// `x = R⁻¹ X − t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pose entries".into()));
        }
        let gram = rotation.transpose() * rotation - Mat3::identity();
        if gram.amax() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {:.3e})",
                gram.amax()
            )));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid("rotation has determinant -1 (reflection)"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Pose from 12 numbers: `R` row-major followed by `t`.
    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 12 {
            return Err(Error::invalid(format!(
                "pose needs 12 numbers (R row-major then t), got {}",
                values.len()
            )));
        }
        Self::new(
            Mat3::from_row_slice(&values[..9]),
            Vec3::new(values[9], values[10], values[11]),
        )
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    /// Rotation by `angle` radians about the vertical axis.
    pub fn yaw(angle: f64, translation: Vec3) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn to_world(&self, camera_point: &Vec3) -> Vec3 {
        self.rotation.transpose() * camera_point - self.translation
    }

    pub fn to_camera(&self, world_point: &Vec3) -> Vec3 {
        self.rotation * (world_point + self.translation)
    }

    /// Pose equivalent to applying `self` and then `next`.
    pub fn then(&self, next: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * next.rotation,
            translation: next.rotation.transpose() * self.translation + next.translation,
        }
    }
}

/// Applies the pose to every valid point; invalid points stay invalid.
pub fn apply_pose(points: &PointCloud, pose: &CameraPose) -> PointCloud {
    let mapped = points
        .points
        .iter()
        .zip(&points.valid)
        .map(|(p, v)| if *v { pose.to_world(p) } else { *p })
        .collect();
    PointCloud {
        height: points.height,
        width: points.width,
        points: mapped,
        valid: points.valid.clone(),
    }
}

/// Geometry of a square top-down grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGridSpec {
    /// Cells per side.
    pub size: usize,
    /// Side length in meters.
    pub range: f64,
    /// Lowest kept height (meters, world `y`).
    pub floor_cut: f64,
    /// Highest kept height (meters, world `y`).
    pub ceiling_cut: f64,
    pub void_label: u8,
}

impl Default for BevGridSpec {
    fn default() -> Self {
        Self {
            size: 500,
            range: 10.0,
            floor_cut: -1.5,
            ceiling_cut: 1.2,
            void_label: VOID_LABEL,
        }
    }
}

impl BevGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("grid size must be at least 1"));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::invalid(format!("grid range must be > 0, got {}", self.range)));
        }
        if !(self.floor_cut < self.ceiling_cut) {
            return Err(Error::invalid(format!(
                "floor_cut {} must be below ceiling_cut {}",
                self.floor_cut, self.ceiling_cut
            )));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> f64 {
        self.range / self.size as f64
    }

    pub fn cell_count(&self) -> usize {
        self.size * self.size
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.size + u
    }

    pub fn cell_of_index(&self, k: usize) -> (usize, usize) {
        (k % self.size, k / self.size)
    }

    /// World `(x, z)` of a cell center.
    pub fn cell_center(&self, u: usize, v: usize) -> (f64, f64) {
        let half = self.range / 2.0;
        let c = self.cell_size();
        ((u as f64 + 0.5) * c - half, (v as f64 + 0.5) * c - half)
    }

    pub fn in_band(&self, height: f64) -> bool {
        height >= self.floor_cut && height <= self.ceiling_cut
    }

    /// Orthographic projection of a single world point.
    pub fn project(&self, p: &Vec3) -> CellHit {
        let half = self.range / 2.0;
        let c = self.cell_size();
        let u = ((p.x + half) / c).floor();
        let v = ((p.z + half) / c).floor();
        // Half-open extent [-range/2, range/2); the clamp absorbs rounding of
        // `x + range/2` up to `range` for x just below the edge.
        let inside = |x: f64| x >= -half && x < half;
        let in_bounds = inside(p.x) && inside(p.z);
        let max = (self.size - 1) as f64;
        let (u, v) = if in_bounds {
            (u.clamp(0.0, max) as i64, v.clamp(0.0, max) as i64)
        } else {
            (saturating_i64(u), saturating_i64(v))
        };
        CellHit {
            u,
            v,
            height: p.y,
            in_bounds,
        }
    }
}

fn saturating_i64(x: f64) -> i64 {
    if x.is_nan() {
        i64::MIN
    } else {
        x as i64
    }
}

/// Cell coordinates of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellHit {
    pub u: i64,
    pub v: i64,
    pub height: f64,
    pub in_bounds: bool,
}

pub fn orthographic_cells(points: &[Vec3], spec: &BevGridSpec) -> Vec<CellHit> {
    points.iter().map(|p| spec.project(p)).collect()
}

/// A point competing for a BEV cell. Among points in a cell the highest
/// wins; equal heights go to the smaller `key`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevSample<P> {
    pub point: Vec3,
    pub payload: P,
    pub key: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Winner<P> {
    height: f64,
    key: u64,
    payload: P,
}

impl<P> Winner<P> {
    fn beats(&self, other: &Winner<P>) -> bool {
        self.height > other.height || (self.height == other.height && self.key < other.key)
    }
}

/// Top-down raster of an arbitrary per-point payload.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster<P> {
    pub spec: BevGridSpec,
    cells: Vec<Option<Winner<P>>>,
}

impl<P: Copy> BevRaster<P> {
    pub fn get(&self, u: usize, v: usize) -> Option<(P, f64)> {
        self.cells[self.spec.index(u, v)].map(|w| (w.payload, w.height))
    }

    pub fn cells(&self) -> impl Iterator<Item = Option<(P, f64)>> + '_ {
        self.cells.iter().map(|c| c.map(|w| (w.payload, w.height)))
    }

    pub fn observed(&self) -> Vec<bool> {
        self.cells.iter().map(Option::is_some).collect()
    }
}

/// Order-independent max-by-(height, key) reduction of samples into cells.
pub fn rasterize_samples<P: Copy>(
    samples: impl IntoIterator<Item = BevSample<P>>,
    spec: &BevGridSpec,
) -> Result<BevRaster<P>> {
    spec.validate()?;
    let mut cells: Vec<Option<Winner<P>>> = vec![None; spec.cell_count()];
    for s in samples {
        let hit = spec.project(&s.point);
        if !hit.in_bounds || !spec.in_band(hit.height) {
            continue;
        }
        let cand = Winner {
            height: hit.height,
            key: s.key,
            payload: s.payload,
        };
        let slot = &mut cells[spec.index(hit.u as usize, hit.v as usize)];
        match slot {
            Some(w) if !cand.beats(w) => {}
            _ => *slot = Some(cand),
        }
    }
    Ok(BevRaster { spec: *spec, cells })
}

/// Rasterizes any per-pixel payload of a world-frame point cloud, keyed by
/// source-pixel linear index.
pub fn rasterize_payload<P: Copy>(
    points: &PointCloud,
    payload: &[P],
    spec: &BevGridSpec,
) -> Result<BevRaster<P>> {
    if payload.len() != points.len() {
        return Err(Error::invalid(format!(
            "payload has {} entries for {} points",
            payload.len(),
            points.len()
        )));
    }
    rasterize_samples(
        points.iter_valid().map(|(k, p)| BevSample {
            point: *p,
            payload: payload[k],
            key: k as u64,
        }),
        spec,
    )
}

/// Semantic top-down map.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: BevGridSpec,
    pub labels: Vec<u8>,
    pub heights: Vec<f64>,
    pub observed: Vec<bool>,
}

impl BevGrid {
    pub fn empty(spec: &BevGridSpec) -> Self {
        let n = spec.cell_count();
        Self {
            spec: *spec,
            labels: vec![spec.void_label; n],
            heights: vec![f64::NAN; n],
            observed: vec![false; n],
        }
    }

    pub fn label(&self, u: usize, v: usize) -> u8 {
        self.labels[self.spec.index(u, v)]
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }
}

impl From<BevRaster<u8>> for BevGrid {
    fn from(raster: BevRaster<u8>) -> Self {
        let mut grid = BevGrid::empty(&raster.spec);
        for (k, cell) in raster.cells.iter().enumerate() {
            if let Some(w) = cell {
                grid.labels[k] = w.payload;
                grid.heights[k] = w.height;
                grid.observed[k] = true;
            }
        }
        grid
    }
}

pub fn rasterize_semantic_bev(
    points: &PointCloud,
    labels: &[u8],
    spec: &BevGridSpec,
) -> Result<BevGrid> {
    rasterize_payload(points, labels, spec).map(BevGrid::from)
}

/// Top-down occupancy derived from depth alone.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMap {
    pub spec: BevGridSpec,
    pub mask: Vec<bool>,
    /// Topmost height per masked cell, `NaN` elsewhere.
    pub ref_heights: Vec<f64>,
}

impl MaskMap {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_set(&self, u: usize, v: usize) -> bool {
        self.mask[self.spec.index(u, v)]
    }
}

pub fn build_mask_map(
    depth: &DepthPanorama,
    grid: &AngleGrid,
    pose: &CameraPose,
    spec: &BevGridSpec,
) -> Result<MaskMap> {
    let world = apply_pose(&depth_to_points(depth, grid)?, pose);
    let raster = rasterize_payload(&world, &vec![(); world.len()], spec)?;
    let (mask, ref_heights) = raster
        .cells()
        .map(|c| match c {
            Some((_, h)) => (true, h),
            None => (false, f64::NAN),
        })
        .unzip();
    Ok(MaskMap {
        spec: *spec,
        mask,
        ref_heights,
    })
}

/// 3D reference point at the center of a masked cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevReference {
    pub u: usize,
    pub v: usize,
    pub point: Vec3,
}

pub fn bev_reference_points(mask: &MaskMap) -> Vec<BevReference> {
    mask.mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(k, _)| {
            let (u, v) = mask.spec.cell_of_index(k);
            let (x, z) = mask.spec.cell_center(u, v);
            BevReference {
                u,
                v,
                point: Vec3::new(x, mask.ref_heights[k], z),
            }
        })
        .collect()
}
