//! Spherical geometry of equirectangular panoramas.
//!
//! Camera frame: `Y` points up, `Z` forward (azimuth 0), `X` towards azimuth
//! `+π/2`. Row `i` of an `H×W` panorama looks at polar angle
//! `Θ_i = iπ/H + π/(2H)` measured from `+Y`; column `j` at azimuth
//! `Φ_j = −2πj/W + π − π/W`.

use std::f64::consts::PI;

use crate::{Error, Result, Vec3};

/// Per-pixel spherical angles of an `H×W` equirectangular image.
///
/// `Θ` depends only on the row and `Φ` only on the column, so both are
/// stored once per row / column.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    height: usize,
    width: usize,
    theta: Vec<f64>,
    phi: Vec<f64>,
}

impl AngleGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Polar angle of row `i`.
    pub fn theta(&self, i: usize) -> f64 {
        self.theta[i]
    }

    /// Azimuth of column `j`.
    pub fn phi(&self, j: usize) -> f64 {
        self.phi[j]
    }

    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    pub fn phis(&self) -> &[f64] {
        &self.phi
    }

    /// Unit viewing direction of pixel `(i, j)`.
    pub fn direction(&self, i: usize, j: usize) -> Vec3 {
        direction_from_angles(self.theta[i], self.phi[j])
    }
}

pub fn make_angle_grid(height: usize, width: usize) -> Result<AngleGrid> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "angle grid needs non-zero dimensions, got {height}x{width}"
        )));
    }
    let h = height as f64;
    let w = width as f64;
    let theta = (0..height)
        .map(|i| i as f64 * PI / h + PI / (2.0 * h))
        .collect();
    let phi = (0..width)
        .map(|j| -2.0 * PI * j as f64 / w + PI - PI / w)
        .collect();
    Ok(AngleGrid {
        height,
        width,
        theta,
        phi,
    })
}

/// Unit vector for polar angle `theta` (from `+Y`) and azimuth `phi`.
pub fn direction_from_angles(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * sp, ct, st * cp)
}

/// Panoramic range image in meters. `0` and non-finite values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPanorama {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthPanorama {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("depth panorama with zero dimension"));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "depth buffer has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(bad) = data.iter().find(|d| **d < 0.0) {
            return Err(Error::invalid(format!("negative depth {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, depth: f64) {
        self.data[i * self.width + j] = depth;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        is_valid_depth(self.get(i, j))
    }
}

pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Per-pixel 3D points (row-major, `H×W`) with validity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub height: usize,
    pub width: usize,
    pub points: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// `(linear index, point)` for every valid pixel.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, &Vec3)> {
        self.points
            .iter()
            .enumerate()
            .filter(|(k, _)| self.valid[*k])
    }
}

pub fn depth_to_points(depth: &DepthPanorama, grid: &AngleGrid) -> Result<PointCloud> {
    if depth.height != grid.height || depth.width != grid.width {
        return Err(Error::invalid(format!(
            "depth is {}x{} but angle grid is {}x{}",
            depth.height, depth.width, grid.height, grid.width
        )));
    }
    let n = depth.height * depth.width;
    let mut points = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..depth.height {
        let (st, ct) = grid.theta[i].sin_cos();
        for j in 0..depth.width {
            let d = depth.get(i, j);
            if is_valid_depth(d) {
                let (sp, cp) = grid.phi[j].sin_cos();
                points.push(Vec3::new(d * st * sp, d * ct, d * st * cp));
                valid.push(true);
            } else {
                points.push(Vec3::zeros());
                valid.push(false);
            }
        }
    }
    Ok(PointCloud {
        height: depth.height,
        width: depth.width,
        points,
        valid,
    })
}

/// Real-valued pixel coordinates; integer values are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousPixel {
    pub row: f64,
    pub col: f64,
}

/// Exact inverse of the angle grid + unprojection: returns the real-valued
/// pixel whose viewing ray passes through `point`.
///
/// Rows are not clamped (the poles map to `-0.5` and `H - 0.5`); columns are
/// wrapped into `[0, W)`.
pub fn point_to_pixel(point: &Vec3, height: usize, width: usize) -> Result<ContinuousPixel> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("point_to_pixel needs non-zero dimensions"));
    }
    if !(point.x.is_finite() && point.y.is_finite() && point.z.is_finite()) {
        return Err(Error::NonFinite(format!("point {point:?}")));
    }
    let horizontal = point.x.hypot(point.z);
    if horizontal == 0.0 && point.y == 0.0 {
        return Err(Error::invalid("cannot project the origin"));
    }
    let h = height as f64;
    let w = width as f64;
    let theta = horizontal.atan2(point.y);
    // atan2 returns (-π, π]; the +0/-0 split at the back seam is harmless
    // because the column is wrapped below.
    let phi = point.x.atan2(point.z);
    let row = (theta - PI / (2.0 * h)) * h / PI;
    let col = ((PI - PI / w - phi) * w / (2.0 * PI)).rem_euclid(w);
    Ok(ContinuousPixel { row, col })
}

/// Nearest integer with ties resolved toward the smaller value.
pub fn round_half_down(x: f64) -> f64 {
    (x - 0.5).ceil()
}

/// Maps 3D points (camera frame) to integer pixel indices `(row, col)`.
///
/// Rows clamp to `[0, H-1]`, columns wrap cyclically.
pub fn inverse_radial_projection(
    points: &[Vec3],
    height: usize,
    width: usize,
) -> Result<Vec<(usize, usize)>> {
    points
        .iter()
        .map(|p| {
            let px = point_to_pixel(p, height, width)?;
            Ok(pixel_to_index(px, height, width))
        })
        .collect()
}

pub(crate) fn pixel_to_index(px: ContinuousPixel, height: usize, width: usize) -> (usize, usize) {
    let row = round_half_down(px.row).clamp(0.0, (height - 1) as f64) as usize;
    let col = (round_half_down(px.col) as i64).rem_euclid(width as i64) as usize;
    (row, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_grid_angles() {
        let g = make_angle_grid(2, 2).unwrap();
        assert_eq!(g.thetas(), &[PI / 4.0, 3.0 * PI / 4.0]);
        assert_eq!(g.phis(), &[PI / 2.0, -PI / 2.0]);
    }

    #[test]
    fn first_row_at_512_by_1024() {
        let g = make_angle_grid(512, 1024).unwrap();
        assert!((g.theta(0) - 0.003_067_961_5).abs() < 1e-10);
        assert_eq!(g.theta(0), PI / 1024.0);
    }

    #[test]
    fn monotone_angles() {
        let g = make_angle_grid(4, 8).unwrap();
        assert!(g.thetas().windows(2).all(|w| w[0] < w[1]));
        assert!(g.phis().windows(2).all(|w| w[0] > w[1]));
        assert!(g.thetas().iter().all(|t| *t > 0.0 && *t < PI));
        assert!(g.phis().iter().all(|p| *p > -PI && *p <= PI));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(make_angle_grid(0, 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_angle_grid(4, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn axis_points() {
        let p = direction_from_angles(PI / 2.0, 0.0) * 2.0;
        assert!((p - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-15);
        let p = direction_from_angles(PI / 2.0, PI / 2.0);
        assert!((p - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_depth_is_invalid() {
        let g = make_angle_grid(2, 3).unwrap();
        let mut d = DepthPanorama::new(2, 3, vec![1.0; 6]).unwrap();
        d.set(1, 2, 0.0);
        d.set(0, 0, f64::NAN);
        let pc = depth_to_points(&d, &g).unwrap();
        assert!(!pc.valid[5]);
        assert!(!pc.valid[0]);
        assert_eq!(pc.valid_count(), 4);
    }

    #[test]
    fn dimension_mismatch() {
        let g = make_angle_grid(2, 3).unwrap();
        let d = DepthPanorama::zeros(3, 2).unwrap();
        assert!(matches!(depth_to_points(&d, &g), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn negative_depth_rejected() {
        assert!(DepthPanorama::new(1, 2, vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn forward_axis_inverse() {
        let px = point_to_pixel(&Vec3::new(0.0, 0.0, 1.0), 512, 1024).unwrap();
        assert!((px.row - 255.5).abs() < 1e-12);
        assert!((px.col - 511.5).abs() < 1e-12);
        let idx = inverse_radial_projection(&[Vec3::new(0.0, 0.0, 1.0)], 512, 1024).unwrap();
        assert_eq!(idx, vec![(255, 511)]);
    }

    #[test]
    fn pole_maps_above_first_row() {
        let px = point_to_pixel(&Vec3::new(0.0, 1.0, 0.0), 512, 1024).unwrap();
        assert!((px.row + 0.5).abs() < 1e-12);
        let idx = inverse_radial_projection(&[Vec3::new(0.0, 1.0, 0.0)], 512, 1024).unwrap();
        assert_eq!(idx[0].0, 0);
        let idx = inverse_radial_projection(&[Vec3::new(0.0, -3.0, 0.0)], 512, 1024).unwrap();
        assert_eq!(idx[0].0, 511);
    }

    #[test]
    fn origin_rejected() {
        assert!(matches!(
            point_to_pixel(&Vec3::zeros(), 8, 16),
            Err(Error::InvalidArgument(_))
        ));
        assert!(inverse_radial_projection(&[Vec3::zeros()], 8, 16).is_err());
    }

    #[test]
    fn empty_projection() {
        assert!(inverse_radial_projection(&[], 8, 16).unwrap().is_empty());
    }

    #[test]
    fn pixel_center_round_trip() {
        let g = make_angle_grid(512, 1024).unwrap();
        let p = g.direction(128, 256);
        let px = point_to_pixel(&p, 512, 1024).unwrap();
        assert!((px.row - 128.0).abs() < 1e-9);
        assert!((px.col - 256.0).abs() < 1e-9);

        let p = g.direction(37, 900) * 4.2;
        assert_eq!(inverse_radial_projection(&[p], 512, 1024).unwrap(), vec![(37, 900)]);
    }

    #[test]
    fn tie_rounding() {
        assert_eq!(round_half_down(2.5), 2.0);
        assert_eq!(round_half_down(2.500001), 3.0);
        assert_eq!(round_half_down(2.4), 2.0);
        assert_eq!(round_half_down(-0.5), -1.0);
    }

    #[test]
    fn back_seam_wraps_to_last_column() {
        // Φ = π sits half a pixel left of column 0.
        let p = Vec3::new(0.0, 0.0, -1.0);
        let px = point_to_pixel(&p, 4, 8).unwrap();
        assert!((px.col - 7.5).abs() < 1e-12);
        let px = point_to_pixel(&Vec3::new(-0.0, 0.0, -1.0), 4, 8).unwrap();
        assert!((px.col - 7.5).abs() < 1e-12);
        let idx = inverse_radial_projection(&[p], 4, 8).unwrap();
        assert_eq!(idx[0].1, 7);
    }
}
