//! Pinhole views to equirectangular panorama.
//!
//! View frames follow the usual pinhole convention (x right, y down,
//! z forward); a view's extrinsics map panorama-frame points into it.

use crate::geo::{make_angle_grid, DepthPanorama};
use crate::raster::{LabelRaster, RgbImage};
use crate::{Error, Mat3, Result, Vec3, VOID_LABEL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Square view of `size` pixels with field of view `fov` radians.
pub fn intrinsics_for_fov(size: usize, fov: f64) -> Intrinsics {
    let f = size as f64 / 2.0 / (fov / 2.0).tan();
    let c = (size as f64 - 1.0) / 2.0;
    Intrinsics {
        fx: f,
        fy: f,
        cx: c,
        cy: c,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewPayload {
    Labels(LabelRaster),
    Rgb(RgbImage),
}

impl ViewPayload {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ViewPayload::Labels(l) => (l.height, l.width),
            ViewPayload::Rgb(i) => (i.height, i.width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinholeView {
    pub payload: ViewPayload,
    pub intrinsics: Intrinsics,
    /// View-from-panorama rotation.
    pub rotation: Mat3,
    /// View-from-panorama translation; ignored when stitching without depth.
    pub translation: Vec3,
    pub position: Option<String>,
}

impl PinholeView {
    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0 && k.fx.is_finite() && k.fy.is_finite() && k.cx.is_finite() && k.cy.is_finite()) {
            return Err(Error::invalid(format!("bad intrinsics {k:?}")));
        }
        let r = &self.rotation;
        if (r.transpose() * r - Mat3::identity()).abs().max() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("view rotation is not a proper rotation"));
        }
        let (h, w) = self.payload.dims();
        if h == 0 || w == 0 {
            return Err(Error::invalid("empty view raster"));
        }
        Ok(())
    }

    /// Continuous pixel `(col, row)` and the cosine to the optical axis of
    /// a view-frame point, if it lies in front of the view and inside it.
    fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        let (h, w) = self.payload.dims();
        let inside = u >= -0.5 && u < w as f64 - 0.5 && v >= -0.5 && v < h as f64 - 0.5;
        inside.then(|| (u, v, p.z / p.norm()))
    }
}

/// Rotation whose rows are the view's right, down and forward axes in the
/// panorama frame (`y` up).
pub fn view_rotation(forward: Vec3, up_hint: Vec3) -> Result<Mat3> {
    let f = forward.normalize();
    let right = f.cross(&up_hint);
    if right.norm() < 1e-9 || !f.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("forward and up hint must be non-parallel"));
    }
    let right = right.normalize();
    let down = f.cross(&right);
    Ok(Mat3::from_rows(&[right.transpose(), down.transpose(), f.transpose()]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigView {
    pub rotation: Mat3,
    pub position: String,
}

/// Three elevation rings (high, medium, low at +45°, 0°, −45°) of six
/// azimuths 60° apart.
pub fn default_rig() -> Vec<RigView> {
    let mut views = Vec::with_capacity(18);
    for (tag, elev) in [("high", 45f64), ("medium", 0.0), ("low", -45.0)] {
        for k in 0..6 {
            let az = (60.0 * k as f64).to_radians();
            let e = elev.to_radians();
            let forward = Vec3::new(az.sin() * e.cos(), e.sin(), az.cos() * e.cos());
            views.push(RigView {
                rotation: view_rotation(forward, Vec3::y()).expect("rig forward is never vertical"),
                position: tag.to_string(),
            });
        }
    }
    views
}

#[derive(Debug, Clone, PartialEq)]
pub enum StitchedPayload {
    /// Uncovered pixels hold the void label.
    Labels(LabelRaster),
    /// Uncovered pixels are black.
    Rgb(RgbImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stitched {
    pub payload: StitchedPayload,
    pub coverage: Vec<bool>,
    /// Index of the view chosen per pixel.
    pub source: Vec<Option<usize>>,
}

/// Resamples `views` onto an `height × width` panorama. Each pixel takes
/// the view whose optical axis is angularly closest to its ray among views
/// that see it. Without `depth`, rays are treated as points at infinity
/// and view translations are ignored.
pub fn stitch_views(
    views: &[PinholeView],
    height: usize,
    width: usize,
    depth: Option<&DepthPanorama>,
) -> Result<Stitched> {
    let first = views.first().ok_or_else(|| Error::invalid("no views to stitch"))?;
    let labels = matches!(first.payload, ViewPayload::Labels(_));
    for v in views {
        v.validate()?;
        if matches!(v.payload, ViewPayload::Labels(_)) != labels {
            return Err(Error::invalid("views mix label and rgb payloads"));
        }
    }
    if let Some(d) = depth {
        if (d.height(), d.width()) != (height, width) {
            return Err(Error::invalid("depth dims differ from the output panorama"));
        }
    }
    let grid = make_angle_grid(height, width)?;
    let n = height * width;
    let mut coverage = vec![false; n];
    let mut source = vec![None; n];
    let mut out_labels = LabelRaster::filled(height, width, VOID_LABEL);
    let mut out_rgb = RgbImage::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            let ray = grid.direction(r, c);
            let point = depth.and_then(|d| d.is_valid(r, c).then(|| ray * d.get(r, c)));
            let mut best: Option<(usize, f64, f64, f64)> = None;
            for (i, v) in views.iter().enumerate() {
                let p = match point {
                    Some(p) => v.rotation * p + v.translation,
                    None => v.rotation * ray,
                };
                if let Some((u, vv, cos)) = v.project(&p) {
                    if best.is_none_or(|b| cos > b.3) {
                        best = Some((i, u, vv, cos));
                    }
                }
            }
            let Some((i, u, v, _)) = best else { continue };
            let k = r * width + c;
            coverage[k] = true;
            source[k] = Some(i);
            match &views[i].payload {
                ViewPayload::Labels(l) => out_labels.set(r, c, nearest(l, u, v)),
                ViewPayload::Rgb(img) => out_rgb.set_pixel(r, c, bilinear(img, u, v)),
            }
        }
    }
    Ok(Stitched {
        payload: if labels {
            StitchedPayload::Labels(out_labels)
        } else {
            StitchedPayload::Rgb(out_rgb)
        },
        coverage,
        source,
    })
}

fn nearest(l: &LabelRaster, u: f64, v: f64) -> u8 {
    let c = ((u + 0.5).floor() as isize).clamp(0, l.width as isize - 1) as usize;
    let r = ((v + 0.5).floor() as isize).clamp(0, l.height as isize - 1) as usize;
    l.get(r, c)
}

fn bilinear(img: &RgbImage, u: f64, v: f64) -> [f64; 3] {
    let u = u.clamp(0.0, (img.width - 1) as f64);
    let v = v.clamp(0.0, (img.height - 1) as f64);
    let (c0, r0) = (u.floor() as usize, v.floor() as usize);
    let (c1, r1) = ((c0 + 1).min(img.width - 1), (r0 + 1).min(img.height - 1));
    let (a, b) = (u - c0 as f64, v - r0 as f64);
    let mut out = [0.0; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        *o = (1.0 - a) * (1.0 - b) * img.pixel(r0, c0)[ch]
            + a * (1.0 - b) * img.pixel(r0, c1)[ch]
            + (1.0 - a) * b * img.pixel(r1, c0)[ch]
            + a * b * img.pixel(r1, c1)[ch];
    }
    out
}
