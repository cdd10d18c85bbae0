//! Bilinear sampling of a panoramic feature map: columns wrap around the
//! 360° seam, rows clamp to the first/last row.

use super::FeatureMap;

/// The four lattice taps of one bilinear sample together with the
/// derivatives of their weights with respect to the sampling location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTap {
    /// Flat pixel indices (`row * width + col`).
    pub pixels: [usize; 4],
    pub weights: [f64; 4],
    pub d_row: [f64; 4],
    pub d_col: [f64; 4],
}

impl BilinearTap {
    pub fn new(height: usize, width: usize, row: f64, col: f64) -> Self {
        let (r0, r1, fr, dfr) = if height == 1 {
            (0, 0, 0.0, 0.0)
        } else {
            let max = (height - 1) as f64;
            let rc = row.clamp(0.0, max);
            let r0 = (rc.floor() as usize).min(height - 2);
            let inside = row > 0.0 && row < max;
            (r0, r0 + 1, rc - r0 as f64, if inside { 1.0 } else { 0.0 })
        };
        let cf = col.floor();
        let fc = col - cf;
        let w = width as i64;
        let c0 = (cf as i64).rem_euclid(w) as usize;
        let c1 = (c0 + 1) % width;

        let gr = 1.0 - fr;
        let gc = 1.0 - fc;
        Self {
            pixels: [r0 * width + c0, r0 * width + c1, r1 * width + c0, r1 * width + c1],
            weights: [gr * gc, gr * fc, fr * gc, fr * fc],
            d_row: [-gc * dfr, -fc * dfr, gc * dfr, fc * dfr],
            d_col: [-gr, gr, -fr, fr],
        }
    }

    pub fn sample_into(&self, f: &FeatureMap, out: &mut [f64]) {
        let c = f.channels;
        out.fill(0.0);
        for (p, w) in self.pixels.iter().zip(&self.weights) {
            if *w == 0.0 {
                continue;
            }
            let src = &f.data[p * c..(p + 1) * c];
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }

    /// `(∂s/∂row · g, ∂s/∂col · g)` for an upstream gradient `g` on the
    /// sampled vector `s`.
    pub fn location_grad(&self, f: &FeatureMap, g: &[f64]) -> (f64, f64) {
        let c = f.channels;
        let mut dr = 0.0;
        let mut dc = 0.0;
        for k in 0..4 {
            let src = &f.data[self.pixels[k] * c..(self.pixels[k] + 1) * c];
            let dot: f64 = src.iter().zip(g).map(|(a, b)| a * b).sum();
            dr += self.d_row[k] * dot;
            dc += self.d_col[k] * dot;
        }
        (dr, dc)
    }

    /// Scatters `g` on the sampled vector back onto the feature map.
    pub fn scatter_grad(&self, channels: usize, g: &[f64], d_feature: &mut [f64]) {
        for (p, w) in self.pixels.iter().zip(&self.weights) {
            if *w == 0.0 {
                continue;
            }
            let dst = &mut d_feature[p * channels..(p + 1) * channels];
            for (d, gv) in dst.iter_mut().zip(g) {
                *d += w * gv;
            }
        }
    }
}

/// Samples `feature` at `(row, col)` feature-pixel locations.
pub fn panoramic_bilinear_sample(feature: &FeatureMap, locations: &[[f64; 2]]) -> Vec<f64> {
    let c = feature.channels;
    let mut out = vec![0.0; locations.len() * c];
    for (loc, dst) in locations.iter().zip(out.chunks_mut(c.max(1))) {
        BilinearTap::new(feature.height, feature.width, loc[0], loc[1]).sample_into(feature, dst);
    }
    out
}
