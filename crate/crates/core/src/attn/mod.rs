//! Masked deformable attention over a panoramic feature map.
//!
//! Each BEV query that survives the mask predicts, per head, `N_point`
//! sampling offsets around its reference index and a softmax weight per
//! point. The head aggregates `Σ_j A_ij · f(p + Δp_ij)`, projects it with its
//! own `W_i`, heads are assembled and passed through an output projection,
//! and the result is scattered back onto the full query set and added to
//! the input as a residual.

mod gradcheck;
mod layer;
mod sample;

pub use gradcheck::{
    attention_layer_gradcheck, gradient_check, gradient_check_terms, relative_error, GradCheckDims, GradCheckReport,
};
pub use layer::{
    attention_backward, attention_forward, attention_forward_cached, attention_stack_backward,
    attention_stack_forward, attention_stack_forward_cached, predict_offsets_and_weights,
    AttentionConfig, AttentionParams, LayerCache, LayerGrads, OffsetsAndWeights, StackGrads,
};
pub use sample::{panoramic_bilinear_sample, BilinearTap};

use crate::{Error, Result};

/// `h_f × w_f × C` feature tensor, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("feature map with zero dimension"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "feature buffer has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map entries".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.width + c) * self.channels + ch]
    }

    pub fn pixel(&self, r: usize, c: usize) -> &[f64] {
        let k = (r * self.width + c) * self.channels;
        &self.data[k..k + self.channels]
    }

    /// Rolls columns right by `k` (column `j` moves to `j + k mod w`).
    pub fn roll_columns(&self, k: usize) -> FeatureMap {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                let dst = (r * self.width + (c + k) % self.width) * self.channels;
                out.data[dst..dst + self.channels].copy_from_slice(self.pixel(r, c));
            }
        }
        out
    }
}

/// BEV queries on an `h × w` grid with their feature-space reference
/// indices and the flattened mask map.
#[derive(Debug, Clone, PartialEq)]
pub struct BevQuery {
    pub grid_h: usize,
    pub grid_w: usize,
    pub channels: usize,
    /// `N × C_Emb`.
    pub data: Vec<f64>,
    /// `(row, col)` per query in feature-map pixels; columns are cyclic.
    pub index: Vec<[f64; 2]>,
    pub mask: Vec<bool>,
}

impl BevQuery {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        channels: usize,
        data: Vec<f64>,
        index: Vec<[f64; 2]>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let q = Self {
            grid_h,
            grid_w,
            channels,
            data,
            index,
            mask,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn len(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.channels..(n + 1) * self.channels]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.channels == 0 {
            return Err(Error::invalid("query with zero channels"));
        }
        if self.data.len() != n * self.channels || self.index.len() != n || self.mask.len() != n {
            return Err(Error::invalid(format!(
                "query arrays disagree: N = {n}, data {}, index {}, mask {}",
                self.data.len(),
                self.index.len(),
                self.mask.len()
            )));
        }
        Ok(())
    }
}

/// Masked-in queries packed densely, with the map back to their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactQueries {
    pub channels: usize,
    /// `M × C_Emb`.
    pub data: Vec<f64>,
    /// `M` reference indices.
    pub index: Vec<[f64; 2]>,
    /// Original row of each compact entry.
    pub rows: Vec<usize>,
}

impl CompactQueries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.channels..(m + 1) * self.channels]
    }

    /// Writes compact rows back to their original positions.
    pub fn scatter(&self, compact: &[f64], full: &mut [f64]) {
        let c = self.channels;
        for (m, &n) in self.rows.iter().enumerate() {
            full[n * c..(n + 1) * c].copy_from_slice(&compact[m * c..(m + 1) * c]);
        }
    }
}

pub fn compact_by_mask(query: &BevQuery) -> CompactQueries {
    let rows: Vec<usize> = (0..query.len()).filter(|n| query.mask[*n]).collect();
    let mut data = Vec::with_capacity(rows.len() * query.channels);
    for &n in &rows {
        data.extend_from_slice(query.row(n));
    }
    CompactQueries {
        channels: query.channels,
        data,
        index: rows.iter().map(|n| query.index[*n]).collect(),
        rows,
    }
}
