//! Seeded toy patch encoder standing in for a real backbone.

use rand::Rng;

use crate::attn::FeatureMap;
use crate::nn::{visit_linear, visit_linear_mut, Linear, Parameterized};
use crate::raster::RgbImage;
use crate::{Error, Result};

/// `h = tanh(P x + b)` per non-overlapping patch, followed by
/// `mix_layers` rounds of `h = tanh(M h + c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    pub patch: usize,
    pub channels: usize,
    pub project: Linear,
    pub mix: Vec<Linear>,
}

impl ToyEncoderParams {
    pub fn zeros(patch: usize, channels: usize, mix_layers: usize) -> Result<Self> {
        if patch == 0 || channels == 0 {
            return Err(Error::invalid("patch size and channel width must be positive"));
        }
        Ok(Self {
            patch,
            channels,
            project: Linear::zeros(3 * patch * patch, channels, true),
            mix: (0..mix_layers).map(|_| Linear::zeros(channels, channels, true)).collect(),
        })
    }

    pub fn init<R: Rng>(patch: usize, channels: usize, mix_layers: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(patch, channels, mix_layers)?;
        p.project = Linear::uniform(3 * patch * patch, channels, true, rng);
        for m in &mut p.mix {
            *m = Linear::uniform(channels, channels, true, rng);
        }
        Ok(p)
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if height == 0 || width == 0 || height % self.patch != 0 || width % self.patch != 0 {
            return Err(Error::invalid(format!(
                "image {height}x{width} is not divisible by patch {}",
                self.patch
            )));
        }
        Ok((height / self.patch, width / self.patch))
    }
}

impl Parameterized for ToyEncoderParams {
    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit_linear(&self.project, "project", f);
        for (i, m) in self.mix.iter().enumerate() {
            visit_linear(m, &format!("mix.{i}"), f);
        }
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_linear_mut(&mut self.project, "project", f);
        for (i, m) in self.mix.iter_mut().enumerate() {
            visit_linear_mut(m, &format!("mix.{i}"), f);
        }
    }
}

/// Patch vectors in `(row, col, channel)` order, one per output pixel.
pub fn patchify(image: &RgbImage, patch: usize) -> Vec<Vec<f64>> {
    let (hf, wf) = (image.height / patch, image.width / patch);
    let mut out = Vec::with_capacity(hf * wf);
    for pr in 0..hf {
        for pc in 0..wf {
            let mut x = Vec::with_capacity(3 * patch * patch);
            for r in 0..patch {
                for c in 0..patch {
                    x.extend_from_slice(&image.pixel(pr * patch + r, pc * patch + c));
                }
            }
            out.push(x);
        }
    }
    out
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub height: usize,
    pub width: usize,
    patches: Vec<Vec<f64>>,
    /// `acts[l][pixel]`: output of stage `l` (0 = projection).
    acts: Vec<Vec<Vec<f64>>>,
}

pub fn encode_panorama(image: &RgbImage, params: &ToyEncoderParams) -> Result<FeatureMap> {
    encode_cached(image, params).map(|(f, _)| f)
}

pub fn encode_cached(image: &RgbImage, params: &ToyEncoderParams) -> Result<(FeatureMap, EncoderCache)> {
    let (hf, wf) = params.output_dims(image.height, image.width)?;
    let patches = patchify(image, params.patch);
    encode_patches(patches, hf, wf, params)
}

pub(crate) fn encode_patches(
    patches: Vec<Vec<f64>>,
    hf: usize,
    wf: usize,
    params: &ToyEncoderParams,
) -> Result<(FeatureMap, EncoderCache)> {
    let tanh = |mut v: Vec<f64>| {
        v.iter_mut().for_each(|x| *x = x.tanh());
        v
    };
    let mut acts = Vec::with_capacity(1 + params.mix.len());
    acts.push(patches.iter().map(|x| tanh(params.project.forward(x))).collect::<Vec<_>>());
    for m in &params.mix {
        let prev = acts.last().expect("projection stage");
        let next = prev.iter().map(|h| tanh(m.forward(h))).collect();
        acts.push(next);
    }
    let data = acts.last().expect("projection stage").concat();
    let feature = FeatureMap::new(hf, wf, params.channels, data)?;
    Ok((
        feature,
        EncoderCache {
            height: hf,
            width: wf,
            patches,
            acts,
        },
    ))
}

/// Parameter gradients for upstream gradient `d_feature` (feature-map layout).
pub fn encoder_backward(params: &ToyEncoderParams, cache: &EncoderCache, d_feature: &[f64], grads: &mut ToyEncoderParams) {
    let c = params.channels;
    for (px, dh_out) in d_feature.chunks_exact(c).enumerate() {
        let mut dh = dh_out.to_vec();
        for l in (0..cache.acts.len()).rev() {
            let h = &cache.acts[l][px];
            let dz: Vec<f64> = dh.iter().zip(h).map(|(d, h)| d * (1.0 - h * h)).collect();
            if l == 0 {
                params.project.backward(&cache.patches[px], &dz, &mut grads.project, None);
            } else {
                let mut dx = vec![0.0; c];
                params.mix[l - 1].backward(&cache.acts[l - 1][px], &dz, &mut grads.mix[l - 1], Some(&mut dx));
                dh = dx;
            }
        }
    }
}
