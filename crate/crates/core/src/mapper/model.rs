use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{encoder_backward, patchify, EncoderCache, ToyEncoderParams};
use crate::attn::{
    attention_stack_backward, attention_stack_forward_cached, AttentionConfig, AttentionParams, BevQuery,
    FeatureMap, LayerCache,
};
use crate::bev::{bev_reference_points, build_mask_map, BevGrid, BevGridSpec, CameraPose, MaskMap};
use crate::geo::{inverse_radial_projection, make_angle_grid, DepthPanorama};
use crate::io::checkpoint::Checkpoint;
use crate::io::{read_bytes, write_bytes};
use crate::nn::{visit_linear, visit_linear_mut, Linear, Parameterized};
use crate::raster::RgbImage;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    pub patch: usize,
    /// Feature and query width (`C = C_Emb`).
    pub channels: usize,
    pub encoder_mix_layers: usize,
    pub attention_layers: usize,
    pub n_head: usize,
    pub n_point: usize,
    /// Hidden ReLU width of the per-cell decoder; 0 for a single linear map.
    pub decoder_hidden: usize,
    pub num_classes: usize,
    pub spec: BevGridSpec,
    pub seed: u64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            channels: 16,
            encoder_mix_layers: 1,
            attention_layers: 2,
            n_head: 4,
            n_point: 4,
            decoder_hidden: 0,
            num_classes: 20,
            spec: BevGridSpec::default(),
            seed: 0,
        }
    }
}

impl MapperConfig {
    pub fn attention_config(&self) -> AttentionConfig {
        AttentionConfig {
            n_head: self.n_head,
            n_point: self.n_point,
            feat_channels: self.channels,
            embed_channels: self.channels,
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.attention_config().validate()?;
        if self.patch == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        if self.num_classes == 0 || self.num_classes > self.spec.void_label as usize {
            return Err(Error::invalid(format!(
                "class count {} must be in 1..={} so ids stay below the void label",
                self.num_classes, self.spec.void_label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperParams {
    pub encoder: ToyEncoderParams,
    /// `[ref height, x / half range, z / half range] → C`.
    pub embed: Linear,
    pub layers: Vec<AttentionParams>,
    pub hidden: Option<Linear>,
    pub classifier: Linear,
}

impl MapperParams {
    pub fn zeros(config: &MapperConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let dec_in = if config.decoder_hidden > 0 { config.decoder_hidden } else { c };
        Ok(Self {
            encoder: ToyEncoderParams::zeros(config.patch, c, config.encoder_mix_layers)?,
            embed: Linear::zeros(3, c, true),
            layers: (0..config.attention_layers)
                .map(|_| AttentionParams::zeros(config.attention_config()))
                .collect::<Result<_>>()?,
            hidden: (config.decoder_hidden > 0).then(|| Linear::zeros(c, config.decoder_hidden, true)),
            classifier: Linear::zeros(dec_in, config.num_classes, true),
        })
    }

    /// Seeded from `config.seed`.
    pub fn init(config: &MapperConfig) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.channels;
        p.encoder = ToyEncoderParams::init(config.patch, c, config.encoder_mix_layers, &mut rng)?;
        p.embed = Linear::uniform(3, c, true, &mut rng);
        for l in &mut p.layers {
            *l = AttentionParams::init(config.attention_config(), &mut rng)?;
        }
        if let Some(h) = &mut p.hidden {
            *h = Linear::uniform(c, config.decoder_hidden, true, &mut rng);
        }
        p.classifier = Linear::uniform(p.classifier.in_dim, config.num_classes, true, &mut rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_all();
        z
    }
}

fn prefixed<'a>(
    prefix: &'a str,
    f: &'a mut dyn FnMut(&str, &[usize], &[f64]),
) -> impl FnMut(&str, &[usize], &[f64]) + 'a {
    move |n, s, d| f(&format!("{prefix}.{n}"), s, d)
}

fn prefixed_mut<'a>(
    prefix: &'a str,
    f: &'a mut dyn FnMut(&str, &[usize], &mut [f64]),
) -> impl FnMut(&str, &[usize], &mut [f64]) + 'a {
    move |n, s, d| f(&format!("{prefix}.{n}"), s, d)
}

impl Parameterized for MapperParams {
    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.encoder.visit_tensors(&mut prefixed("encoder", f));
        visit_linear(&self.embed, "embed", f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_tensors(&mut prefixed(&format!("attn.{i}"), f));
        }
        if let Some(h) = &self.hidden {
            visit_linear(h, "decoder.hidden", f);
        }
        visit_linear(&self.classifier, "decoder.classifier", f);
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.encoder.visit_tensors_mut(&mut prefixed_mut("encoder", f));
        visit_linear_mut(&mut self.embed, "embed", f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_tensors_mut(&mut prefixed_mut(&format!("attn.{i}"), f));
        }
        if let Some(h) = &mut self.hidden {
            visit_linear_mut(h, "decoder.hidden", f);
        }
        visit_linear_mut(&mut self.classifier, "decoder.classifier", f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperModel {
    pub config: MapperConfig,
    pub params: MapperParams,
}

impl MapperModel {
    pub fn new(config: MapperConfig) -> Result<Self> {
        Ok(Self {
            params: MapperParams::init(&config)?,
            config,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({ "model": "mapper", "config": self.config });
        Ok(Checkpoint::from_params(&self.params, meta))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: MapperConfig = serde_json::from_value(
            ck.meta
                .get("config")
                .cloned()
                .ok_or_else(|| Error::parse("checkpoint has no mapper config"))?,
        )?;
        let mut params = MapperParams::zeros(&config)?;
        ck.load_into(&mut params)?;
        Ok(Self { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path, &self.to_checkpoint()?.encode()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::decode(&read_bytes(path)?)?)
    }
}

/// Everything about a frame that does not depend on the parameters:
/// encoder patches, the mask map and per-cell query geometry.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub mask: MaskMap,
    /// Linear indices of observed cells, in storage order.
    pub cells: Vec<usize>,
    /// Embedding input per observed cell.
    pub query_inputs: Vec<[f64; 3]>,
    /// Feature-map sampling location per cell (unobserved cells `[0, 0]`).
    pub index: Vec<[f64; 2]>,
    feature_dims: (usize, usize),
    patches: Vec<Vec<f64>>,
}

pub fn prepare_frame(
    image: &RgbImage,
    depth: &DepthPanorama,
    pose: &CameraPose,
    config: &MapperConfig,
) -> Result<PreparedFrame> {
    config.validate()?;
    let (h, w) = (depth.height(), depth.width());
    if (image.height, image.width) != (h, w) {
        return Err(Error::invalid(format!(
            "image is {}x{} but depth is {h}x{w}",
            image.height, image.width
        )));
    }
    let (hf, wf) = ToyEncoderParams::zeros(config.patch, config.channels, 0)?.output_dims(h, w)?;
    let spec = &config.spec;
    let mask = build_mask_map(depth, &make_angle_grid(h, w)?, pose, spec)?;
    let refs = bev_reference_points(&mask);
    let camera: Vec<Vec3> = refs.iter().map(|r| pose.to_camera(&r.point)).collect();
    let pixels = inverse_radial_projection(&camera, h, w)?;
    let half = spec.range / 2.0;
    let mut index = vec![[0.0; 2]; spec.cell_count()];
    let mut cells = Vec::with_capacity(refs.len());
    let mut query_inputs = Vec::with_capacity(refs.len());
    for (r, (pr, pc)) in refs.iter().zip(pixels) {
        let k = spec.index(r.u, r.v);
        index[k] = [pr as f64 * hf as f64 / h as f64, pc as f64 * wf as f64 / w as f64];
        cells.push(k);
        query_inputs.push([r.point.y, r.point.x / half, r.point.z / half]);
    }
    Ok(PreparedFrame {
        mask,
        cells,
        query_inputs,
        index,
        feature_dims: (hf, wf),
        patches: patchify(image, config.patch),
    })
}

/// `S × S × K` per-cell logits; unobserved cells hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct BevLogits {
    pub size: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl BevLogits {
    pub fn cell(&self, k: usize) -> &[f64] {
        &self.data[k * self.classes..(k + 1) * self.classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperOutput {
    pub logits: BevLogits,
    pub mask: MaskMap,
}

pub(crate) struct ForwardCache {
    encoder: EncoderCache,
    feature: FeatureMap,
    layers: Vec<LayerCache>,
    output: BevQuery,
    /// Post-ReLU hidden activations per observed cell.
    hidden: Vec<Vec<f64>>,
}

pub(crate) fn forward_prepared(
    frame: &PreparedFrame,
    params: &MapperParams,
    config: &MapperConfig,
) -> Result<(BevLogits, ForwardCache)> {
    let (hf, wf) = frame.feature_dims;
    let (feature, encoder) = super::encoder::encode_patches(frame.patches.clone(), hf, wf, &params.encoder)?;
    let s = config.spec.size;
    let e = config.channels;
    let mut data = vec![0.0; s * s * e];
    for (k, x) in frame.cells.iter().zip(&frame.query_inputs) {
        params.embed.forward_into(x, &mut data[k * e..(k + 1) * e]);
    }
    let query = BevQuery::new(s, s, e, data, frame.index.clone(), frame.mask.mask.clone())?;
    let (output, layers) = attention_stack_forward_cached(&query, &feature, &params.layers)?;
    let kc = config.num_classes;
    let mut logits = vec![0.0; s * s * kc];
    let mut hidden = Vec::new();
    for &k in &frame.cells {
        let out = &mut logits[k * kc..(k + 1) * kc];
        match &params.hidden {
            Some(hl) => {
                let mut a = hl.forward(output.row(k));
                a.iter_mut().for_each(|v| *v = v.max(0.0));
                params.classifier.forward_into(&a, out);
                hidden.push(a);
            }
            None => params.classifier.forward_into(output.row(k), out),
        }
    }
    Ok((
        BevLogits {
            size: s,
            classes: kc,
            data: logits,
        },
        ForwardCache {
            encoder,
            feature,
            layers,
            output,
            hidden,
        },
    ))
}

pub(crate) fn backward_prepared(
    frame: &PreparedFrame,
    params: &MapperParams,
    cache: &ForwardCache,
    d_logits: &[f64],
) -> Result<MapperParams> {
    let mut grads = params.zeros_like();
    let kc = params.classifier.out_dim;
    let e = params.embed.out_dim;
    let mut d_out = vec![0.0; cache.output.data.len()];
    for (i, &k) in frame.cells.iter().enumerate() {
        let dl = &d_logits[k * kc..(k + 1) * kc];
        let row = cache.output.row(k);
        let d_row = &mut d_out[k * e..(k + 1) * e];
        match (&params.hidden, &mut grads.hidden) {
            (Some(hl), Some(gh)) => {
                let a = &cache.hidden[i];
                let mut da = vec![0.0; a.len()];
                params.classifier.backward(a, dl, &mut grads.classifier, Some(&mut da));
                for (d, a) in da.iter_mut().zip(a) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                hl.backward(row, &da, gh, Some(d_row));
            }
            _ => params.classifier.backward(row, dl, &mut grads.classifier, Some(d_row)),
        }
    }
    let stack = attention_stack_backward(&cache.feature, &params.layers, &cache.layers, &d_out)?;
    grads.layers = stack.layers;
    for (k, x) in frame.cells.iter().zip(&frame.query_inputs) {
        params.embed.backward(x, &stack.d_query[k * e..(k + 1) * e], &mut grads.embed, None);
    }
    encoder_backward(&params.encoder, &cache.encoder, &stack.d_feature, &mut grads.encoder);
    Ok(grads)
}

/// Mean cross-entropy over cells that are observed and carry a ground-truth
/// class id `< K`, with its gradient with respect to the logits.
pub fn cross_entropy(logits: &BevLogits, observed: &[bool], gt: &[u8]) -> Result<(f64, Vec<f64>)> {
    let (terms, grad) = cross_entropy_terms(logits, observed, gt)?;
    Ok((terms.iter().sum(), grad))
}

/// Per-cell contributions to [`cross_entropy`], already divided by the
/// scored-cell count; unscored cells contribute zero.
fn cross_entropy_terms(logits: &BevLogits, observed: &[bool], gt: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let kc = logits.classes;
    let n = logits.size * logits.size;
    if observed.len() != n || gt.len() != n {
        return Err(Error::invalid("mask and labels must cover every cell"));
    }
    let scored: Vec<usize> = (0..n).filter(|k| observed[*k] && (gt[*k] as usize) < kc).collect();
    let mut grad = vec![0.0; logits.data.len()];
    let mut terms = vec![0.0; n];
    if scored.is_empty() {
        return Ok((terms, grad));
    }
    let scale = 1.0 / scored.len() as f64;
    for k in scored {
        let z = logits.cell(k);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let y = gt[k] as usize;
        terms[k] = (sum.ln() + m - z[y]) * scale;
        let g = &mut grad[k * kc..(k + 1) * kc];
        for (gi, zi) in g.iter_mut().zip(z) {
            *gi = (zi - m).exp() / sum * scale;
        }
        g[y] -= scale;
    }
    Ok((terms, grad))
}

pub fn forward(image: &RgbImage, depth: &DepthPanorama, pose: &CameraPose, model: &MapperModel) -> Result<MapperOutput> {
    let frame = prepare_frame(image, depth, pose, &model.config)?;
    let (logits, _) = forward_prepared(&frame, &model.params, &model.config)?;
    Ok(MapperOutput {
        logits,
        mask: frame.mask,
    })
}

/// Per-cell argmax (ties to the smaller id); void wherever the mask is unset.
pub fn predict_from_logits(logits: &BevLogits, mask: &MaskMap) -> BevGrid {
    let mut grid = BevGrid::empty(&mask.spec);
    for (k, &m) in mask.mask.iter().enumerate() {
        if !m {
            continue;
        }
        let z = logits.cell(k);
        let mut best = 0;
        for (c, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = c;
            }
        }
        grid.labels[k] = best as u8;
        grid.heights[k] = mask.ref_heights[k];
        grid.observed[k] = true;
    }
    grid
}

pub fn predict_map(model: &MapperModel, image: &RgbImage, depth: &DepthPanorama, pose: &CameraPose) -> Result<BevGrid> {
    let out = forward(image, depth, pose, model)?;
    Ok(predict_from_logits(&out.logits, &out.mask))
}

/// Finite-difference check of the whole mapper on a tiny random frame.
pub fn mapper_gradcheck(seed: u64, step: f64) -> Result<crate::attn::GradCheckReport> {
    use rand::Rng;
    let config = MapperConfig {
        patch: 4,
        channels: 4,
        encoder_mix_layers: 1,
        attention_layers: 2,
        n_head: 2,
        n_point: 2,
        decoder_hidden: 5,
        num_classes: 3,
        spec: BevGridSpec {
            size: 6,
            range: 4.0,
            ..BevGridSpec::default()
        },
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (h, w) = (8, 16);
    let image = RgbImage::new(h, w, (0..h * w * 3).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let depth = DepthPanorama::new(h, w, (0..h * w).map(|_| rng.random_range(0.8..1.8)).collect())?;
    let pose = CameraPose::yaw(0.3, Vec3::new(0.1, 0.0, -0.2));
    let frame = prepare_frame(&image, &depth, &pose, &config)?;
    let gt: Vec<u8> = (0..config.spec.cell_count()).map(|_| rng.random_range(0..3)).collect();
    let mut params = MapperParams::init(&config)?;
    for l in &mut params.layers {
        *l = AttentionParams::random(config.attention_config(), 0.3, &mut rng)?;
    }
    let theta = params.flatten();
    let eval = |t: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut p = params.clone();
        p.assign_flat(t)?;
        let (logits, cache) = forward_prepared(&frame, &p, &config)?;
        let (terms, d) = cross_entropy_terms(&logits, &frame.mask.mask, &gt)?;
        Ok((terms, backward_prepared(&frame, &p, &cache, &d)?.flatten()))
    };
    crate::attn::gradient_check_terms(eval, &theta, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> MapperConfig {
        MapperConfig {
            channels: 8,
            n_head: 2,
            n_point: 2,
            num_classes: 4,
            spec: BevGridSpec {
                size: 10,
                range: 6.0,
                ..BevGridSpec::default()
            },
            ..MapperConfig::default()
        }
    }

    fn frame_inputs() -> (RgbImage, DepthPanorama) {
        let (h, w) = (16, 32);
        let img = RgbImage::new(h, w, (0..h * w * 3).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let depth = DepthPanorama::new(h, w, vec![1.5; h * w]).unwrap();
        (img, depth)
    }

    #[test]
    fn all_zero_depth_predicts_void() {
        let model = MapperModel::new(tiny_config()).unwrap();
        let (img, _) = frame_inputs();
        let depth = DepthPanorama::zeros(16, 32).unwrap();
        let grid = predict_map(&model, &img, &depth, &CameraPose::identity()).unwrap();
        assert!(grid.labels.iter().all(|l| *l == 255));
        assert_eq!(grid.observed_count(), 0);
    }

    #[test]
    fn forward_is_deterministic() {
        let (img, depth) = frame_inputs();
        let a = forward(&img, &depth, &CameraPose::identity(), &MapperModel::new(tiny_config()).unwrap()).unwrap();
        let b = forward(&img, &depth, &CameraPose::identity(), &MapperModel::new(tiny_config()).unwrap()).unwrap();
        assert!(a.mask.count() > 0);
        assert_eq!(a.logits.data, b.logits.data);
    }

    #[test]
    fn void_closure_and_zero_logits_off_mask() {
        let (img, depth) = frame_inputs();
        let model = MapperModel::new(tiny_config()).unwrap();
        let out = forward(&img, &depth, &CameraPose::identity(), &model).unwrap();
        let grid = predict_from_logits(&out.logits, &out.mask);
        for (k, m) in out.mask.mask.iter().enumerate() {
            if !m {
                assert_eq!(grid.labels[k], 255);
                assert!(out.logits.cell(k).iter().all(|v| *v == 0.0));
            } else {
                assert!(grid.labels[k] < 4);
            }
        }
    }

    #[test]
    fn tie_rule_and_scale_invariance() {
        let spec = BevGridSpec {
            size: 2,
            range: 2.0,
            ..BevGridSpec::default()
        };
        let mask = MaskMap {
            spec,
            mask: vec![true, true, false, true],
            ref_heights: vec![0.0, 0.0, f64::NAN, 0.0],
        };
        let mut logits = BevLogits {
            size: 2,
            classes: 6,
            data: vec![0.0; 24],
        };
        assert_eq!(predict_from_logits(&logits, &mask).labels, vec![0, 0, 255, 0]);
        for k in 0..4 {
            logits.data[k * 6 + 5] = 1.0 + k as f64;
            logits.data[k * 6 + 2] = 0.5;
        }
        let grid = predict_from_logits(&logits, &mask);
        assert_eq!(grid.labels, vec![5, 5, 255, 5]);
        let doubled = BevLogits {
            data: logits.data.iter().map(|v| 2.0 * v).collect(),
            ..logits.clone()
        };
        assert_eq!(predict_from_logits(&doubled, &mask).labels, grid.labels);
    }

    #[test]
    fn cross_entropy_matches_scalar_formula() {
        let logits = BevLogits {
            size: 1,
            classes: 3,
            data: vec![1.0, 2.0, 0.5],
        };
        let (l, g) = cross_entropy(&logits, &[true], &[1]).unwrap();
        let z: f64 = [1.0f64, 2.0, 0.5].iter().map(|v| v.exp()).sum();
        assert!((l - (z.ln() - 2.0)).abs() < 1e-12);
        assert!((g.iter().sum::<f64>()).abs() < 1e-12);
        let (l0, g0) = cross_entropy(&logits, &[false], &[1]).unwrap();
        assert_eq!((l0, g0), (0.0, vec![0.0; 3]));
        assert_eq!(cross_entropy(&logits, &[true], &[255]).unwrap().0, 0.0);
    }

    #[test]
    fn whole_mapper_gradients_match_finite_differences() {
        let r = mapper_gradcheck(1, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = MapperModel::new(MapperConfig {
            decoder_hidden: 6,
            ..tiny_config()
        })
        .unwrap();
        let bytes = model.to_checkpoint().unwrap().encode().unwrap();
        let back = MapperModel::from_checkpoint(&Checkpoint::decode(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
        let names = model.params.tensor_names();
        assert!(names.contains(&"encoder.project.weight".to_string()));
        assert!(names.contains(&"attn.1.offset.weight".to_string()));
        assert!(names.contains(&"decoder.hidden.bias".to_string()));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let (img, _) = frame_inputs();
        let depth = DepthPanorama::zeros(8, 32).unwrap();
        let model = MapperModel::new(tiny_config()).unwrap();
        assert!(forward(&img, &depth, &CameraPose::identity(), &model).is_err());
        assert!(MapperModel::new(MapperConfig {
            num_classes: 0,
            ..tiny_config()
        })
        .is_err());
    }
}
