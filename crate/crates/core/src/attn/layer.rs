use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compact_by_mask, BevQuery, BilinearTap, CompactQueries, FeatureMap};
use crate::nn::{softmax_in_place, visit_linear, visit_linear_mut, Linear, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub n_head: usize,
    pub n_point: usize,
    /// `C`, channels of the sampled feature map.
    pub feat_channels: usize,
    /// `C_Emb`, channels of the BEV queries.
    pub embed_channels: usize,
    pub residual: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            n_head: 4,
            n_point: 4,
            feat_channels: 16,
            embed_channels: 16,
            residual: true,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_head == 0 || self.n_point == 0 || self.feat_channels == 0 || self.embed_channels == 0 {
            return Err(Error::invalid(format!("attention dimensions must be positive: {self:?}")));
        }
        if self.feat_channels % self.n_head != 0 {
            return Err(Error::invalid(format!(
                "feature channels {} not divisible by {} heads",
                self.feat_channels, self.n_head
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.feat_channels / self.n_head
    }

    fn slots(&self) -> usize {
        self.n_head * self.n_point
    }
}

/// Learnable tensors of one attention layer. The same type doubles as the
/// gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub config: AttentionConfig,
    /// Per-head value projection `W_i`, `C → C / N_head`.
    pub value: Vec<Linear>,
    /// `C_Emb → N_head · N_point · 2`, laid out `[head][point][row, col]`.
    pub offset: Linear,
    /// `C_Emb → N_head · N_point` attention logits.
    pub weight: Linear,
    /// `C → C_Emb`.
    pub output: Linear,
}

pub type LayerGrads = AttentionParams;

impl AttentionParams {
    pub fn zeros(config: AttentionConfig) -> Result<Self> {
        config.validate()?;
        let c = config.feat_channels;
        let e = config.embed_channels;
        Ok(Self {
            config,
            value: (0..config.n_head)
                .map(|_| Linear::zeros(c, config.head_dim(), false))
                .collect(),
            offset: Linear::zeros(e, config.slots() * 2, true),
            weight: Linear::zeros(e, config.slots(), true),
            output: Linear::zeros(c, e, true),
        })
    }

    /// Training start: zero offset and weight heads (sample exactly at the
    /// reference index with uniform weights), small random projections.
    pub fn init<R: Rng>(config: AttentionConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let c = config.feat_channels;
        for v in &mut p.value {
            *v = Linear::uniform(c, config.head_dim(), false, rng);
        }
        p.output = Linear::uniform(c, config.embed_channels, true, rng);
        Ok(p)
    }

    /// Every tensor random in `±scale`; used to exercise all gradient paths.
    pub fn random<R: Rng>(config: AttentionConfig, scale: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        p.visit_tensors_mut(&mut |_, _, t| {
            for v in t.iter_mut() {
                *v = rng.random_range(-scale..scale);
            }
        });
        Ok(p)
    }
}

impl Parameterized for AttentionParams {
    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, v) in self.value.iter().enumerate() {
            visit_linear(v, &format!("value.{i}"), f);
        }
        visit_linear(&self.offset, "offset", f);
        visit_linear(&self.weight, "weight", f);
        visit_linear(&self.output, "output", f);
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (i, v) in self.value.iter_mut().enumerate() {
            visit_linear_mut(v, &format!("value.{i}"), f);
        }
        visit_linear_mut(&mut self.offset, "offset", f);
        visit_linear_mut(&mut self.weight, "weight", f);
        visit_linear_mut(&mut self.output, "output", f);
    }
}

/// Per compact query: offsets `[head][point][2]` and softmax weights
/// `[head][point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetsAndWeights {
    pub n_head: usize,
    pub n_point: usize,
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl OffsetsAndWeights {
    pub fn len(&self) -> usize {
        self.weights.len() / (self.n_head * self.n_point)
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, m: usize, head: usize, point: usize) -> f64 {
        self.weights[(m * self.n_head + head) * self.n_point + point]
    }

    pub fn offset(&self, m: usize, head: usize, point: usize) -> [f64; 2] {
        let k = ((m * self.n_head + head) * self.n_point + point) * 2;
        [self.offsets[k], self.offsets[k + 1]]
    }
}

pub fn predict_offsets_and_weights(
    compact: &CompactQueries,
    params: &AttentionParams,
) -> Result<OffsetsAndWeights> {
    let cfg = params.config;
    if compact.channels != cfg.embed_channels {
        return Err(Error::invalid(format!(
            "queries have {} channels, layer expects {}",
            compact.channels, cfg.embed_channels
        )));
    }
    let m = compact.len();
    let slots = cfg.slots();
    let mut offsets = vec![0.0; m * slots * 2];
    let mut weights = vec![0.0; m * slots];
    for k in 0..m {
        let q = compact.row(k);
        params
            .offset
            .forward_into(q, &mut offsets[k * slots * 2..(k + 1) * slots * 2]);
        let w = &mut weights[k * slots..(k + 1) * slots];
        params.weight.forward_into(q, w);
        for head in w.chunks_mut(cfg.n_point) {
            softmax_in_place(head);
        }
    }
    Ok(OffsetsAndWeights {
        n_head: cfg.n_head,
        n_point: cfg.n_point,
        offsets,
        weights,
    })
}

/// Intermediate values of one forward pass needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub compact: CompactQueries,
    pub offsets_weights: OffsetsAndWeights,
    /// `M × N_head × N_point × 2` sampling locations.
    pub locations: Vec<[f64; 2]>,
    /// `M × N_head × N_point × C` sampled features.
    samples: Vec<f64>,
    /// `M × N_head × C` weighted sums per head.
    head_sums: Vec<f64>,
    /// `M × C` assembled head outputs.
    assembled: Vec<f64>,
}

fn check_shapes(query: &BevQuery, feature: &FeatureMap, params: &AttentionParams) -> Result<()> {
    query.validate()?;
    params.config.validate()?;
    if query.channels != params.config.embed_channels {
        return Err(Error::invalid(format!(
            "query has {} channels, layer expects {}",
            query.channels, params.config.embed_channels
        )));
    }
    if feature.channels != params.config.feat_channels {
        return Err(Error::invalid(format!(
            "feature map has {} channels, layer expects {}",
            feature.channels, params.config.feat_channels
        )));
    }
    Ok(())
}

pub fn attention_forward(
    query: &BevQuery,
    feature: &FeatureMap,
    params: &AttentionParams,
) -> Result<BevQuery> {
    attention_forward_cached(query, feature, params).map(|(q, _)| q)
}

pub fn attention_forward_cached(
    query: &BevQuery,
    feature: &FeatureMap,
    params: &AttentionParams,
) -> Result<(BevQuery, LayerCache)> {
    check_shapes(query, feature, params)?;
    let cfg = params.config;
    let c = cfg.feat_channels;
    let e = cfg.embed_channels;
    let dh = cfg.head_dim();
    let np = cfg.n_point;

    let compact = compact_by_mask(query);
    let ow = predict_offsets_and_weights(&compact, params)?;
    let m = compact.len();

    let mut locations = Vec::with_capacity(m * cfg.slots());
    let mut samples = vec![0.0; m * cfg.slots() * c];
    let mut head_sums = vec![0.0; m * cfg.n_head * c];
    let mut assembled = vec![0.0; m * c];
    let mut out_rows = vec![0.0; m * e];

    for k in 0..m {
        let base = compact.index[k];
        for head in 0..cfg.n_head {
            let hs = (k * cfg.n_head + head) * c;
            for point in 0..np {
                let slot = (k * cfg.n_head + head) * np + point;
                let off = ow.offset(k, head, point);
                let loc = [base[0] + off[0], base[1] + off[1]];
                locations.push(loc);
                let s = &mut samples[slot * c..(slot + 1) * c];
                BilinearTap::new(feature.height, feature.width, loc[0], loc[1]).sample_into(feature, s);
                let a = ow.weights[slot];
                for (acc, v) in head_sums[hs..hs + c].iter_mut().zip(s.iter()) {
                    *acc += a * v;
                }
            }
            params.value[head].forward_into(
                &head_sums[hs..hs + c],
                &mut assembled[k * c + head * dh..k * c + (head + 1) * dh],
            );
        }
        let out = &mut out_rows[k * e..(k + 1) * e];
        params.output.forward_into(&assembled[k * c..(k + 1) * c], out);
        if cfg.residual {
            for (o, q) in out.iter_mut().zip(compact.row(k)) {
                *o += q;
            }
        }
    }

    let mut result = query.clone();
    compact.scatter(&out_rows, &mut result.data);
    Ok((
        result,
        LayerCache {
            compact,
            offsets_weights: ow,
            locations,
            samples,
            head_sums,
            assembled,
        },
    ))
}

/// Backward pass of one layer.
///
/// `d_out` is the gradient with respect to the layer output (`N × C_Emb`).
/// Returns the parameter gradients, the gradient with respect to the input
/// query data (`N × C_Emb`) and with respect to the feature map.
pub fn attention_backward(
    feature: &FeatureMap,
    params: &AttentionParams,
    cache: &LayerCache,
    d_out: &[f64],
) -> Result<(LayerGrads, Vec<f64>, Vec<f64>)> {
    let cfg = params.config;
    let c = cfg.feat_channels;
    let e = cfg.embed_channels;
    let dh = cfg.head_dim();
    let np = cfg.n_point;
    let slots = cfg.slots();
    if feature.channels != c {
        return Err(Error::invalid("feature map does not match layer channels"));
    }
    if d_out.len() % e != 0 {
        return Err(Error::invalid("output gradient is not a multiple of C_Emb"));
    }

    let mut grads = AttentionParams::zeros(cfg)?;
    let mut d_query = d_out.to_vec();
    let mut d_feature = vec![0.0; feature.data.len()];
    let ow = &cache.offsets_weights;

    let mut d_assembled = vec![0.0; c];
    let mut d_head = vec![0.0; c];
    let mut d_sample = vec![0.0; c];
    let mut d_logits = vec![0.0; slots];
    let mut d_offsets = vec![0.0; slots * 2];
    let mut d_q = vec![0.0; e];

    for (k, &n) in cache.compact.rows.iter().enumerate() {
        let g = &d_out[n * e..(n + 1) * e];
        d_assembled.fill(0.0);
        params.output.backward(
            &cache.assembled[k * c..(k + 1) * c],
            g,
            &mut grads.output,
            Some(&mut d_assembled),
        );

        for head in 0..cfg.n_head {
            let hs = (k * cfg.n_head + head) * c;
            d_head.fill(0.0);
            params.value[head].backward(
                &cache.head_sums[hs..hs + c],
                &d_assembled[head * dh..(head + 1) * dh],
                &mut grads.value[head],
                Some(&mut d_head),
            );
            let mut weighted = 0.0;
            let first = (k * cfg.n_head + head) * np;
            for point in 0..np {
                let slot = first + point;
                let s = &cache.samples[slot * c..(slot + 1) * c];
                let d_a: f64 = s.iter().zip(&d_head).map(|(a, b)| a * b).sum();
                d_logits[head * np + point] = d_a;
                weighted += ow.weights[slot] * d_a;

                let a = ow.weights[slot];
                for (ds, gh) in d_sample.iter_mut().zip(&d_head) {
                    *ds = a * gh;
                }
                let loc = cache.locations[slot];
                let tap = BilinearTap::new(feature.height, feature.width, loc[0], loc[1]);
                tap.scatter_grad(c, &d_sample, &mut d_feature);
                let (dr, dc) = tap.location_grad(feature, &d_sample);
                d_offsets[(head * np + point) * 2] = dr;
                d_offsets[(head * np + point) * 2 + 1] = dc;
            }
            for point in 0..np {
                let slot = first + point;
                d_logits[head * np + point] = ow.weights[slot] * (d_logits[head * np + point] - weighted);
            }
        }

        let q = cache.compact.row(k);
        d_q.fill(0.0);
        params.weight.backward(q, &d_logits, &mut grads.weight, Some(&mut d_q));
        params.offset.backward(q, &d_offsets, &mut grads.offset, Some(&mut d_q));
        let dst = &mut d_query[n * e..(n + 1) * e];
        for (d, (gq, go)) in dst.iter_mut().zip(d_q.iter().zip(g)) {
            *d = gq + if cfg.residual { *go } else { 0.0 };
        }
    }
    Ok((grads, d_query, d_feature))
}

pub fn attention_stack_forward(
    query: &BevQuery,
    feature: &FeatureMap,
    layers: &[AttentionParams],
) -> Result<BevQuery> {
    let mut q = query.clone();
    for layer in layers {
        q = attention_forward(&q, feature, layer)?;
    }
    Ok(q)
}

pub fn attention_stack_forward_cached(
    query: &BevQuery,
    feature: &FeatureMap,
    layers: &[AttentionParams],
) -> Result<(BevQuery, Vec<LayerCache>)> {
    let mut q = query.clone();
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (next, cache) = attention_forward_cached(&q, feature, layer)?;
        q = next;
        caches.push(cache);
    }
    Ok((q, caches))
}

#[derive(Debug, Clone)]
pub struct StackGrads {
    pub layers: Vec<LayerGrads>,
    pub d_query: Vec<f64>,
    pub d_feature: Vec<f64>,
}

pub fn attention_stack_backward(
    feature: &FeatureMap,
    layers: &[AttentionParams],
    caches: &[LayerCache],
    d_out: &[f64],
) -> Result<StackGrads> {
    if layers.len() != caches.len() {
        return Err(Error::invalid("one cache per layer required"));
    }
    let mut d_q = d_out.to_vec();
    let mut d_feature = vec![0.0; feature.data.len()];
    let mut grads = Vec::with_capacity(layers.len());
    for (layer, cache) in layers.iter().zip(caches).rev() {
        let (g, dq, df) = attention_backward(feature, layer, cache, &d_q)?;
        for (a, b) in d_feature.iter_mut().zip(&df) {
            *a += b;
        }
        d_q = dq;
        grads.push(g);
    }
    grads.reverse();
    Ok(StackGrads {
        layers: grads,
        d_query: d_q,
        d_feature,
    })
}
