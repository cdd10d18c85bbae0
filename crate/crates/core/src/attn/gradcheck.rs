//! Central finite-difference verification of hand-written gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    attention_backward, attention_forward_cached, AttentionConfig, AttentionParams, BevQuery,
    FeatureMap,
};
use crate::nn::Parameterized;
use crate::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
const MAGNITUDE_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the analytic gradient returned by `loss` at `params` against
/// central differences `(L(θ + h e_k) − L(θ − h e_k)) / 2h` for every
/// coordinate.
pub fn gradient_check<F>(mut loss: F, params: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    gradient_check_terms(|t| loss(t).map(|(l, g)| (vec![l], g)), params, step)
}

/// Like [`gradient_check`] for a loss given as a sum of terms. Differences
/// are taken term by term before summing, so terms a coordinate does not
/// touch cancel exactly and roundoff scales with the affected terms only.
pub fn gradient_check_terms<F>(mut loss: F, params: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let (l0, analytic) = loss(params)?;
    if !l0.iter().all(|l| l.is_finite()) {
        return Err(Error::NonFinite(format!("loss {}", l0.iter().sum::<f64>())));
    }
    if analytic.len() != params.len() {
        return Err(Error::invalid(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
    };
    for k in 0..params.len() {
        let orig = theta[k];
        theta[k] = orig + step;
        let (plus, _) = loss(&theta)?;
        theta[k] = orig - step;
        let (minus, _) = loss(&theta)?;
        theta[k] = orig;
        if plus.len() != l0.len() || minus.len() != l0.len() {
            return Err(Error::invalid("loss term count changed between evaluations"));
        }
        if !plus.iter().chain(&minus).all(|l| l.is_finite()) {
            return Err(Error::NonFinite(format!("loss near parameter {k}")));
        }
        let diff: f64 = plus.iter().zip(&minus).map(|(p, m)| p - m).sum();
        let numeric = diff / (2.0 * step);
        let err = relative_error(analytic[k], numeric);
        if err > report.max_rel_error || k == 0 {
            report.max_rel_error = err;
            report.worst_index = k;
            report.analytic = analytic[k];
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Problem size for [`attention_layer_gradcheck`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckDims {
    /// Feature and embedding channels.
    pub channels: usize,
    /// Query count, laid out as a `1 × N` grid.
    pub queries: usize,
    pub n_head: usize,
    pub n_point: usize,
}

impl Default for GradCheckDims {
    fn default() -> Self {
        Self {
            channels: 8,
            queries: 16,
            n_head: 2,
            n_point: 4,
        }
    }
}

/// Checks one randomly initialised layer end to end: every parameter
/// tensor, the query data and the feature map, under the loss
/// `Σ G ⊙ out + ½ Σ out²` with a fixed random `G`.
pub fn attention_layer_gradcheck(dims: GradCheckDims, seed: u64, step: f64) -> Result<GradCheckReport> {
    let cfg = AttentionConfig {
        n_head: dims.n_head,
        n_point: dims.n_point,
        feat_channels: dims.channels,
        embed_channels: dims.channels,
        residual: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = AttentionParams::random(cfg, 0.5, &mut rng)?;
    let (fh, fw) = (6, 12);
    let feature = FeatureMap::new(
        fh,
        fw,
        dims.channels,
        (0..fh * fw * dims.channels).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let n = dims.queries;
    let e = dims.channels;
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.75)).collect();
    if n > 1 {
        mask[0] = true;
        mask[n - 1] = false;
    }
    let query = BevQuery::new(
        1,
        n,
        e,
        (0..n * e).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..n)
            .map(|_| [rng.random_range(0.5..(fh as f64 - 1.5)), rng.random_range(0.0..fw as f64)])
            .collect(),
        mask,
    )?;
    let target: Vec<f64> = (0..n * e).map(|_| rng.random_range(-1.0..1.0)).collect();

    let n_params = params.param_count();
    let n_query = query.data.len();
    let mut theta = params.flatten();
    theta.extend_from_slice(&query.data);
    theta.extend_from_slice(&feature.data);

    let eval = |theta: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut p = params.clone();
        p.assign_flat(&theta[..n_params])?;
        let mut q = query.clone();
        q.data.copy_from_slice(&theta[n_params..n_params + n_query]);
        let mut f = feature.clone();
        f.data.copy_from_slice(&theta[n_params + n_query..]);
        let (out, cache) = attention_forward_cached(&q, &f, &p)?;
        let mut terms = Vec::with_capacity(out.data.len());
        let mut d_out = vec![0.0; out.data.len()];
        for ((o, g), d) in out.data.iter().zip(&target).zip(d_out.iter_mut()) {
            terms.push(g * o + 0.5 * o * o);
            *d = g + o;
        }
        let (grads, d_q, d_f) = attention_backward(&f, &p, &cache, &d_out)?;
        let mut grad = grads.flatten();
        grad.extend_from_slice(&d_q);
        grad.extend_from_slice(&d_f);
        Ok((terms, grad))
    };
    gradient_check_terms(eval, &theta, step)
}
