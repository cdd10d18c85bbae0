//! Minimal dense-layer plumbing shared by the attention layer and the mapper:
//! linear layers, named parameter traversal and an AdamW optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense layer `y = W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    /// Empty when the layer has no bias.
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize, with_bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: if with_bias { vec![0.0; out_dim] } else { Vec::new() },
        }
    }

    /// Weights uniform in `±1/sqrt(in_dim)`, zero bias.
    pub fn uniform<R: Rng>(in_dim: usize, out_dim: usize, with_bias: bool, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim, with_bias);
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        for w in &mut l.weight {
            *w = rng.random_range(-bound..bound);
        }
        l
    }

    pub fn identity(dim: usize, with_bias: bool) -> Self {
        let mut l = Self::zeros(dim, dim, with_bias);
        for i in 0..dim {
            l.weight[i * dim + i] = 1.0;
        }
        l
    }

    pub fn has_bias(&self) -> bool {
        !self.bias.is_empty()
    }

    pub fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = if self.has_bias() { self.bias[o] } else { 0.0 };
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *yo = acc;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out_dim];
        self.forward_into(x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and input gradients into
    /// `dx` for upstream gradient `dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, g) in dy.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let row = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += g * xi;
            }
            if self.has_bias() {
                grad.bias[o] += g;
            }
        }
        if let Some(dx) = dx {
            for (o, g) in dy.iter().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&format!("{prefix}.weight"), &[self.out_dim, self.in_dim], &self.weight);
        if self.has_bias() {
            f(&format!("{prefix}.bias"), &[self.out_dim], &self.bias);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        f(&format!("{prefix}.weight"), &[self.out_dim, self.in_dim], &mut self.weight);
        if self.has_bias() {
            f(&format!("{prefix}.bias"), &[self.out_dim], &mut self.bias);
        }
    }
}

/// Anything exposing an ordered set of named real tensors.
///
/// The traversal order is stable and defines the layout of flattened
/// parameter vectors and checkpoints.
pub trait Parameterized {
    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_tensors(&mut |_, _, t| n += t.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_tensors(&mut |_, _, t| out.extend_from_slice(t));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(Error::invalid(format!(
                "flat parameter vector has {} values, expected {n}",
                flat.len()
            )));
        }
        let mut offset = 0;
        self.visit_tensors_mut(&mut |_, _, t| {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        });
        Ok(())
    }

    fn zero_all(&mut self) {
        self.visit_tensors_mut(&mut |_, _, t| t.fill(0.0));
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_tensors(&mut |n, _, _| names.push(n.to_string()));
        names
    }
}

pub(crate) fn visit_linear(l: &Linear, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    l.visit(prefix, f)
}

pub(crate) fn visit_linear_mut(
    l: &mut Linear,
    prefix: &str,
    f: &mut dyn FnMut(&str, &[usize], &mut [f64]),
) {
    l.visit_mut(prefix, f)
}

impl Parameterized for Linear {
    fn visit_tensors(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.visit("linear", f)
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.visit_mut("linear", f)
    }
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Adaptive-moment optimizer with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, param_count: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates `params` in place with gradient `grads`.
    pub fn step<P: Parameterized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        let mut p = params.flatten();
        if g.len() != self.m.len() || p.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match parameter count"));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for k in 0..p.len() {
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g[k];
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g[k] * g[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            p[k] -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * p[k]);
        }
        params.assign_flat(&p)
    }
}
