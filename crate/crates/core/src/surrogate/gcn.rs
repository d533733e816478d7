//! Graph convolutional regressor.
//!
//! Each layer computes `H' = ReLU(Â^T H W)` where `Â` is the normalized
//! augmented adjacency of [`EncodedGraph`]. Since `Â[i][j] != 0` encodes the
//! data-flow edge `i -> j`, propagating with the transpose lets every node
//! aggregate from its predecessors and lets the global node aggregate from
//! all cell nodes. The embedding is the global node's row of the last layer;
//! a dense sigmoid head turns it into a predicted accuracy.
//!
//! Graph layers have no bias. Only the head carries one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, Surrogate};
use crate::error::{Error, Result};
use crate::graph::EncodedGraph;
use crate::linalg::{dot, gemm, sigmoid, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// One-hot width `F` (operations plus the global slot).
    pub feature_width: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl GcnConfig {
    /// Four graph layers with 64 hidden units.
    pub fn new(feature_width: usize) -> Self {
        Self { feature_width, hidden: 64, layers: 4 }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_width == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument(format!("degenerate GCN shape {self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.feature_width * self.hidden + (self.layers - 1) * self.hidden * self.hidden + self.hidden + 1
    }

    fn layer_offset(&self, l: usize) -> usize {
        if l == 0 {
            0
        } else {
            self.feature_width * self.hidden + (l - 1) * self.hidden * self.hidden
        }
    }

    fn head_offset(&self) -> usize {
        self.layer_offset(self.layers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    config: GcnConfig,
    seed: u64,
    weights: Vec<f64>,
}

impl GcnParams {
    /// Glorot-uniform graph layers and head, zero head bias.
    pub fn new(config: GcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; config.param_count()];
        let h = config.hidden;
        for l in 0..config.layers {
            let fan_in = if l == 0 { config.feature_width } else { h };
            let start = config.layer_offset(l);
            glorot(&mut rng, fan_in, h, &mut weights[start..start + fan_in * h]);
        }
        let head = config.head_offset();
        glorot(&mut rng, h, 1, &mut weights[head..head + h]);
        Ok(Self { config, seed, weights })
    }

    pub fn from_parts(config: GcnConfig, seed: u64, weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a GCN needing {}",
                weights.len(),
                config.param_count()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite GCN weight".into()));
        }
        Ok(Self { config, seed, weights })
    }

    pub fn config(&self) -> &GcnConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden
    }

    pub fn layer_count(&self) -> usize {
        self.config.layers
    }

    /// `W^(l)`, row-major `in x hidden`.
    pub fn layer_weight(&self, l: usize) -> &[f64] {
        let fan_in = if l == 0 { self.config.feature_width } else { self.config.hidden };
        let start = self.config.layer_offset(l);
        &self.weights[start..start + fan_in * self.config.hidden]
    }

    pub fn head_weight(&self) -> &[f64] {
        let start = self.config.head_offset();
        &self.weights[start..start + self.config.hidden]
    }

    pub fn head_bias(&self) -> f64 {
        self.weights[self.config.head_offset() + self.config.hidden]
    }

    pub fn set_head(&mut self, weight: &[f64], bias: f64) {
        let start = self.config.head_offset();
        let h = self.config.hidden;
        self.weights[start..start + h].copy_from_slice(weight);
        self.weights[start + h] = bias;
    }

    fn check(&self, e: &EncodedGraph) -> Result<()> {
        if e.feature_width() != self.config.feature_width {
            return Err(Error::DimensionMismatch(format!(
                "graph features have width {}, GCN expects {}",
                e.feature_width(),
                self.config.feature_width
            )));
        }
        Ok(())
    }

    /// Global-node embedding, computed one graph at a time.
    pub fn embed(&self, e: &EncodedGraph) -> Result<Vec<f64>> {
        self.check(e)?;
        let n = e.size();
        let h = self.config.hidden;
        let mut act: Vec<f64> = Vec::new();
        for l in 0..self.config.layers {
            let w = self.layer_weight(l);
            let mut p = vec![0.0; n * h];
            for i in 0..n {
                let row = &mut p[i * h..(i + 1) * h];
                if l == 0 {
                    if let Some(c) = e.active_feature(i) {
                        row.copy_from_slice(&w[c * h..(c + 1) * h]);
                    }
                } else {
                    for k in 0..h {
                        let a = act[i * h + k];
                        if a != 0.0 {
                            for (r, wk) in row.iter_mut().zip(&w[k * h..(k + 1) * h]) {
                                *r += a * wk;
                            }
                        }
                    }
                }
            }
            let mut next = vec![0.0; n * h];
            for i in 0..n {
                for j in 0..n {
                    let a = e.adjacency_entry(j, i);
                    if a != 0.0 {
                        for k in 0..h {
                            next[i * h + k] += a * p[j * h + k];
                        }
                    }
                }
            }
            for v in &mut next {
                *v = v.max(0.0);
            }
            act = next;
        }
        let g = e.global_row();
        Ok(act[g * h..(g + 1) * h].to_vec())
    }

    /// Head applied to an embedding, before the sigmoid.
    pub fn head_logit(&self, embedding: &[f64]) -> f64 {
        dot(self.head_weight(), embedding) + self.head_bias()
    }

    pub fn logit(&self, e: &EncodedGraph) -> Result<f64> {
        Ok(self.head_logit(&self.embed(e)?))
    }

    /// Predicted accuracy in `(0, 1)`.
    pub fn predict(&self, e: &EncodedGraph) -> Result<f64> {
        Ok(sigmoid(self.logit(e)?))
    }

    /// Packed forward over a batch: rows of all graphs stacked into one
    /// matrix so the dense products run as single matrix multiplications.
    fn forward_packed(&self, inputs: &[&EncodedGraph]) -> Result<Packed> {
        let mut offsets = Vec::with_capacity(inputs.len() + 1);
        offsets.push(0);
        for e in inputs {
            self.check(e)?;
            offsets.push(offsets.last().unwrap() + e.size());
        }
        let rows = *offsets.last().unwrap();
        let h = self.config.hidden;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.config.layers);
        let mut p = vec![0.0; rows * h];
        for l in 0..self.config.layers {
            let w = self.layer_weight(l);
            if l == 0 {
                for (g, e) in inputs.iter().enumerate() {
                    for i in 0..e.size() {
                        let r = offsets[g] + i;
                        match e.active_feature(i) {
                            Some(c) => p[r * h..(r + 1) * h].copy_from_slice(&w[c * h..(c + 1) * h]),
                            None => p[r * h..(r + 1) * h].fill(0.0),
                        }
                    }
                }
            } else {
                gemm(rows, h, h, 1.0, acts.last().unwrap(), Layout::Normal, w, Layout::Normal, 0.0, &mut p);
            }
            let mut z = vec![0.0; rows * h];
            for (g, e) in inputs.iter().enumerate() {
                propagate_transposed(e, offsets[g], h, &p, &mut z);
            }
            for v in &mut z {
                *v = v.max(0.0);
            }
            acts.push(z);
        }
        let last = acts.last().unwrap();
        let embeddings: Vec<Vec<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(g, e)| {
                let r = offsets[g] + e.global_row();
                last[r * h..(r + 1) * h].to_vec()
            })
            .collect();
        Ok(Packed { offsets, rows, acts, embeddings })
    }
}

struct Packed {
    offsets: Vec<usize>,
    rows: usize,
    /// Post-ReLU activations `H^(1) .. H^(L)`.
    acts: Vec<Vec<f64>>,
    embeddings: Vec<Vec<f64>>,
}

/// `out[block] += Â^T src[block]` for one graph's row block.
fn propagate_transposed(e: &EncodedGraph, offset: usize, h: usize, src: &[f64], out: &mut [f64]) {
    let n = e.size();
    for j in 0..n {
        let srow = (offset + j) * h;
        for i in 0..n {
            let a = e.adjacency_entry(j, i);
            if a != 0.0 {
                let orow = (offset + i) * h;
                for k in 0..h {
                    out[orow + k] += a * src[srow + k];
                }
            }
        }
    }
}

/// `out[block] += Â src[block]`, the adjoint of [`propagate_transposed`].
fn propagate(e: &EncodedGraph, offset: usize, h: usize, src: &[f64], out: &mut [f64]) {
    let n = e.size();
    for i in 0..n {
        let orow = (offset + i) * h;
        for j in 0..n {
            let a = e.adjacency_entry(i, j);
            if a != 0.0 {
                let srow = (offset + j) * h;
                for k in 0..h {
                    out[orow + k] += a * src[srow + k];
                }
            }
        }
    }
}

impl Surrogate for GcnParams {
    type Input = EncodedGraph;

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn embedding_dim(&self) -> usize {
        self.config.hidden
    }

    fn forward_batch(&self, inputs: &[&EncodedGraph]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let packed = self.forward_packed(inputs)?;
        let logits = packed.embeddings.iter().map(|e| self.head_logit(e)).collect();
        Ok((packed.embeddings, logits))
    }

    fn logits_and_grad(
        &self,
        inputs: &[&EncodedGraph],
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if grad.len() != self.weights.len() {
            return Err(Error::DimensionMismatch("gradient buffer length".into()));
        }
        let packed = self.forward_packed(inputs)?;
        let logits: Vec<f64> = packed.embeddings.iter().map(|e| self.head_logit(e)).collect();
        let ds = upstream(&logits);
        if ds.len() != inputs.len() {
            return Err(Error::DimensionMismatch("upstream gradient length".into()));
        }
        let h = self.config.hidden;
        let rows = packed.rows;
        let head = self.config.head_offset();
        let w_out = self.head_weight().to_vec();

        let mut d_act = vec![0.0; rows * h];
        for (g, e) in inputs.iter().enumerate() {
            let s = ds[g];
            for (k, &phi) in packed.embeddings[g].iter().enumerate() {
                grad[head + k] += s * phi;
            }
            grad[head + h] += s;
            let r = packed.offsets[g] + e.global_row();
            for k in 0..h {
                d_act[r * h + k] = s * w_out[k];
            }
        }

        let mut dp = vec![0.0; rows * h];
        for l in (0..self.config.layers).rev() {
            // ReLU mask: the activation is positive exactly where its input was.
            for (d, a) in d_act.iter_mut().zip(&packed.acts[l]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            dp.fill(0.0);
            for (g, e) in inputs.iter().enumerate() {
                propagate(e, packed.offsets[g], h, &d_act, &mut dp);
            }
            let start = self.config.layer_offset(l);
            if l == 0 {
                for (g, e) in inputs.iter().enumerate() {
                    for i in 0..e.size() {
                        if let Some(c) = e.active_feature(i) {
                            let r = packed.offsets[g] + i;
                            let dst = &mut grad[start + c * h..start + (c + 1) * h];
                            for (d, v) in dst.iter_mut().zip(&dp[r * h..(r + 1) * h]) {
                                *d += v;
                            }
                        }
                    }
                }
            } else {
                let prev = &packed.acts[l - 1];
                gemm(
                    h,
                    rows,
                    h,
                    1.0,
                    prev,
                    Layout::Transposed,
                    &dp,
                    Layout::Normal,
                    1.0,
                    &mut grad[start..start + h * h],
                );
                gemm(rows, h, h, 1.0, &dp, Layout::Normal, self.layer_weight(l), Layout::Transposed, 0.0, &mut d_act);
            }
        }
        Ok(logits)
    }
}
