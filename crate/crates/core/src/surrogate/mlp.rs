//! Feed-forward baseline over a flattened cell encoding.
//!
//! The input is the un-augmented adjacency followed by one-hot operation
//! rows, so its width is fixed by the node count chosen at construction.
//! Graphs of a different size are rejected unless zero padding up to that
//! node count is enabled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, Surrogate};
use crate::error::{Error, Result};
use crate::graph::ArchGraph;
use crate::linalg::{dot, gemm, Layout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub node_count: usize,
    pub vocab_size: usize,
    pub hidden: Vec<usize>,
    /// Accept smaller graphs by zero-padding them to `node_count`.
    pub pad_smaller: bool,
}

impl MlpConfig {
    pub fn new(node_count: usize, vocab_size: usize) -> Self {
        Self { node_count, vocab_size, hidden: vec![64, 64], pad_smaller: false }
    }

    pub fn padded(mut self) -> Self {
        self.pad_smaller = true;
        self
    }

    pub fn input_width(&self) -> usize {
        self.node_count * self.node_count + self.node_count * self.vocab_size
    }

    fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width()).chain(self.hidden.iter().copied()).collect()
    }

    pub fn param_count(&self) -> usize {
        let w = self.widths();
        w.windows(2).map(|p| p[0] * p[1] + p[1]).sum::<usize>() + w.last().unwrap() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 || self.vocab_size == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("degenerate MLP shape {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    config: MlpConfig,
    seed: u64,
    weights: Vec<f64>,
}

impl MlpParams {
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; config.param_count()];
        let widths = config.widths();
        let mut at = 0;
        for p in widths.windows(2) {
            glorot(&mut rng, p[0], p[1], &mut weights[at..at + p[0] * p[1]]);
            at += p[0] * p[1] + p[1];
        }
        let last = *widths.last().unwrap();
        glorot(&mut rng, last, 1, &mut weights[at..at + last]);
        Ok(Self { config, seed, weights })
    }

    pub fn from_parts(config: MlpConfig, seed: u64, weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for an MLP needing {}",
                weights.len(),
                config.param_count()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite MLP weight".into()));
        }
        Ok(Self { config, seed, weights })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat input vector for `g`.
    pub fn flatten(&self, g: &ArchGraph) -> Result<Vec<f64>> {
        let n = g.node_count();
        let size = self.config.node_count;
        if n > size || (n < size && !self.config.pad_smaller) {
            return Err(Error::UnsupportedShape(format!("MLP takes {size}-node cells, got {n} nodes")));
        }
        let v = self.config.vocab_size;
        let mut x = vec![0.0; self.config.input_width()];
        for i in 0..n {
            for j in 0..n {
                if g.has_edge(i, j) {
                    x[i * size + j] = 1.0;
                }
            }
        }
        for (i, &op) in g.ops().iter().enumerate() {
            if op >= v {
                return Err(Error::LabelOutOfVocabulary { node: i, label: op, size: v });
            }
            x[size * size + i * v + op] = 1.0;
        }
        Ok(x)
    }

    /// `(weight offset, bias offset, in, out)` per hidden layer.
    fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let widths = self.config.widths();
        let mut at = 0;
        widths
            .windows(2)
            .map(|p| {
                let l = (at, at + p[0] * p[1], p[0], p[1]);
                at += p[0] * p[1] + p[1];
                l
            })
            .collect()
    }

    fn head_offset(&self) -> usize {
        self.weights.len() - self.embedding_dim() - 1
    }

    fn forward_all(&self, inputs: &[&Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let width = self.config.input_width();
        let b = inputs.len();
        let mut x = Vec::with_capacity(b * width);
        for inp in inputs {
            if inp.len() != width {
                return Err(Error::DimensionMismatch(format!("input of width {}, MLP expects {width}", inp.len())));
            }
            x.extend_from_slice(inp);
        }
        let mut acts = vec![x];
        for (w_at, b_at, fan_in, fan_out) in self.layers() {
            let mut z = vec![0.0; b * fan_out];
            for row in z.chunks_mut(fan_out) {
                row.copy_from_slice(&self.weights[b_at..b_at + fan_out]);
            }
            gemm(
                b,
                fan_in,
                fan_out,
                1.0,
                acts.last().unwrap(),
                Layout::Normal,
                &self.weights[w_at..w_at + fan_in * fan_out],
                Layout::Normal,
                1.0,
                &mut z,
            );
            for v in &mut z {
                *v = v.max(0.0);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    fn head(&self, embedding: &[f64]) -> f64 {
        let at = self.head_offset();
        let d = self.embedding_dim();
        dot(&self.weights[at..at + d], embedding) + self.weights[at + d]
    }
}

impl Surrogate for MlpParams {
    type Input = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn embedding_dim(&self) -> usize {
        *self.config.hidden.last().unwrap()
    }

    fn forward_batch(&self, inputs: &[&Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let acts = self.forward_all(inputs)?;
        let d = self.embedding_dim();
        let emb: Vec<Vec<f64>> = acts.last().unwrap().chunks(d).map(<[f64]>::to_vec).collect();
        let logits = emb.iter().map(|e| self.head(e)).collect();
        Ok((emb, logits))
    }

    fn logits_and_grad(
        &self,
        inputs: &[&Vec<f64>],
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if grad.len() != self.weights.len() {
            return Err(Error::DimensionMismatch("gradient buffer length".into()));
        }
        let acts = self.forward_all(inputs)?;
        let d = self.embedding_dim();
        let b = inputs.len();
        let last = acts.last().unwrap();
        let logits: Vec<f64> = last.chunks(d).map(|e| self.head(e)).collect();
        let ds = upstream(&logits);
        if ds.len() != b {
            return Err(Error::DimensionMismatch("upstream gradient length".into()));
        }
        let head = self.head_offset();
        let mut delta = vec![0.0; b * d];
        for (s, (emb, dl)) in ds.iter().zip(last.chunks(d).zip(delta.chunks_mut(d))) {
            for k in 0..d {
                grad[head + k] += s * emb[k];
                dl[k] = s * self.weights[head + k];
            }
            grad[head + d] += s;
        }
        let layers = self.layers();
        for (l, &(w_at, b_at, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            for (dv, a) in delta.iter_mut().zip(&acts[l + 1]) {
                if *a <= 0.0 {
                    *dv = 0.0;
                }
            }
            for row in delta.chunks(fan_out) {
                for (g, v) in grad[b_at..b_at + fan_out].iter_mut().zip(row) {
                    *g += v;
                }
            }
            gemm(
                fan_in,
                b,
                fan_out,
                1.0,
                &acts[l],
                Layout::Transposed,
                &delta,
                Layout::Normal,
                1.0,
                &mut grad[w_at..w_at + fan_in * fan_out],
            );
            if l > 0 {
                let mut prev = vec![0.0; b * fan_in];
                gemm(
                    b,
                    fan_out,
                    fan_in,
                    1.0,
                    &delta,
                    Layout::Normal,
                    &self.weights[w_at..w_at + fan_in * fan_out],
                    Layout::Transposed,
                    0.0,
                    &mut prev,
                );
                delta = prev;
            }
        }
        Ok(logits)
    }
}
