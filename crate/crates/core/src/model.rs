//! Forward pass: layer-wise adaptive hashing interleaved with graph
//! convolution over mixed-precision embeddings.
//!
//! Each layer maps the hidden state `x` of every node to a rescaling factor
//! `alpha = ||x||_1 / d` and a code `b = sign(x)`, then propagates the mixed
//! embedding `q = alpha * b` through the normalized adjacency to produce the
//! next hidden state. The final embedding concatenates the `L + 1`
//! per-layer mixed segments.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradient::fourier_sign_surrogate;
use crate::graph::NormalizedAdjacency;
use crate::rng;

/// Model shape and gradient-estimator parameters.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Dimensionality of each layer segment. Must be positive and divisible
    /// by 8 so codes pack into whole bytes.
    pub dim: usize,
    /// Number of graph convolution layers L. The final embedding has L + 1
    /// segments.
    pub layers: usize,
    /// Deep-layer combination weights `w_l` for l = 1..=L.
    pub layer_weights: Vec<f64>,
    /// Period parameter H of the sign-gradient estimator.
    pub fourier_h: f64,
    /// Odd-term cutoff n of the sign-gradient estimator.
    pub fourier_terms: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Uniform layer weights 1/L, estimator defaults H = 3, n = 11.
    pub fn new(dim: usize, layers: usize, seed: u64) -> Self {
        let w = if layers > 0 { 1.0 / layers as f64 } else { 1.0 };
        Self {
            dim,
            layers,
            layer_weights: vec![w; layers],
            fourier_h: 3.0,
            fourier_terms: 11,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "dim must be positive and divisible by 8, got {}",
                self.dim
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.layer_weights.len() != self.layers {
            return Err(Error::Config(format!(
                "expected {} layer weights, got {}",
                self.layers,
                self.layer_weights.len()
            )));
        }
        if self.layer_weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::Config("layer weights must be positive".into()));
        }
        if self.fourier_h.is_nan() || self.fourier_h <= 0.0 || self.fourier_terms == 0 {
            return Err(Error::Config("estimator needs H > 0 and n >= 1".into()));
        }
        Ok(())
    }

    /// Segments in the final embedding.
    pub fn num_segments(&self) -> usize {
        self.layers + 1
    }
}

/// How hidden states are binarized during the pipeline.
///
/// `Hard` is the production path. `Surrogate` replaces the sign function
/// with its truncated Fourier series, making the whole pipeline smooth so
/// gradients can be checked against finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    Hard,
    Surrogate,
}

/// The learnable layer-0 embeddings, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    num_nodes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_values(num_nodes: usize, dim: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_nodes * dim);
        Self {
            num_nodes,
            dim,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }
}

/// Xavier-uniform initialization: values in `[-sqrt(6/(2d)), +sqrt(6/(2d))]`,
/// deterministic per seed.
pub fn init_embeddings(cfg: &ModelConfig, num_nodes: usize) -> EmbeddingTable {
    let bound = (6.0 / (2.0 * cfg.dim as f64)).sqrt();
    let mut rng = rng::stream(cfg.seed, "init");
    let values = (0..num_nodes * cfg.dim)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    EmbeddingTable::from_values(num_nodes, cfg.dim, values)
}

/// Maps one hidden vector to its mixed-precision form:
/// `alpha = ||x||_1 / d`, `b[i] = sign(x[i])` with `sign(0) = +1`.
pub fn adaptive_hash(x: &[f64]) -> (f64, Vec<i8>) {
    let d = x.len();
    let alpha = x.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
    let codes = x.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
    (alpha, codes)
}

/// One propagation step: `x^(l+1) = adj * Q_l` where `Q_l` is the row-major
/// matrix of mixed embeddings at layer l.
pub fn graph_convolve(adj: &NormalizedAdjacency, mixed: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; mixed.len()];
    adj.multiply(mixed, dim, &mut out);
    out
}

/// Training-time state of one forward pass: hidden states, codes and
/// rescaling factors for every layer 0..=L.
///
/// In `Hard` mode code entries are exactly +1/-1; in `Surrogate` mode they
/// hold the smooth series values instead.
#[derive(Debug, Clone)]
pub struct LayerEmbeddings {
    num_nodes: usize,
    dim: usize,
    layers: usize,
    mode: SignMode,
    hidden: Vec<Vec<f64>>,
    codes: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
}

impl LayerEmbeddings {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Convolution depth L; there are L + 1 stored layers.
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn mode(&self) -> SignMode {
        self.mode
    }

    pub fn hidden_layer(&self, l: usize) -> &[f64] {
        &self.hidden[l]
    }

    pub fn codes_layer(&self, l: usize) -> &[f64] {
        &self.codes[l]
    }

    pub fn alphas_layer(&self, l: usize) -> &[f64] {
        &self.alphas[l]
    }

    pub fn alpha(&self, l: usize, node: usize) -> f64 {
        self.alphas[l][node]
    }

    pub fn code_row(&self, l: usize, node: usize) -> &[f64] {
        &self.codes[l][node * self.dim..(node + 1) * self.dim]
    }

    pub fn hidden_row(&self, l: usize, node: usize) -> &[f64] {
        &self.hidden[l][node * self.dim..(node + 1) * self.dim]
    }

    /// Mixed embedding `q^(l)` of one node, materialized.
    pub fn mixed_row(&self, l: usize, node: usize) -> Vec<f64> {
        let a = self.alphas[l][node];
        self.code_row(l, node).iter().map(|&b| a * b).collect()
    }

    /// Weighted deep-layer sum `sum_{l=1..=L} w_l * q^(l)` for one node.
    pub fn deep_sum_row(&self, weights: &[f64], node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (l, &w) in weights.iter().enumerate() {
            let layer = l + 1;
            let a = self.alphas[layer][node];
            for (o, &b) in out.iter_mut().zip(self.code_row(layer, node)) {
                *o += w * a * b;
            }
        }
        out
    }
}

/// Concatenated per-layer mixed embedding of every node, kept in factored
/// (alpha, code) form so binarization scenarios can rewrite the factors.
#[derive(Debug, Clone)]
pub struct FinalEmbedding {
    num_sources: u32,
    num_nodes: usize,
    dim: usize,
    layers: usize,
    /// `node * (L + 1) + l`
    alphas: Vec<f64>,
    /// `(node * (L + 1) + l) * dim + i`
    codes: Vec<f64>,
}

impl FinalEmbedding {
    pub fn num_sources(&self) -> u32 {
        self.num_sources
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn num_segments(&self) -> usize {
        self.layers + 1
    }

    pub fn alpha(&self, node: usize, l: usize) -> f64 {
        self.alphas[node * (self.layers + 1) + l]
    }

    pub fn code_segment(&self, node: usize, l: usize) -> &[f64] {
        let seg = node * (self.layers + 1) + l;
        &self.codes[seg * self.dim..(seg + 1) * self.dim]
    }

    /// Mixed segment `q^(l)` of one node.
    pub fn segment(&self, node: usize, l: usize) -> Vec<f64> {
        let a = self.alpha(node, l);
        self.code_segment(node, l).iter().map(|&b| a * b).collect()
    }

    /// Full concatenated embedding of one node, dimension `(L + 1) * d`.
    pub fn row_concat(&self, node: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.layers + 1) * self.dim);
        for l in 0..=self.layers {
            let a = self.alpha(node, l);
            out.extend(self.code_segment(node, l).iter().map(|&b| a * b));
        }
        out
    }
}

fn hash_layer(
    x: &[f64],
    dim: usize,
    mode: SignMode,
    fourier_h: f64,
    fourier_terms: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() / dim;
    let mut alphas = vec![0.0; n];
    let mut codes = vec![0.0; n * dim];
    for node in 0..n {
        let row = &x[node * dim..(node + 1) * dim];
        alphas[node] = row.iter().map(|v| v.abs()).sum::<f64>() / dim as f64;
        let out = &mut codes[node * dim..(node + 1) * dim];
        match mode {
            SignMode::Hard => {
                for (c, &v) in out.iter_mut().zip(row) {
                    *c = if v >= 0.0 { 1.0 } else { -1.0 };
                }
            }
            SignMode::Surrogate => {
                for (c, &v) in out.iter_mut().zip(row) {
                    *c = fourier_sign_surrogate(v, fourier_h, fourier_terms);
                }
            }
        }
    }
    (alphas, codes)
}

fn forward_with_mode(
    table: &EmbeddingTable,
    adj: &NormalizedAdjacency,
    cfg: &ModelConfig,
    mode: SignMode,
) -> Result<(LayerEmbeddings, FinalEmbedding)> {
    if table.num_nodes() != adj.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "table has {} nodes, adjacency {}",
            table.num_nodes(),
            adj.num_nodes()
        )));
    }
    if table.dim() != cfg.dim {
        return Err(Error::ShapeMismatch(format!(
            "table dim {} vs config dim {}",
            table.dim(),
            cfg.dim
        )));
    }
    let d = cfg.dim;
    let n = table.num_nodes();
    let mut hidden = Vec::with_capacity(cfg.layers + 1);
    let mut codes = Vec::with_capacity(cfg.layers + 1);
    let mut alphas = Vec::with_capacity(cfg.layers + 1);
    hidden.push(table.values().to_vec());

    for l in 0..=cfg.layers {
        let x = &hidden[l];
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("hidden state at layer {l}")));
        }
        let (a, c) = hash_layer(x, d, mode, cfg.fourier_h, cfg.fourier_terms);
        if l < cfg.layers {
            let mut mixed = vec![0.0; n * d];
            for node in 0..n {
                let alpha = a[node];
                let src = &c[node * d..(node + 1) * d];
                let dst = &mut mixed[node * d..(node + 1) * d];
                for (m, &b) in dst.iter_mut().zip(src) {
                    *m = alpha * b;
                }
            }
            hidden.push(graph_convolve(adj, &mixed, d));
        }
        alphas.push(a);
        codes.push(c);
    }

    let mut final_alphas = vec![0.0; n * (cfg.layers + 1)];
    let mut final_codes = vec![0.0; n * (cfg.layers + 1) * d];
    for node in 0..n {
        for l in 0..=cfg.layers {
            let seg = node * (cfg.layers + 1) + l;
            final_alphas[seg] = alphas[l][node];
            final_codes[seg * d..(seg + 1) * d].copy_from_slice(&codes[l][node * d..(node + 1) * d]);
        }
    }

    // The combined node space puts destinations after sources; the caller
    // knows the split point. It is carried on the final embedding because
    // binarization scenarios and packing need it.
    Ok((
        LayerEmbeddings {
            num_nodes: n,
            dim: d,
            layers: cfg.layers,
            mode,
            hidden,
            codes,
            alphas,
        },
        FinalEmbedding {
            num_sources: 0,
            num_nodes: n,
            dim: d,
            layers: cfg.layers,
            alphas: final_alphas,
            codes: final_codes,
        },
    ))
}

/// Production forward pass with hard sign binarization.
pub fn forward(
    table: &EmbeddingTable,
    adj: &NormalizedAdjacency,
    cfg: &ModelConfig,
    num_sources: u32,
) -> Result<(LayerEmbeddings, FinalEmbedding)> {
    let (state, mut fin) = forward_with_mode(table, adj, cfg, SignMode::Hard)?;
    fin.num_sources = num_sources;
    Ok((state, fin))
}

/// Smooth reference pipeline: identical to [`forward`] with the sign
/// function replaced by its truncated Fourier series. Exists so the backward
/// pass can be validated against finite differences.
pub fn surrogate_forward(
    table: &EmbeddingTable,
    adj: &NormalizedAdjacency,
    cfg: &ModelConfig,
    num_sources: u32,
) -> Result<(LayerEmbeddings, FinalEmbedding)> {
    let (state, mut fin) = forward_with_mode(table, adj, cfg, SignMode::Surrogate)?;
    fin.num_sources = num_sources;
    Ok((state, fin))
}

/// Which node set a binarization scenario strips the rescaling factor from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinarizeScenario {
    /// Identity.
    None,
    /// Sources only.
    Sources,
    /// Destinations only.
    Destinations,
    /// Every node.
    Both,
}

/// Replaces the rescaling factor with 1 (pure binary) for the scenario's
/// node set on the given layer subset; everything else is untouched.
pub fn binarize_scenario(
    fin: &FinalEmbedding,
    scenario: BinarizeScenario,
    layer_subset: &[usize],
) -> Result<FinalEmbedding> {
    if layer_subset.is_empty() {
        return Err(Error::Invalid("binarization needs a non-empty layer subset".into()));
    }
    if let Some(&bad) = layer_subset.iter().find(|&&l| l > fin.layers) {
        return Err(Error::Invalid(format!(
            "layer {bad} out of range for {} layers",
            fin.layers
        )));
    }
    let mut out = fin.clone();
    if scenario == BinarizeScenario::None {
        return Ok(out);
    }
    let node_range = match scenario {
        BinarizeScenario::Sources => 0..fin.num_sources as usize,
        BinarizeScenario::Destinations => fin.num_sources as usize..fin.num_nodes,
        BinarizeScenario::Both => 0..fin.num_nodes,
        BinarizeScenario::None => unreachable!(),
    };
    for node in node_range {
        for &l in layer_subset {
            out.alphas[node * (fin.layers + 1) + l] = 1.0;
        }
    }
    Ok(out)
}
