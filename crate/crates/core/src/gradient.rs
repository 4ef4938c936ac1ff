//! Backward pass through adaptive hashing and graph convolution.
//!
//! The forward pipeline is non-differentiable at the sign function, so the
//! backward pass substitutes a truncated Fourier cosine series for
//! `d sign(phi) / d phi`. The matching sine series (whose exact derivative is
//! that cosine series) gives a smooth stand-in pipeline; running the same
//! backward code over it yields the exact gradient of the stand-in, which is
//! how the chain-rule machinery here is validated against finite differences.
//!
//! For one hash layer `q = alpha * c` with `alpha = ||x||_1 / d` the Jacobian
//! is diagonal plus rank one:
//!
//! ```text
//! dq_i/dx_j = alpha * g(x_i) * delta_ij + c_i * sign(x_j) / d
//! ```
//!
//! where `g` is the cosine-series estimate and `c` the stored code (hard sign
//! in production, smooth series value in the surrogate). The rescaling factor
//! deliberately receives the full gradient through `d|x|/dx = sign(x)`;
//! without it the factor could never learn.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::model::{LayerEmbeddings, ModelConfig};

/// Truncated cosine-series estimate of `d sign(phi) / d phi`:
/// `(4/H) * sum over odd i <= n of cos(pi * i * phi / H)`.
pub fn fourier_sign_grad(phi: f64, h: f64, terms: usize) -> f64 {
    let mut acc = 0.0;
    let mut i = 1usize;
    while i <= terms {
        acc += (std::f64::consts::PI * i as f64 * phi / h).cos();
        i += 2;
    }
    4.0 * acc / h
}

/// Truncated sine-series stand-in for `sign(phi)`:
/// `(4/pi) * sum over odd i <= n of sin(pi * i * phi / H) / i`.
/// Its derivative is exactly [`fourier_sign_grad`].
pub fn fourier_sign_surrogate(phi: f64, h: f64, terms: usize) -> f64 {
    let mut acc = 0.0;
    let mut i = 1usize;
    while i <= terms {
        acc += (std::f64::consts::PI * i as f64 * phi / h).sin() / i as f64;
        i += 2;
    }
    4.0 * acc / std::f64::consts::PI
}

fn hash_backward_row(
    x: &[f64],
    codes: &[f64],
    g_q: &[f64],
    h: f64,
    terms: usize,
    out: &mut [f64],
) {
    let d = x.len();
    let alpha = x.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
    let code_dot: f64 = codes.iter().zip(g_q).map(|(c, g)| c * g).sum();
    for j in 0..d {
        let sign_j = if x[j] >= 0.0 { 1.0 } else { -1.0 };
        out[j] = alpha * fourier_sign_grad(x[j], h, terms) * g_q[j] + code_dot * sign_j / d as f64;
    }
}

/// Backward of one adaptive-hash application (production hard-sign codes):
/// returns `J^T * g_q` for the diagonal-plus-rank-one Jacobian above.
pub fn adaptive_hash_backward(x: &[f64], g_q: &[f64], h: f64, terms: usize) -> Vec<f64> {
    assert_eq!(x.len(), g_q.len(), "gradient length");
    let codes: Vec<f64> = x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
    let mut out = vec![0.0; x.len()];
    hash_backward_row(x, &codes, g_q, h, terms, &mut out);
    out
}

/// Routes a gradient back through the propagation step. The adjacency is
/// symmetric, so `A^T g = A g`.
pub fn convolve_backward(adj: &NormalizedAdjacency, g_next: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; g_next.len()];
    adj.multiply(g_next, dim, &mut out);
    out
}

/// Per-layer gradients of the loss with respect to the hidden states, plus
/// the final table gradient (layer 0; the table is the layer-0 hidden state).
#[derive(Debug)]
pub struct GradientBuffer {
    dim: usize,
    hidden_grads: Vec<Vec<f64>>,
}

impl GradientBuffer {
    pub fn hidden_grad(&self, l: usize) -> &[f64] {
        &self.hidden_grads[l]
    }

    /// Gradient with respect to the embedding table.
    pub fn table_grad(&self) -> &[f64] {
        &self.hidden_grads[0]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Reverse sweep over the forward state. `loss_grads[l]` is the loss
/// gradient with respect to the mixed embeddings `q^(l)`, row-major over all
/// nodes; the sweep folds in the convolution carry layer by layer down to
/// the table.
pub fn model_backward(
    state: &LayerEmbeddings,
    adj: &NormalizedAdjacency,
    cfg: &ModelConfig,
    loss_grads: &[Vec<f64>],
) -> Result<GradientBuffer> {
    let n = state.num_nodes();
    let d = state.dim();
    let layers = state.layers();
    if loss_grads.len() != layers + 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected {} per-layer gradients, got {}",
            layers + 1,
            loss_grads.len()
        )));
    }
    for (l, g) in loss_grads.iter().enumerate() {
        if g.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "layer {l} gradient has {} entries, expected {}",
                g.len(),
                n * d
            )));
        }
    }

    let hash_backward_layer = |l: usize, g_q: &[f64]| -> Vec<f64> {
        let x = state.hidden_layer(l);
        let codes = state.codes_layer(l);
        let mut out = vec![0.0; n * d];
        out.par_chunks_mut(d).enumerate().for_each(|(node, row)| {
            let lo = node * d;
            let hi = lo + d;
            hash_backward_row(
                &x[lo..hi],
                &codes[lo..hi],
                &g_q[lo..hi],
                cfg.fourier_h,
                cfg.fourier_terms,
                row,
            );
        });
        out
    };

    let mut hidden_grads = vec![Vec::new(); layers + 1];
    hidden_grads[layers] = hash_backward_layer(layers, &loss_grads[layers]);
    for l in (0..layers).rev() {
        let carry = convolve_backward(adj, &hidden_grads[l + 1], d);
        let total: Vec<f64> = loss_grads[l]
            .iter()
            .zip(&carry)
            .map(|(a, b)| a + b)
            .collect();
        hidden_grads[l] = hash_backward_layer(l, &total);
    }
    Ok(GradientBuffer {
        dim: d,
        hidden_grads,
    })
}
