//! Training losses: pairwise ranking over concatenated, shallow and deep
//! embedding slices, plus the sign-aware contrastive term.
//!
//! Ranking gradients are accumulated into per-layer matrices with respect to
//! the mixed embeddings `q^(l)`; the backward sweep in [`crate::gradient`]
//! then carries them through hashing and convolution.

use crate::error::{Error, Result};

/// One training example: a train edge and a sampled negative destination.
/// Destination indices are local (0-based within V).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub source: u32,
    pub pos: u32,
    pub neg: u32,
}

/// Pairwise ranking loss `mean(-log sigmoid(s_pos - s_neg))` in softplus
/// form, with gradients of the mean w.r.t. each score.
pub fn bpr_loss(scores_pos: &[f64], scores_neg: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(scores_pos.len(), scores_neg.len());
    let n = scores_pos.len() as f64;
    let mut loss = 0.0;
    let mut grad_pos = Vec::with_capacity(scores_pos.len());
    let mut grad_neg = Vec::with_capacity(scores_pos.len());
    for (&sp, &sn) in scores_pos.iter().zip(scores_neg) {
        let delta = sp - sn;
        loss += softplus(-delta);
        let sig = sigmoid(-delta);
        grad_pos.push(-sig / n);
        grad_neg.push(sig / n);
    }
    (loss / n, grad_pos, grad_neg)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The three ranking terms: full concatenation, layer-0 slice, and the
/// concatenated deep slice (layers 1..=L).
#[derive(Debug, Clone, Copy, Default)]
pub struct BprBreakdown {
    pub main: f64,
    pub layer0: f64,
    pub conv: f64,
}

/// Computes the three ranking terms over a batch and, when `grads` is given,
/// accumulates `d(main + beta0 * layer0 + beta1 * conv) / d q^(l)` into the
/// per-layer matrices. `q_layers[l]` holds the mixed embeddings of all nodes
/// at layer l, row-major; destinations sit at `num_sources + v`.
pub fn bpr_terms(
    q_layers: &[Vec<f64>],
    dim: usize,
    triples: &[Triple],
    num_sources: u32,
    beta0: f64,
    beta1: f64,
    mut grads: Option<&mut [Vec<f64>]>,
) -> BprBreakdown {
    let num_layers = q_layers.len();
    let n = triples.len() as f64;
    let mut out = BprBreakdown::default();
    if triples.is_empty() {
        return out;
    }
    let row = |l: usize, node: usize| &q_layers[l][node * dim..(node + 1) * dim];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for t in triples {
        let u = t.source as usize;
        let vp = num_sources as usize + t.pos as usize;
        let vn = num_sources as usize + t.neg as usize;

        let mut sp = vec![0.0; num_layers];
        let mut sn = vec![0.0; num_layers];
        for l in 0..num_layers {
            sp[l] = dot(row(l, u), row(l, vp));
            sn[l] = dot(row(l, u), row(l, vn));
        }
        let delta_main: f64 = sp.iter().sum::<f64>() - sn.iter().sum::<f64>();
        let delta_0 = sp[0] - sn[0];
        let delta_conv: f64 = sp[1..].iter().sum::<f64>() - sn[1..].iter().sum::<f64>();

        out.main += softplus(-delta_main) / n;
        out.layer0 += softplus(-delta_0) / n;
        if num_layers > 1 {
            out.conv += softplus(-delta_conv) / n;
        }

        if let Some(g) = grads.as_deref_mut() {
            let sig_main = sigmoid(-delta_main);
            let sig_0 = sigmoid(-delta_0);
            let sig_conv = sigmoid(-delta_conv);
            for (l, g_layer) in g.iter_mut().enumerate() {
                let extra = if l == 0 {
                    beta0 * sig_0
                } else if num_layers > 1 {
                    beta1 * sig_conv
                } else {
                    0.0
                };
                let coeff = (sig_main + extra) / n;
                let (gu, gp, gn) = grad_rows_mut(g_layer, dim, u, vp, vn);
                let qu = row(l, u);
                let qp = row(l, vp);
                let qn = row(l, vn);
                for i in 0..dim {
                    gu[i] += coeff * (qn[i] - qp[i]);
                    gp[i] -= coeff * qu[i];
                    gn[i] += coeff * qu[i];
                }
            }
        }
    }
    out
}

/// Disjoint mutable views of three rows of one layer matrix.
fn grad_rows_mut(
    g: &mut [f64],
    dim: usize,
    u: usize,
    vp: usize,
    vn: usize,
) -> (&mut [f64], &mut [f64], &mut [f64]) {
    debug_assert!(u != vp && u != vn && vp != vn);
    let ptr = g.as_mut_ptr();
    // rows are disjoint (checked above), so the aliasing is safe
    unsafe {
        (
            std::slice::from_raw_parts_mut(ptr.add(u * dim), dim),
            std::slice::from_raw_parts_mut(ptr.add(vp * dim), dim),
            std::slice::from_raw_parts_mut(ptr.add(vn * dim), dim),
        )
    }
}

const NORM_FLOOR: f64 = 1e-12;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// `d cos(a, b) / d a`, with `b`'s role symmetric.
fn cosine_grad_a(a: &[f64], b: &[f64], sim: f64) -> Vec<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| (bi / nb - sim * ai / na) / na)
        .collect()
}

/// Self-anchored contrastive loss over one batch of last-layer embeddings:
/// `mean_i -log( exp(1/tau) / sum_j exp(cos(q_i, q_j)/tau) )`.
pub fn contrastive_loss_last(rows: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let m = rows.len();
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut grads = vec![vec![0.0; dim]; m];
    if m == 0 {
        return Ok((0.0, grads));
    }

    let mut sims = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            sims[i * m + j] = cosine(&rows[i], &rows[j]);
        }
    }
    let mut loss = 0.0;
    for i in 0..m {
        let s_row = &sims[i * m..(i + 1) * m];
        let max = s_row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / tau;
        let z: f64 = s_row.iter().map(|&s| (s / tau - max).exp()).sum();
        loss += -1.0 / tau + max + z.ln();

        for j in 0..m {
            if j == i {
                // cos(q_i, q_i) is constant 1; no gradient flows through it
                continue;
            }
            let p = (s_row[j] / tau - max).exp() / z;
            let w = p / (tau * m as f64);
            let sim = s_row[j];
            let ga = cosine_grad_a(&rows[i], &rows[j], sim);
            let gb = cosine_grad_a(&rows[j], &rows[i], sim);
            for k in 0..dim {
                grads[i][k] += w * ga[k];
                grads[j][k] += w * gb[k];
            }
        }
    }
    Ok((loss / m as f64, grads))
}

/// Deep contrastive loss: anchors are last-layer embeddings, views are the
/// weighted deep sums `e*`. Returns the loss plus gradients w.r.t. anchors
/// and views separately (the caller fans the view gradient out over layers
/// through the weights).
#[allow(clippy::type_complexity)]
pub fn contrastive_loss_deep(
    anchors: &[Vec<f64>],
    views: &[Vec<f64>],
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if anchors.len() != views.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} anchors vs {} views",
            anchors.len(),
            views.len()
        )));
    }
    let m = anchors.len();
    let dim = anchors.first().map(|r| r.len()).unwrap_or(0);
    let mut anchor_grads = vec![vec![0.0; dim]; m];
    let mut view_grads = vec![vec![0.0; dim]; m];
    if m == 0 {
        return Ok((0.0, anchor_grads, view_grads));
    }

    let mut sims = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            sims[i * m + j] = cosine(&anchors[i], &views[j]);
        }
    }
    let mut loss = 0.0;
    for i in 0..m {
        let s_row = &sims[i * m..(i + 1) * m];
        let max = s_row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / tau;
        let z: f64 = s_row.iter().map(|&s| (s / tau - max).exp()).sum();
        loss += -s_row[i] / tau + max + z.ln();

        for j in 0..m {
            let p = (s_row[j] / tau - max).exp() / z;
            let w = (p - if i == j { 1.0 } else { 0.0 }) / (tau * m as f64);
            if w == 0.0 {
                continue;
            }
            let sim = s_row[j];
            let ga = cosine_grad_a(&anchors[i], &views[j], sim);
            let gv = cosine_grad_a(&views[j], &anchors[i], sim);
            for k in 0..dim {
                anchor_grads[i][k] += w * ga[k];
                view_grads[j][k] += w * gv[k];
            }
        }
    }
    Ok((loss / m as f64, anchor_grads, view_grads))
}

/// Raw loss term values before weighting.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub main: f64,
    pub contrastive: f64,
    pub layer0: f64,
    pub conv: f64,
    /// Unscaled sum of squared parameters over batch-touched rows.
    pub l2_raw: f64,
}

/// `main + gamma * cl + beta0 * layer0 + beta1 * conv + lambda * l2`.
pub fn total_loss(terms: &LossTerms, gamma: f64, beta0: f64, beta1: f64, lambda: f64) -> f64 {
    terms.main
        + gamma * terms.contrastive
        + beta0 * terms.layer0
        + beta1 * terms.conv
        + lambda * terms.l2_raw
}
