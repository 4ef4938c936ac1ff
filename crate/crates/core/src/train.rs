//! Epoch loop: negative sampling, forward, loss assembly, backward sweep and
//! Adam updates, with periodic held-out evaluation and plateau-based early
//! stopping.
//!
//! Two modes share the loop. `lightgch` trains with uniform negatives and
//! the main ranking loss only; `sgbgh` adds sign-guided negative sampling
//! (hash centers refreshed once per epoch), the deep contrastive term and
//! the auxiliary ranking slices. With all auxiliary weights at zero and the
//! uniform sampler, `sgbgh` reproduces `lightgch` exactly, batch for batch.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::codebook::PackedCodebook;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::{build_normalized_adjacency, DatasetSplit};
use crate::loss::{bpr_terms, contrastive_loss_deep, total_loss, LossTerms, Triple};
use crate::model::{forward, init_embeddings, EmbeddingTable, ModelConfig};
use crate::gradient;
use crate::rng;
use crate::sampler::{refresh_centers, sample_negative, sample_negative_uniform, HashCenterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    LightGch,
    Sgbgh,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::LightGch => "lightgch",
            TrainMode::Sgbgh => "sgbgh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lightgch" => Ok(TrainMode::LightGch),
            "sgbgh" => Ok(TrainMode::Sgbgh),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected lightgch or sgbgh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeSampler {
    Uniform,
    SignGuided,
}

/// Training hyperparameters. Loss weights follow the mode: `lightgch`
/// forces the auxiliary weights to zero.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Explicit sampler override; defaults to uniform for `lightgch` and
    /// sign-guided for `sgbgh`.
    pub sampler: Option<NegativeSampler>,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Hard cap on epochs; early stopping may end training sooner.
    pub epochs: usize,
    /// Contrastive temperature.
    pub tau: f64,
    /// Contrastive weight.
    pub gamma: f64,
    /// Layer-0 ranking weight.
    pub beta0: f64,
    /// Deep-slice ranking weight.
    pub beta1: f64,
    /// L2 regularization coefficient.
    pub lambda: f64,
    pub num_centers: usize,
    pub kmeans_iters: usize,
    /// Evaluate every this many epochs (0 disables evaluation).
    pub eval_every: usize,
    /// Consecutive evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, seed: u64) -> Self {
        Self {
            mode,
            sampler: None,
            batch_size: 4096,
            learning_rate: 0.001,
            epochs: 400,
            tau: 0.2,
            gamma: 0.5,
            beta0: 1.0,
            beta1: 1.0,
            lambda: 0.001,
            num_centers: 64,
            kmeans_iters: 20,
            eval_every: 1,
            patience: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.gamma < 0.0 || self.beta0 < 0.0 || self.beta1 < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch cap must be >= 1".into()));
        }
        if self.num_centers == 0 {
            return Err(Error::Config("center count must be >= 1".into()));
        }
        Ok(())
    }

    /// (gamma, beta0, beta1) with the mode reduction applied.
    pub fn effective_weights(&self) -> (f64, f64, f64) {
        match self.mode {
            TrainMode::LightGch => (0.0, 0.0, 0.0),
            TrainMode::Sgbgh => (self.gamma, self.beta0, self.beta1),
        }
    }

    pub fn effective_sampler(&self) -> NegativeSampler {
        self.sampler.unwrap_or(match self.mode {
            TrainMode::LightGch => NegativeSampler::Uniform,
            TrainMode::Sgbgh => NegativeSampler::SignGuided,
        })
    }
}

/// Adam moments for the embedding table.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update over the whole table.
pub fn adam_step(
    table: &mut EmbeddingTable,
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != table.values().len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient len {} vs table len {}",
            grads.len(),
            table.values().len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let values = table.values_mut();
    for i in 0..grads.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// A batch of (source, positive, negative) training triples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub triples: Vec<Triple>,
}

impl Batch {
    /// Checks the construction invariants against the split.
    pub fn validate(&self, split: &DatasetSplit) -> Result<()> {
        for t in &self.triples {
            if !split.is_train_edge(t.source, t.pos) {
                return Err(Error::Invalid(format!(
                    "({}, {}) is not a train edge",
                    t.source, t.pos
                )));
            }
            if split.is_train_edge(t.source, t.neg) {
                return Err(Error::Invalid(format!(
                    "negative {} is a train neighbor of {}",
                    t.neg, t.source
                )));
            }
        }
        Ok(())
    }
}

/// One epoch's log line.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub main: f64,
    pub contrastive: f64,
    pub layer0: f64,
    pub conv: f64,
    pub steps: usize,
    pub wall_ms: u64,
    pub recall20: Option<f64>,
    pub ndcg20: Option<f64>,
}

/// CSV view of the training log.
pub fn train_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,total,main,cl,bpr0,conv,steps,wall_ms,recall20,ndcg20\n");
    for e in log {
        let r = e.recall20.map(|v| format!("{v:.6}")).unwrap_or_default();
        let n = e.ndcg20.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            e.epoch, e.total, e.main, e.contrastive, e.layer0, e.conv, e.steps, e.wall_ms, r, n
        );
    }
    out
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub log: Vec<EpochLog>,
    pub best_recall20: Option<f64>,
    pub stopped_early: bool,
}

/// Runs the full training loop over the train split. Returns the table of
/// the best evaluated epoch when evaluation ran, otherwise the final table.
pub fn train(split: &DatasetSplit, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    let adj = build_normalized_adjacency(split);
    let n = split.num_nodes();
    let nu = split.num_sources();
    let d = model_cfg.dim;
    let (gamma, beta0, beta1) = cfg.effective_weights();
    let sampler_kind = cfg.effective_sampler();

    let mut table = init_embeddings(model_cfg, n);
    let mut adam = AdamState::new(n * d);
    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle");
    let mut neg_rng = rng::stream(cfg.seed, "negsample");

    let mut log = Vec::new();
    let mut best_recall: Option<f64> = None;
    let mut best_table: Option<EmbeddingTable> = None;
    let mut stale_evals = 0usize;
    let mut stopped_early = false;
    // forward state computed for evaluation is reused for the next epoch's
    // center refresh
    let mut cached_state: Option<crate::model::LayerEmbeddings> = None;

    let has_test = (0..nu).any(|u| !split.test_neighbors(u).is_empty());

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let centers: Option<HashCenterSet> = if sampler_kind == NegativeSampler::SignGuided {
            let state = match cached_state.take() {
                Some(s) => s,
                None => forward(&table, &adj, model_cfg, nu)?.0,
            };
            Some(refresh_centers(
                &state,
                nu,
                cfg.num_centers.min(split.num_destinations() as usize),
                cfg.kmeans_iters,
                cfg.seed,
                epoch,
            )?)
        } else {
            cached_state = None;
            None
        };

        let mut order: Vec<usize> = (0..split.train_edges().len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut sums = LossTerms::default();
        let mut total_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = build_batch(split, chunk, &table, centers.as_ref(), &mut neg_rng)?;
            let step_terms = run_step(
                split,
                &adj,
                model_cfg,
                cfg,
                (gamma, beta0, beta1),
                &batch,
                &mut table,
                &mut adam,
            )
            .map_err(|e| match e {
                Error::NonFinite(context) => Error::Diverged {
                    context,
                    epoch,
                    batch: steps,
                },
                other => other,
            })?;
            let batch_total = total_loss(&step_terms, gamma, beta0, beta1, cfg.lambda);
            if !batch_total.is_finite() {
                return Err(Error::Diverged {
                    context: "loss".into(),
                    epoch,
                    batch: steps,
                });
            }
            sums.main += step_terms.main;
            sums.contrastive += step_terms.contrastive;
            sums.layer0 += step_terms.layer0;
            sums.conv += step_terms.conv;
            sums.l2_raw += step_terms.l2_raw;
            total_sum += batch_total;
            steps += 1;
        }
        let inv = 1.0 / steps.max(1) as f64;

        let mut entry = EpochLog {
            epoch,
            total: total_sum * inv,
            main: sums.main * inv,
            contrastive: sums.contrastive * inv,
            layer0: sums.layer0 * inv,
            conv: sums.conv * inv,
            steps,
            wall_ms: 0,
            recall20: None,
            ndcg20: None,
        };

        let eval_now = cfg.eval_every > 0 && has_test && (epoch + 1) % cfg.eval_every == 0;
        if eval_now {
            let (state, fin) = forward(&table, &adj, model_cfg, nu)?;
            let cb = PackedCodebook::from_final(&fin);
            let report = evaluate(&cb, split, &[20], true)?;
            let recall = report.recall_at(20).unwrap_or(0.0);
            entry.recall20 = Some(recall);
            entry.ndcg20 = report.ndcg_at(20);
            cached_state = Some(state);

            if best_recall.is_none_or(|b| recall > b) {
                best_recall = Some(recall);
                best_table = Some(table.clone());
                stale_evals = 0;
            } else {
                stale_evals += 1;
            }
        }
        entry.wall_ms = t0.elapsed().as_millis() as u64;
        log.push(entry);

        if eval_now && stale_evals > cfg.patience {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        table: best_table.unwrap_or(table),
        log,
        best_recall20: best_recall,
        stopped_early,
    })
}

fn build_batch(
    split: &DatasetSplit,
    edge_indices: &[usize],
    table: &EmbeddingTable,
    centers: Option<&HashCenterSet>,
    neg_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Batch> {
    let mut triples = Vec::with_capacity(edge_indices.len());
    for &idx in edge_indices {
        let (u, v_pos) = split.train_edges()[idx];
        let neighbors = split.train_neighbors(u);
        let v_neg = match centers {
            Some(set) => {
                // the layer-0 mixed embedding of u comes straight off the table
                let (alpha, signs) = crate::model::adaptive_hash(table.row(u as usize));
                let q_u0: Vec<f64> = signs.iter().map(|&b| alpha * b as f64).collect();
                sample_negative(&q_u0, set, neighbors, neg_rng)
                    .map_err(|_| Error::NoNegativeCandidate(u))?
            }
            None => sample_negative_uniform(split.num_destinations(), neighbors, neg_rng)
                .map_err(|_| Error::NoNegativeCandidate(u))?,
        };
        triples.push(Triple {
            source: u,
            pos: v_pos,
            neg: v_neg,
        });
    }
    Ok(Batch { triples })
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    split: &DatasetSplit,
    adj: &crate::graph::NormalizedAdjacency,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    weights: (f64, f64, f64),
    batch: &Batch,
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
) -> Result<LossTerms> {
    let (gamma, beta0, beta1) = weights;
    let n = split.num_nodes();
    let nu = split.num_sources();
    let d = model_cfg.dim;
    let num_layers = model_cfg.layers + 1;

    let (state, _) = forward(table, adj, model_cfg, nu)?;

    // mixed embeddings per layer, materialized once per step
    let q_layers: Vec<Vec<f64>> = (0..num_layers)
        .map(|l| {
            let alphas = state.alphas_layer(l);
            let codes = state.codes_layer(l);
            let mut q = vec![0.0; n * d];
            for node in 0..n {
                let a = alphas[node];
                for i in 0..d {
                    q[node * d + i] = a * codes[node * d + i];
                }
            }
            q
        })
        .collect();

    let mut grads = vec![vec![0.0; n * d]; num_layers];
    let mut terms = LossTerms::default();

    let bpr = bpr_terms(
        &q_layers,
        d,
        &batch.triples,
        nu,
        beta0,
        beta1,
        Some(&mut grads),
    );
    terms.main = bpr.main;
    terms.layer0 = bpr.layer0;
    terms.conv = bpr.conv;

    if gamma > 0.0 {
        let mut batch_sources: Vec<u32> = batch.triples.iter().map(|t| t.source).collect();
        batch_sources.sort_unstable();
        batch_sources.dedup();
        let anchors: Vec<Vec<f64>> = batch_sources
            .iter()
            .map(|&u| state.mixed_row(model_cfg.layers, u as usize))
            .collect();
        let views: Vec<Vec<f64>> = batch_sources
            .iter()
            .map(|&u| state.deep_sum_row(&model_cfg.layer_weights, u as usize))
            .collect();
        let (cl, anchor_grads, view_grads) = contrastive_loss_deep(&anchors, &views, cfg.tau)?;
        terms.contrastive = cl;
        for (bi, &u) in batch_sources.iter().enumerate() {
            let row = u as usize * d;
            for i in 0..d {
                grads[model_cfg.layers][row + i] += gamma * anchor_grads[bi][i];
            }
            for (wl, weight) in model_cfg.layer_weights.iter().enumerate() {
                let l = wl + 1;
                for i in 0..d {
                    grads[l][row + i] += gamma * weight * view_grads[bi][i];
                }
            }
        }
    }

    let buf = gradient::model_backward(&state, adj, model_cfg, &grads)?;
    let mut table_grad = buf.table_grad().to_vec();

    // L2 on rows the batch touches, straight onto the table gradient
    let mut touched: Vec<usize> = Vec::with_capacity(batch.triples.len() * 3);
    for t in &batch.triples {
        touched.push(t.source as usize);
        touched.push(nu as usize + t.pos as usize);
        touched.push(nu as usize + t.neg as usize);
    }
    touched.sort_unstable();
    touched.dedup();
    for &node in &touched {
        let row = table.row(node);
        terms.l2_raw += row.iter().map(|v| v * v).sum::<f64>();
        for i in 0..d {
            table_grad[node * d + i] += cfg.lambda * 2.0 * table.values()[node * d + i];
        }
    }

    adam_step(table, &table_grad, adam, cfg.learning_rate)?;
    Ok(terms)
}
