//! Retrieval quality metrics and layer-wise Hamming-similarity diagnostics.
//!
//! Recall@K and NDCG@K are computed from one Top-`max(K)` scan per source
//! and sliced per K. The diagnostics follow the hit-edge methodology: test
//! edges recovered in the Top-100 list are "ground-truth neighbors", node
//! pairs absent from both splits are "non-neighbors", and mean code
//! agreement is reported per layer over randomly grouped sources.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::codebook::PackedCodebook;
use crate::error::{Error, Result};
use crate::graph::DatasetSplit;
use crate::model::LayerEmbeddings;
use crate::rng;
use crate::search::{topk_search, OpCounter, SearchResult};

/// Recall and NDCG per requested K, averaged over sources with test edges.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub evaluated_sources: usize,
}

impl MetricsReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,recall,ndcg\n");
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "{k},{:.6},{:.6}", self.recall[i], self.ndcg[i]);
        }
        out
    }
}

/// Fraction of relevant destinations present in the top K ranks.
pub fn recall_at_k(ranked: &SearchResult, relevant: &[u32], k: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    let hits = ranked
        .entries
        .iter()
        .take(k)
        .filter(|(v, _)| relevant.binary_search(v).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with 1/log2(rank + 1) discounts; the ideal ranking
/// places min(K, |relevant|) hits first.
pub fn ndcg_at_k(ranked: &SearchResult, relevant: &[u32], k: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    let mut dcg = 0.0;
    for (rank0, (v, _)) in ranked.entries.iter().take(k).enumerate() {
        if relevant.binary_search(v).is_ok() {
            dcg += 1.0 / ((rank0 + 2) as f64).log2();
        }
    }
    let ideal_hits = relevant.len().min(k);
    let idcg: f64 = (0..ideal_hits).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / idcg
}

/// Evaluates the codebook against the test split. One Top-`max(ks)` scan per
/// source; sources without test edges are skipped. `exclude_train` removes
/// each source's train neighbors from the candidate pool (the usual
/// protocol).
pub fn evaluate(
    cb: &PackedCodebook,
    split: &DatasetSplit,
    ks: &[usize],
    exclude_train: bool,
) -> Result<MetricsReport> {
    if cb.num_nodes() != split.num_nodes() {
        return Err(Error::SizeMismatch {
            codebook: cb.num_nodes(),
            graph: split.num_nodes(),
        });
    }
    let kmax = ks.iter().copied().max().unwrap_or(100);
    let sources: Vec<u32> =
        (0..split.num_sources()).filter(|&u| !split.test_neighbors(u).is_empty()).collect();
    if sources.is_empty() {
        return Err(Error::NoTestEdges);
    }

    let per_source: Vec<(Vec<f64>, Vec<f64>)> = sources
        .par_iter()
        .map(|&u| {
            let mut counter = OpCounter::default();
            let exclude: &[u32] = if exclude_train { split.train_neighbors(u) } else { &[] };
            let ranked = topk_search(cb, u, kmax, exclude, &mut counter).expect("valid source");
            let relevant = split.test_neighbors(u);
            let recalls: Vec<f64> = ks.iter().map(|&k| recall_at_k(&ranked, relevant, k)).collect();
            let ndcgs: Vec<f64> = ks.iter().map(|&k| ndcg_at_k(&ranked, relevant, k)).collect();
            (recalls, ndcgs)
        })
        .collect();

    let n = sources.len() as f64;
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    for (r, d) in &per_source {
        for i in 0..ks.len() {
            recall[i] += r[i];
            ndcg[i] += d[i];
        }
    }
    for i in 0..ks.len() {
        recall[i] /= n;
        ndcg[i] /= n;
    }
    Ok(MetricsReport {
        ks: ks.to_vec(),
        recall,
        ndcg,
        evaluated_sources: sources.len(),
    })
}

/// Test edges whose destination appears in the source's Top-K list; these
/// pairs are the ground-truth neighbors used by the diagnostics.
pub fn hit_edge_set(cb: &PackedCodebook, split: &DatasetSplit, k: usize) -> Result<Vec<(u32, u32)>> {
    if cb.num_nodes() != split.num_nodes() {
        return Err(Error::SizeMismatch {
            codebook: cb.num_nodes(),
            graph: split.num_nodes(),
        });
    }
    let sources: Vec<u32> =
        (0..split.num_sources()).filter(|&u| !split.test_neighbors(u).is_empty()).collect();
    let mut hits: Vec<(u32, u32)> = sources
        .par_iter()
        .map(|&u| {
            let mut counter = OpCounter::default();
            let ranked =
                topk_search(cb, u, k, split.train_neighbors(u), &mut counter).expect("valid source");
            let mut top: Vec<u32> = ranked.entries.iter().map(|e| e.0).collect();
            top.sort_unstable();
            split
                .test_neighbors(u)
                .iter()
                .filter(|v| top.binary_search(v).is_ok())
                .map(|&v| (u, v))
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    hits.sort_unstable();
    Ok(hits)
}

/// Per-layer +-1 codes detached from everything else; similarity statistics
/// depend only on these, never on rescaling factors.
#[derive(Debug, Clone)]
pub struct LayerCodes {
    num_nodes: usize,
    dim: usize,
    layers: Vec<Vec<i8>>,
}

impl LayerCodes {
    pub fn from_state(state: &LayerEmbeddings) -> Self {
        let layers = (0..=state.layers())
            .map(|l| {
                state
                    .codes_layer(l)
                    .iter()
                    .map(|&b| if b >= 0.0 { 1i8 } else { -1 })
                    .collect()
            })
            .collect();
        Self {
            num_nodes: state.num_nodes(),
            dim: state.dim(),
            layers,
        }
    }

    pub fn from_codebook(cb: &PackedCodebook) -> Self {
        let layers = (0..=cb.layers())
            .map(|l| {
                cb.layer_codes(l)
                    .iter()
                    .map(|&b| if b >= 0.0 { 1i8 } else { -1 })
                    .collect()
            })
            .collect();
        Self {
            num_nodes: cb.num_nodes(),
            dim: cb.dim(),
            layers,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Fraction of agreeing dimensions between two nodes at one layer.
    pub fn similarity(&self, layer: usize, a: usize, b: usize) -> f64 {
        let d = self.dim;
        let ra = &self.layers[layer][a * d..(a + 1) * d];
        let rb = &self.layers[layer][b * d..(b + 1) * d];
        let same = ra.iter().zip(rb).filter(|(x, y)| x == y).count();
        same as f64 / d as f64
    }
}

/// Which pair population a similarity row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Neighbor,
    NonNeighbor,
}

/// Mean code agreement for one (layer, source-group, pair-kind) cell.
/// `mean` is absent when the group saw no pairs of that kind.
#[derive(Debug, Clone)]
pub struct SimilarityStat {
    pub layer: usize,
    pub group: usize,
    pub kind: PairKind,
    pub mean: Option<f64>,
    pub count: usize,
}

/// Layer-wise Hamming-similarity statistics: sources are shuffled into
/// `groups` equal parts; neighbor rows average over hit edges, non-neighbor
/// rows over `neg_samples` sampled destinations per source that appear in
/// neither split.
pub fn layer_hamming_stats(
    codes: &LayerCodes,
    split: &DatasetSplit,
    hit_edges: &[(u32, u32)],
    groups: usize,
    neg_samples: usize,
    seed: u64,
) -> Vec<SimilarityStat> {
    assert!(groups >= 1);
    let nu = split.num_sources() as usize;
    let nv = split.num_destinations() as usize;
    let num_layers = codes.num_layers();

    let mut order: Vec<u32> = (0..nu as u32).collect();
    order.shuffle(&mut rng::stream(seed, "groups"));
    let mut group_of = vec![0usize; nu];
    for (pos, &u) in order.iter().enumerate() {
        group_of[u as usize] = pos * groups / nu;
    }

    let mut neighbor_sum = vec![0.0f64; num_layers * groups];
    let mut neighbor_cnt = vec![0usize; num_layers * groups];
    for &(u, v) in hit_edges {
        let g = group_of[u as usize];
        for l in 0..num_layers {
            let s = codes.similarity(l, u as usize, split.global_dest(v));
            neighbor_sum[l * groups + g] += s;
            neighbor_cnt[l * groups + g] += 1;
        }
    }

    // per-source sampling with a private stream keeps the result independent
    // of the parallel schedule
    let per_source: Vec<(usize, Vec<f64>, usize)> = (0..nu as u32)
        .into_par_iter()
        .map(|u| {
            let mut rng = rng::stream_indexed(seed, "nonneighbor", u as u64);
            let train = split.train_neighbors(u);
            let test = split.test_neighbors(u);
            if train.len() + test.len() >= nv {
                return (group_of[u as usize], vec![0.0; num_layers], 0);
            }
            let mut sums = vec![0.0f64; num_layers];
            let mut count = 0usize;
            while count < neg_samples {
                let v = rng.gen_range(0..nv as u32);
                if train.binary_search(&v).is_ok() || test.binary_search(&v).is_ok() {
                    continue;
                }
                for (l, s) in sums.iter_mut().enumerate() {
                    *s += codes.similarity(l, u as usize, split.global_dest(v));
                }
                count += 1;
            }
            (group_of[u as usize], sums, count)
        })
        .collect();

    let mut non_sum = vec![0.0f64; num_layers * groups];
    let mut non_cnt = vec![0usize; num_layers * groups];
    for (g, sums, count) in per_source {
        for l in 0..num_layers {
            non_sum[l * groups + g] += sums[l];
            non_cnt[l * groups + g] += count;
        }
    }

    let mut out = Vec::with_capacity(num_layers * groups * 2);
    for l in 0..num_layers {
        for g in 0..groups {
            let idx = l * groups + g;
            out.push(SimilarityStat {
                layer: l,
                group: g,
                kind: PairKind::Neighbor,
                mean: (neighbor_cnt[idx] > 0).then(|| neighbor_sum[idx] / neighbor_cnt[idx] as f64),
                count: neighbor_cnt[idx],
            });
            out.push(SimilarityStat {
                layer: l,
                group: g,
                kind: PairKind::NonNeighbor,
                mean: (non_cnt[idx] > 0).then(|| non_sum[idx] / non_cnt[idx] as f64),
                count: non_cnt[idx],
            });
        }
    }
    out
}

/// Mean over group means for one (layer, kind); groups without pairs are
/// skipped.
pub fn layer_mean(stats: &[SimilarityStat], layer: usize, kind: PairKind) -> Option<f64> {
    let means: Vec<f64> = stats
        .iter()
        .filter(|s| s.layer == layer && s.kind == kind)
        .filter_map(|s| s.mean)
        .collect();
    if means.is_empty() {
        None
    } else {
        Some(means.iter().sum::<f64>() / means.len() as f64)
    }
}

pub fn similarity_stats_csv(stats: &[SimilarityStat]) -> String {
    let mut out = String::from("layer,group,kind,mean,count\n");
    for s in stats {
        let kind = match s.kind {
            PairKind::Neighbor => "neighbor",
            PairKind::NonNeighbor => "non-neighbor",
        };
        match s.mean {
            Some(m) => {
                let _ = writeln!(out, "{},{},{},{:.6},{}", s.layer, s.group, kind, m, s.count);
            }
            None => {
                let _ = writeln!(out, "{},{},{},,{}", s.layer, s.group, kind, s.count);
            }
        }
    }
    out
}
