//! Hard negative sampling guided by binary codes: destination nodes are
//! clustered by their layer-0 codes (K-means, which on +-1 codes orders pairs
//! the same way Hamming distance does), a cluster is drawn by softmax over
//! query-center dot products, and the negative comes uniformly from that
//! cluster's members.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::LayerEmbeddings;
use crate::rng;

/// K-means centers over destination codes, with per-center member lists.
/// Center coordinates are real-valued means of +-1 codes, so each dimension's
/// magnitude reflects how lopsided the member signs are.
#[derive(Debug, Clone)]
pub struct HashCenterSet {
    dim: usize,
    num_destinations: u32,
    centers: Vec<Vec<f64>>,
    members: Vec<Vec<u32>>,
    assignment: Vec<u32>,
    epoch_stamp: usize,
    distortion_history: Vec<f64>,
}

impl HashCenterSet {
    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_destinations(&self) -> u32 {
        self.num_destinations
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i]
    }

    pub fn members(&self, i: usize) -> &[u32] {
        &self.members[i]
    }

    /// Center index each destination belongs to.
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn epoch_stamp(&self) -> usize {
        self.epoch_stamp
    }

    /// Total squared distance after each assignment pass; non-increasing.
    pub fn distortion_history(&self) -> &[f64] {
        &self.distortion_history
    }
}

fn squared_dist(code: &[i8], center: &[f64]) -> f64 {
    code.iter()
        .zip(center)
        .map(|(&x, &c)| {
            let diff = x as f64 - c;
            diff * diff
        })
        .sum()
}

/// Lloyd iterations over +-1 codes with squared Euclidean distance.
/// Initial centers are k distinct codes drawn per seed; empty clusters are
/// re-seeded from the point farthest from its center.
pub fn kmeans_binary(
    codes: &[i8],
    num_points: usize,
    dim: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<HashCenterSet> {
    assert_eq!(codes.len(), num_points * dim);
    if k == 0 {
        return Err(Error::Config("cluster count must be >= 1".into()));
    }
    if k > num_points {
        return Err(Error::TooManyClusters { k, n: num_points });
    }

    let point = |i: usize| &codes[i * dim..(i + 1) * dim];

    // distinct codes in first-occurrence order, then a seeded shuffle
    let mut seen: HashSet<&[i8]> = HashSet::new();
    let mut distinct: Vec<usize> = Vec::new();
    for i in 0..num_points {
        if seen.insert(point(i)) {
            distinct.push(i);
        }
    }
    let mut rng = rng::stream(seed, "kmeans");
    distinct.shuffle(&mut rng);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for idx in distinct.iter().take(k) {
        centers.push(point(*idx).iter().map(|&v| v as f64).collect());
    }
    while centers.len() < k {
        // fewer distinct codes than clusters: duplicate seeds; the extra
        // clusters stay empty and simply never win an assignment
        let idx = distinct[rng.gen_range(0..distinct.len())];
        centers.push(point(idx).iter().map(|&v| v as f64).collect());
    }

    let mut assignment = vec![0u32; num_points];
    let mut history = Vec::new();
    for _ in 0..max_iters {
        // assignment pass; ties break toward the lowest center index
        let mut changed = false;
        let mut distortion = 0.0;
        let mut per_point_dist = vec![0.0f64; num_points];
        for i in 0..num_points {
            let mut best = 0usize;
            let mut best_dist = squared_dist(point(i), &centers[0]);
            for (j, c) in centers.iter().enumerate().skip(1) {
                let dist = squared_dist(point(i), c);
                if dist < best_dist {
                    best_dist = dist;
                    best = j;
                }
            }
            if assignment[i] != best as u32 {
                assignment[i] = best as u32;
                changed = true;
            }
            per_point_dist[i] = best_dist;
            distortion += best_dist;
        }
        let first_pass = history.is_empty();
        history.push(distortion);
        if !changed && !first_pass {
            break;
        }

        // mean update
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            let c = a as usize;
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(point(i)) {
                *s += v as f64;
            }
        }
        // farthest points first for re-seeding empty clusters
        let mut far_order: Vec<usize> = (0..num_points).collect();
        far_order.sort_by(|&a, &b| per_point_dist[b].total_cmp(&per_point_dist[a]).then(a.cmp(&b)));
        let mut far_iter = far_order.into_iter();
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centers[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            } else if let Some(p) = far_iter.next() {
                for (c, &v) in centers[j].iter_mut().zip(point(p)) {
                    *c = v as f64;
                }
            }
        }
    }

    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c as usize].push(i as u32);
    }
    Ok(HashCenterSet {
        dim,
        num_destinations: num_points as u32,
        centers,
        members,
        assignment,
        epoch_stamp: 0,
        distortion_history: history,
    })
}

/// Softmax over query-center dot products, max-subtracted for stability.
pub fn center_selection_probs(q_u0: &[f64], centers: &HashCenterSet) -> Vec<f64> {
    let scores: Vec<f64> = centers
        .centers
        .iter()
        .map(|c| q_u0.iter().zip(c).map(|(a, b)| a * b).sum())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn draw_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

const REJECTION_BUDGET: usize = 10;

/// Sign-guided draw: pick a center by `Pr(c|u)`, then a uniform member,
/// rejecting train neighbors. After the rejection budget the draw falls back
/// to the uniform sampler over all non-neighbors.
pub fn sample_negative(
    q_u0: &[f64],
    centers: &HashCenterSet,
    train_neighbors: &[u32],
    rng: &mut ChaCha8Rng,
) -> Result<u32> {
    let num_dest = centers.num_destinations;
    if train_neighbors.len() as u32 >= num_dest {
        return Err(Error::NoNegativeCandidate(u32::MAX));
    }
    let probs = center_selection_probs(q_u0, centers);
    for _ in 0..REJECTION_BUDGET {
        let c = draw_categorical(&probs, rng);
        let members = &centers.members[c];
        if members.is_empty() {
            continue;
        }
        let v = members[rng.gen_range(0..members.len())];
        if train_neighbors.binary_search(&v).is_err() {
            return Ok(v);
        }
    }
    sample_negative_uniform(num_dest, train_neighbors, rng)
}

/// Uniform draw over destinations outside the train neighborhood.
pub fn sample_negative_uniform(
    num_destinations: u32,
    train_neighbors: &[u32],
    rng: &mut ChaCha8Rng,
) -> Result<u32> {
    if train_neighbors.len() as u32 >= num_destinations {
        return Err(Error::NoNegativeCandidate(u32::MAX));
    }
    // rejection is cheap while the neighborhood is sparse; switch to exact
    // complement enumeration if it keeps colliding
    for _ in 0..64 {
        let v = rng.gen_range(0..num_destinations);
        if train_neighbors.binary_search(&v).is_err() {
            return Ok(v);
        }
    }
    let complement: Vec<u32> =
        (0..num_destinations).filter(|v| train_neighbors.binary_search(v).is_err()).collect();
    Ok(complement[rng.gen_range(0..complement.len())])
}

/// Re-clusters destination nodes from the current layer-0 codes (rescaling
/// factors discarded) and stamps the result with the epoch.
pub fn refresh_centers(
    state: &LayerEmbeddings,
    num_sources: u32,
    k: usize,
    max_iters: usize,
    seed: u64,
    epoch: usize,
) -> Result<HashCenterSet> {
    let num_dest = state.num_nodes() - num_sources as usize;
    let d = state.dim();
    let mut codes = vec![0i8; num_dest * d];
    for v in 0..num_dest {
        let row = state.code_row(0, num_sources as usize + v);
        for (c, &b) in codes[v * d..(v + 1) * d].iter_mut().zip(row) {
            *c = if b >= 0.0 { 1 } else { -1 };
        }
    }
    let mut set = kmeans_binary(&codes, num_dest, d, k, max_iters, seed.wrapping_add(epoch as u64))?;
    set.epoch_stamp = epoch;
    Ok(set)
}
