//! Planted block-bipartite graph generator for benchmarks and tests.
//!
//! Both node sides are partitioned into the same number of contiguous
//! blocks; an edge (u, v) appears with probability `p_in` when u and v fall
//! in the same block and `p_out` otherwise. Sources that come out isolated
//! get one forced in-block edge so the graph is always splittable.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::rng;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub blocks: usize,
    pub num_sources: u32,
    pub num_destinations: u32,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

fn block_bounds(n: u32, blocks: usize) -> Vec<(u32, u32)> {
    (0..blocks)
        .map(|b| {
            let lo = (b as u64 * n as u64 / blocks as u64) as u32;
            let hi = ((b as u64 + 1) * n as u64 / blocks as u64) as u32;
            (lo, hi)
        })
        .collect()
}

pub fn planted_blocks(spec: &SynthSpec) -> Result<BipartiteGraph> {
    if spec.blocks == 0 {
        return Err(Error::Config("block count must be >= 1".into()));
    }
    if spec.blocks as u32 > spec.num_sources || spec.blocks as u32 > spec.num_destinations {
        return Err(Error::Config(format!(
            "{} blocks do not fit {} sources x {} destinations",
            spec.blocks, spec.num_sources, spec.num_destinations
        )));
    }
    for (name, p) in [("p_in", spec.p_in), ("p_out", spec.p_out)] {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
        }
    }

    let src_bounds = block_bounds(spec.num_sources, spec.blocks);
    let dst_bounds = block_bounds(spec.num_destinations, spec.blocks);
    let mut src_block = vec![0usize; spec.num_sources as usize];
    for (b, &(lo, hi)) in src_bounds.iter().enumerate() {
        for u in lo..hi {
            src_block[u as usize] = b;
        }
    }
    let mut dst_block = vec![0usize; spec.num_destinations as usize];
    for (b, &(lo, hi)) in dst_bounds.iter().enumerate() {
        for v in lo..hi {
            dst_block[v as usize] = b;
        }
    }

    let mut rng = rng::stream(spec.seed, "synth");
    let mut edges = Vec::new();
    for u in 0..spec.num_sources {
        let mut degree = 0usize;
        for v in 0..spec.num_destinations {
            let p = if src_block[u as usize] == dst_block[v as usize] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.gen_bool(p) {
                edges.push((u, v));
                degree += 1;
            }
        }
        if degree == 0 {
            let (lo, hi) = dst_bounds[src_block[u as usize]];
            let v = rng.gen_range(lo..hi);
            edges.push((u, v));
        }
    }
    BipartiteGraph::from_edges(spec.num_sources, spec.num_destinations, &edges)
}
