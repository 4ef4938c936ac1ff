//! Shared fixtures for the criterion benchmarks.

use rand::Rng;
use sgbh_core::{
    build_normalized_adjacency, planted_blocks, split_dataset, DatasetSplit, EmbeddingTable,
    ModelConfig, NormalizedAdjacency, PackedCodebook, SynthSpec,
};

/// Random packed codebook of the given shape.
pub fn random_codebook(
    num_sources: u32,
    num_destinations: u32,
    layers: usize,
    dim: usize,
    seed: u64,
) -> PackedCodebook {
    let n = (num_sources + num_destinations) as usize;
    let segs = layers + 1;
    let bps = dim.div_ceil(8);
    let mut rng = sgbh_core::rng::stream(seed, "benchcb");
    let alphas: Vec<f32> = (0..n * segs).map(|_| rng.gen_range(0.1f32..1.5)).collect();
    let mut codes = vec![0u8; n * segs * bps];
    for byte in codes.iter_mut() {
        *byte = rng.gen();
    }
    PackedCodebook::from_parts(n, num_sources, layers, dim, alphas, codes)
}

/// Planted benchmark graph with its split, adjacency and an initialized
/// embedding table.
pub fn forward_fixture(
    seed: u64,
) -> (DatasetSplit, NormalizedAdjacency, ModelConfig, EmbeddingTable) {
    let graph = planted_blocks(&SynthSpec {
        blocks: 8,
        num_sources: 320,
        num_destinations: 480,
        p_in: 0.6,
        p_out: 0.02,
        seed,
    })
    .unwrap();
    let split = split_dataset(&graph, 0.8, seed).unwrap();
    let adj = build_normalized_adjacency(&split);
    let cfg = ModelConfig::new(64, 2, seed);
    let table = sgbh_core::init_embeddings(&cfg, split.num_nodes());
    (split, adj, cfg, table)
}
