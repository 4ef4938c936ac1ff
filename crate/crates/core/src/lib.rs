//! Bipartite graph hashing: graph convolutional training of mixed-precision
//! (rescaling factor x binary code) node embeddings with sign-guided hard
//! negative sampling and sign-aware contrastive learning, plus exact Top-K
//! Hamming-space retrieval over bit-packed codes.
//!
//! The pipeline, end to end:
//!
//! 1. [`graph`] loads and splits a bipartite edge list and builds the
//!    degree-normalized adjacency.
//! 2. [`model`] runs the forward pass: per-layer adaptive hashing
//!    interleaved with graph convolution, concatenated into the final
//!    embedding.
//! 3. [`gradient`] backpropagates through the hash with a Fourier-series
//!    sign-gradient estimate; [`loss`] and [`train`] assemble the ranking,
//!    contrastive and regularization objectives and run Adam.
//! 4. [`sampler`] supplies hard negatives from K-means hash centers over
//!    layer-0 codes.
//! 5. [`codebook`], [`search`] and [`eval`] pack the trained embeddings,
//!    serve popcount-based Top-K queries and score retrieval quality.

pub mod codebook;
pub mod error;
pub mod eval;
pub mod gradient;
pub mod graph;
pub mod loss;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod search;
pub mod synth;
pub mod train;

pub use codebook::{load_codebook, save_codebook, storage_bits, PackedCodebook};
pub use error::{Error, Result};
pub use eval::{
    evaluate, hit_edge_set, layer_hamming_stats, layer_mean, ndcg_at_k, recall_at_k,
    similarity_stats_csv, LayerCodes, MetricsReport, PairKind, SimilarityStat,
};
pub use graph::{
    build_normalized_adjacency, load_edge_list, split_dataset, write_edge_list, BipartiteGraph,
    DatasetSplit, IdMapping, NormalizedAdjacency,
};
pub use model::{
    adaptive_hash, binarize_scenario, forward, graph_convolve, init_embeddings, surrogate_forward,
    BinarizeScenario, EmbeddingTable, FinalEmbedding, LayerEmbeddings, ModelConfig, SignMode,
};
pub use sampler::{
    center_selection_probs, kmeans_binary, refresh_centers, sample_negative,
    sample_negative_uniform, HashCenterSet,
};
pub use search::{
    hamming_similarity, mixed_dot, same_sign_count, topk_search, OpCounter, SearchResult,
};
pub use synth::{planted_blocks, SynthSpec};
pub use train::{
    adam_step, train, train_log_csv, AdamState, Batch, EpochLog, NegativeSampler, TrainConfig,
    TrainMode, TrainOutcome,
};
