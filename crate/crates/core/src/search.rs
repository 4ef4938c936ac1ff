//! Hamming-space scoring and exact Top-K retrieval over packed codes.
//!
//! The dot product of two mixed-precision segments collapses to
//! `alpha_u * alpha_v * (2 * same_sign_count - d)`, so scoring a candidate
//! costs one XOR/popcount pass per segment plus one multiply-add. Work is
//! tracked as FLOPs (one per segment combination) and BOPs (d bit
//! operations per segment).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::codebook::PackedCodebook;
use crate::error::{Error, Result};

/// Floating-point vs binary operation tallies for a query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub flops: u64,
    pub bops: u64,
}

impl OpCounter {
    pub fn merge(&mut self, other: OpCounter) {
        self.flops += other.flops;
        self.bops += other.bops;
    }
}

fn popcount_xor(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let mut count = 0u32;
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (ca, cb) in chunks_a.by_ref().zip(chunks_b.by_ref()) {
        let wa = u64::from_le_bytes(ca.try_into().unwrap());
        let wb = u64::from_le_bytes(cb.try_into().unwrap());
        count += (wa ^ wb).count_ones();
    }
    for (ba, bb) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        count += (ba ^ bb).count_ones();
    }
    count
}

/// Number of dimensions where two packed codes carry the same sign.
/// Padding bits past `dim` are masked out of the count.
pub fn same_sign_count(a: &[u8], b: &[u8], dim: usize) -> u32 {
    let full_bytes = dim / 8;
    let mut diff = popcount_xor(&a[..full_bytes], &b[..full_bytes]);
    if !dim.is_multiple_of(8) {
        let mask = (1u8 << (dim % 8)) - 1;
        diff += ((a[full_bytes] ^ b[full_bytes]) & mask).count_ones();
    }
    dim as u32 - diff
}

/// Fraction of agreeing dimensions, in [0, 1].
pub fn hamming_similarity(a: &[u8], b: &[u8], dim: usize) -> f64 {
    same_sign_count(a, b, dim) as f64 / dim as f64
}

/// Dot product of two packed nodes over all `L + 1` segments:
/// `sum_l alpha_u^l * alpha_v^l * (2 * ssc_l - d)`.
pub fn mixed_dot(
    cb: &PackedCodebook,
    node_a: usize,
    node_b: usize,
    counter: &mut OpCounter,
) -> f64 {
    let d = cb.dim();
    let mut score = 0.0f64;
    for l in 0..=cb.layers() {
        let ssc = same_sign_count(cb.code_bytes(node_a, l), cb.code_bytes(node_b, l), d);
        score += cb.alpha(node_a, l) as f64
            * cb.alpha(node_b, l) as f64
            * (2.0 * ssc as f64 - d as f64);
    }
    counter.flops += cb.num_segments() as u64;
    counter.bops += (cb.num_segments() * d) as u64;
    score
}

/// Ranked retrieval output: scores descending, ties broken by ascending
/// destination index.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub entries: Vec<(u32, f64)>,
    /// Set when fewer than K candidates were available.
    pub truncated: bool,
}

#[derive(PartialEq)]
struct Candidate {
    score: f64,
    dest: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // greater = better: higher score, then lower index
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.dest.cmp(&self.dest))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact scan over all destinations with `mixed_dot`, keeping the best K in
/// a bounded heap. `exclude` lists destination indices (sorted) to skip,
/// typically the query's train neighbors.
pub fn topk_search(
    cb: &PackedCodebook,
    query_source: u32,
    k: usize,
    exclude: &[u32],
    counter: &mut OpCounter,
) -> Result<SearchResult> {
    if query_source >= cb.num_sources() {
        return Err(Error::Invalid(format!(
            "query {query_source} is not a valid source index (|U| = {})",
            cb.num_sources()
        )));
    }
    if k == 0 {
        return Err(Error::Invalid("K must be >= 1".into()));
    }
    let num_dest = cb.num_destinations();
    // min-heap of the current K best; the worst sits on top
    let mut heap: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::with_capacity(k + 1);
    for v in 0..num_dest {
        if exclude.binary_search(&v).is_ok() {
            continue;
        }
        let node = cb.num_sources() as usize + v as usize;
        let score = mixed_dot(cb, query_source as usize, node, counter);
        let cand = Candidate { score, dest: v };
        if heap.len() < k {
            heap.push(std::cmp::Reverse(cand));
        } else if cand > heap.peek().unwrap().0 {
            heap.pop();
            heap.push(std::cmp::Reverse(cand));
        }
    }
    let mut best: Vec<Candidate> = heap.into_iter().map(|r| r.0).collect();
    best.sort_by(|a, b| b.cmp(a));
    let truncated = best.len() < k;
    Ok(SearchResult {
        entries: best.into_iter().map(|c| (c.dest, c.score)).collect(),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{pack_signs, PackedCodebook};
    use proptest::prelude::*;
    use rand::Rng;

    fn codebook_from_rows(
        num_sources: u32,
        rows: Vec<(Vec<f32>, Vec<Vec<f64>>)>, // per node: alphas per layer, signs per layer
        dim: usize,
    ) -> PackedCodebook {
        let layers = rows[0].0.len() - 1;
        let n = rows.len();
        let bps = dim.div_ceil(8);
        let mut alphas = Vec::new();
        let mut codes = vec![0u8; n * (layers + 1) * bps];
        for (node, (a, signs)) in rows.iter().enumerate() {
            for l in 0..=layers {
                alphas.push(a[l]);
                let packed = pack_signs(&signs[l]);
                let seg = node * (layers + 1) + l;
                codes[seg * bps..seg * bps + packed.len()].copy_from_slice(&packed);
            }
        }
        PackedCodebook::from_parts(n, num_sources, layers, dim, alphas, codes)
    }

    fn random_signs(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..dim).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect()
    }

    #[test]
    fn same_sign_count_identity_and_complement() {
        let signs = vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let a = pack_signs(&signs);
        let flipped: Vec<f64> = signs.iter().map(|v| -v).collect();
        let b = pack_signs(&flipped);
        assert_eq!(same_sign_count(&a, &a, 8), 8);
        assert_eq!(same_sign_count(&a, &b, 8), 0);
        assert_eq!(hamming_similarity(&a, &a, 8), 1.0);
        assert_eq!(hamming_similarity(&a, &b, 8), 0.0);
    }

    #[test]
    fn same_sign_count_matches_naive_loop() {
        let mut rng = crate::rng::stream(1, "ssc");
        for _ in 0..100 {
            let x = random_signs(8, &mut rng);
            let y = random_signs(8, &mut rng);
            let want = x.iter().zip(&y).filter(|(a, b)| a == b).count() as u32;
            assert_eq!(same_sign_count(&pack_signs(&x), &pack_signs(&y), 8), want);
        }
    }

    #[test]
    fn unaligned_dimension_masks_padding() {
        let mut rng = crate::rng::stream(2, "ssc");
        for d in [3usize, 12, 21] {
            for _ in 0..50 {
                let x = random_signs(d, &mut rng);
                let y = random_signs(d, &mut rng);
                let want = x.iter().zip(&y).filter(|(a, b)| a == b).count() as u32;
                assert_eq!(same_sign_count(&pack_signs(&x), &pack_signs(&y), d), want);
            }
        }
    }

    #[test]
    fn mixed_dot_unit_alpha_identical_codes() {
        let signs = random_signs(16, &mut crate::rng::stream(3, "md"));
        let cb = codebook_from_rows(
            1,
            vec![
                (vec![1.0], vec![signs.clone()]),
                (vec![1.0], vec![signs.clone()]),
            ],
            16,
        );
        let mut c = OpCounter::default();
        assert_eq!(mixed_dot(&cb, 0, 1, &mut c), 16.0);
        assert_eq!(c.flops, 1);
        assert_eq!(c.bops, 16);
    }

    #[test]
    fn half_agreement_contributes_zero() {
        let a: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { -1.0 }).collect();
        let b = vec![1.0; 8];
        // ssc = 4 = d/2, so the segment contributes 0 regardless of alpha
        let cb = codebook_from_rows(1, vec![(vec![7.5], vec![a]), (vec![3.25], vec![b])], 8);
        let mut c = OpCounter::default();
        assert_eq!(mixed_dot(&cb, 0, 1, &mut c), 0.0);
    }

    #[test]
    fn mixed_dot_matches_float_oracle() {
        let mut rng = crate::rng::stream(4, "md");
        for _ in 0..200 {
            let rows: Vec<(Vec<f32>, Vec<Vec<f64>>)> = (0..2)
                .map(|_| {
                    let alphas: Vec<f32> = (0..3).map(|_| rng.gen_range(0.0..2.0)).collect();
                    let signs: Vec<Vec<f64>> = (0..3).map(|_| random_signs(64, &mut rng)).collect();
                    (alphas, signs)
                })
                .collect();
            let cb = codebook_from_rows(1, rows, 64);
            let mut c = OpCounter::default();
            let got = mixed_dot(&cb, 0, 1, &mut c);
            let qa = cb.unpack_node(0);
            let qb = cb.unpack_node(1);
            let want: f64 = qa.iter().zip(&qb).map(|(x, y)| x * y).sum();
            assert!((got - want).abs() <= 1e-5 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn single_destination_search() {
        let signs = random_signs(8, &mut crate::rng::stream(5, "tk"));
        let cb = codebook_from_rows(
            1,
            vec![(vec![1.0], vec![signs.clone()]), (vec![1.0], vec![signs])],
            8,
        );
        let mut c = OpCounter::default();
        let res = topk_search(&cb, 0, 1, &[], &mut c).unwrap();
        assert_eq!(res.entries.len(), 1);
        assert_eq!(res.entries[0].0, 0);
        assert!(!res.truncated);
    }

    #[test]
    fn zero_alpha_query_yields_index_order() {
        let mut rng = crate::rng::stream(6, "tk");
        let mut rows = vec![(vec![0.0f32, 0.0], vec![random_signs(8, &mut rng), random_signs(8, &mut rng)])];
        for _ in 0..10 {
            rows.push((
                vec![rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)],
                vec![random_signs(8, &mut rng), random_signs(8, &mut rng)],
            ));
        }
        let cb = codebook_from_rows(1, rows, 8);
        let mut c = OpCounter::default();
        let res = topk_search(&cb, 0, 4, &[], &mut c).unwrap();
        let ids: Vec<u32> = res.entries.iter().map(|e| e.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert!(res.entries.iter().all(|e| e.1 == 0.0));
    }

    #[test]
    fn search_matches_brute_force_oracle() {
        let mut rng = crate::rng::stream(7, "tk");
        let num_sources = 20u32;
        let num_dest = 50u32;
        let rows: Vec<(Vec<f32>, Vec<Vec<f64>>)> = (0..num_sources + num_dest)
            .map(|_| {
                let alphas: Vec<f32> = (0..2).map(|_| rng.gen_range(0.0..1.5)).collect();
                let signs: Vec<Vec<f64>> = (0..2).map(|_| random_signs(16, &mut rng)).collect();
                (alphas, signs)
            })
            .collect();
        let cb = codebook_from_rows(num_sources, rows, 16);
        for q in 0..num_sources {
            let exclude: Vec<u32> = if q % 3 == 0 { vec![1, 5, 13] } else { vec![] };
            let mut c = OpCounter::default();
            let res = topk_search(&cb, q, 10, &exclude, &mut c).unwrap();

            // oracle: float scores over unpacked embeddings, full argsort
            let qv = cb.unpack_node(q as usize);
            let mut scored: Vec<(u32, f64)> = (0..num_dest)
                .filter(|v| exclude.binary_search(v).is_err())
                .map(|v| {
                    let dv = cb.unpack_node((num_sources + v) as usize);
                    (v, qv.iter().zip(&dv).map(|(a, b)| a * b).sum())
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (i, &(v, _)) in scored.iter().take(10).enumerate() {
                assert_eq!(res.entries[i].0, v, "query {q} rank {i}");
            }
        }
    }

    #[test]
    fn counter_accounts_exactly() {
        let mut rng = crate::rng::stream(8, "tk");
        let rows: Vec<(Vec<f32>, Vec<Vec<f64>>)> = (0..31)
            .map(|_| {
                (
                    (0..3).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
                    (0..3).map(|_| random_signs(32, &mut rng)).collect(),
                )
            })
            .collect();
        let cb = codebook_from_rows(1, rows, 32);
        let mut c = OpCounter::default();
        let _ = topk_search(&cb, 0, 5, &[], &mut c).unwrap();
        // 30 destinations, 3 segments, d = 32
        assert_eq!(c.flops, 30 * 3);
        assert_eq!(c.bops, 30 * 3 * 32);
    }

    #[test]
    fn oversized_k_truncates_and_flags() {
        let signs = random_signs(8, &mut crate::rng::stream(9, "tk"));
        let cb = codebook_from_rows(
            1,
            vec![(vec![1.0], vec![signs.clone()]), (vec![1.0], vec![signs])],
            8,
        );
        let mut c = OpCounter::default();
        let res = topk_search(&cb, 0, 5, &[], &mut c).unwrap();
        assert_eq!(res.entries.len(), 1);
        assert!(res.truncated);
    }

    #[test]
    fn invalid_query_is_rejected() {
        let signs = random_signs(8, &mut crate::rng::stream(10, "tk"));
        let cb = codebook_from_rows(1, vec![(vec![1.0], vec![signs.clone()]), (vec![1.0], vec![signs])], 8);
        let mut c = OpCounter::default();
        assert!(topk_search(&cb, 7, 1, &[], &mut c).is_err());
    }

    proptest! {
        #[test]
        fn popcount_dot_equals_float_dot(
            seed in 0u64..1_000,
            layers in 0usize..3,
            dim_bytes in 1usize..9,
        ) {
            let dim = dim_bytes * 8;
            let mut rng = crate::rng::stream(seed, "prop");
            let rows: Vec<(Vec<f32>, Vec<Vec<f64>>)> = (0..2)
                .map(|_| {
                    let alphas: Vec<f32> = (0..=layers).map(|_| rng.gen_range(0.0..3.0)).collect();
                    let signs: Vec<Vec<f64>> = (0..=layers).map(|_| random_signs(dim, &mut rng)).collect();
                    (alphas, signs)
                })
                .collect();
            let cb = codebook_from_rows(1, rows, dim);
            let mut c = OpCounter::default();
            let got = mixed_dot(&cb, 0, 1, &mut c);
            let qa = cb.unpack_node(0);
            let qb = cb.unpack_node(1);
            let want: f64 = qa.iter().zip(&qb).map(|(x, y)| x * y).sum();
            prop_assert!((got - want).abs() <= 1e-5 * (1.0 + want.abs()));
        }
    }
}
