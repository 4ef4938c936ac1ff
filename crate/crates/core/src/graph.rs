//! Bipartite interaction graph: edge-list loading, train/test splitting and
//! the degree-normalized adjacency used by graph convolution.
//!
//! Node indices are dense and 0-based on both sides. Raw file IDs are remapped
//! on load (sorted raw order) and the mapping is kept so callers can persist
//! it next to run outputs. In the combined node space used by propagation,
//! sources occupy `0..|U|` and destination `v` sits at `|U| + v`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Immutable bipartite interaction graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    num_sources: u32,
    num_destinations: u32,
    /// Sorted, deduplicated (source, destination) pairs.
    edges: Vec<(u32, u32)>,
    source_neighbors: Vec<Vec<u32>>,
    dest_neighbors: Vec<Vec<u32>>,
}

/// Raw-ID to dense-index mapping recorded while loading an edge list.
#[derive(Debug, Clone, Default)]
pub struct IdMapping {
    /// raw source ID at each dense source index
    pub sources: Vec<u64>,
    /// raw destination ID at each dense destination index
    pub destinations: Vec<u64>,
}

impl BipartiteGraph {
    /// Builds a graph from dense-indexed edges. Deduplicates; sizes may
    /// exceed the max index to allow isolated tail nodes.
    pub fn from_edges(num_sources: u32, num_destinations: u32, edges: &[(u32, u32)]) -> Result<Self> {
        let mut edges: Vec<(u32, u32)> = edges.to_vec();
        edges.sort_unstable();
        edges.dedup();
        for &(u, v) in &edges {
            if u >= num_sources || v >= num_destinations {
                return Err(Error::Invalid(format!(
                    "edge ({u}, {v}) out of range for {num_sources} sources x {num_destinations} destinations"
                )));
            }
        }
        let mut source_neighbors = vec![Vec::new(); num_sources as usize];
        let mut dest_neighbors = vec![Vec::new(); num_destinations as usize];
        for &(u, v) in &edges {
            source_neighbors[u as usize].push(v);
            dest_neighbors[v as usize].push(u);
        }
        Ok(Self {
            num_sources,
            num_destinations,
            edges,
            source_neighbors,
            dest_neighbors,
        })
    }

    pub fn num_sources(&self) -> u32 {
        self.num_sources
    }

    pub fn num_destinations(&self) -> u32 {
        self.num_destinations
    }

    /// Total node count across both sides.
    pub fn num_nodes(&self) -> usize {
        self.num_sources as usize + self.num_destinations as usize
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Destination neighbors of source `u`, sorted.
    pub fn neighbors_of_source(&self, u: u32) -> &[u32] {
        &self.source_neighbors[u as usize]
    }

    /// Source neighbors of destination `v`, sorted.
    pub fn neighbors_of_dest(&self, v: u32) -> &[u32] {
        &self.dest_neighbors[v as usize]
    }

    /// Index of destination `v` in the combined node space.
    pub fn global_dest(&self, v: u32) -> usize {
        self.num_sources as usize + v as usize
    }
}

/// Parses `<u> <v>` edge lines with optional `# sources=N destinations=M`
/// header. Without a header, raw IDs are remapped to dense indices in sorted
/// raw order; with one, IDs are taken as dense indices already.
pub fn load_edge_list(path: &Path) -> Result<(BipartiteGraph, IdMapping)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut declared: Option<(u32, u32)> = None;
    let mut raw_edges: Vec<(u64, u64)> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if declared.is_none() && raw_edges.is_empty() {
                declared = parse_header(rest);
            }
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let u = it.next();
        let v = it.next();
        let extra = it.next();
        match (u, v, extra) {
            (Some(u), Some(v), None) => {
                let u: u64 = u.parse().map_err(|_| parse_err(path, line_no, trimmed))?;
                let v: u64 = v.parse().map_err(|_| parse_err(path, line_no, trimmed))?;
                raw_edges.push((u, v));
            }
            _ => return Err(parse_err(path, line_no, trimmed)),
        }
    }
    if raw_edges.is_empty() {
        return Err(Error::EmptyEdgeList { path: path.into() });
    }

    match declared {
        Some((nu, nv)) => {
            for &(u, v) in &raw_edges {
                if u >= nu as u64 || v >= nv as u64 {
                    return Err(Error::Invalid(format!(
                        "edge ({u}, {v}) exceeds declared sizes {nu} x {nv} in {}",
                        path.display()
                    )));
                }
            }
            let edges: Vec<(u32, u32)> = raw_edges.iter().map(|&(u, v)| (u as u32, v as u32)).collect();
            let mapping = IdMapping {
                sources: (0..nu as u64).collect(),
                destinations: (0..nv as u64).collect(),
            };
            Ok((BipartiteGraph::from_edges(nu, nv, &edges)?, mapping))
        }
        None => {
            let mut src_ids: Vec<u64> = raw_edges.iter().map(|e| e.0).collect();
            let mut dst_ids: Vec<u64> = raw_edges.iter().map(|e| e.1).collect();
            src_ids.sort_unstable();
            src_ids.dedup();
            dst_ids.sort_unstable();
            dst_ids.dedup();
            let edges: Vec<(u32, u32)> = raw_edges
                .iter()
                .map(|&(u, v)| {
                    let du = src_ids.binary_search(&u).expect("id present") as u32;
                    let dv = dst_ids.binary_search(&v).expect("id present") as u32;
                    (du, dv)
                })
                .collect();
            let graph = BipartiteGraph::from_edges(src_ids.len() as u32, dst_ids.len() as u32, &edges)?;
            Ok((
                graph,
                IdMapping {
                    sources: src_ids,
                    destinations: dst_ids,
                },
            ))
        }
    }
}

/// Writes the graph back as an edge list with a size header, so isolated
/// tail nodes survive a round trip.
pub fn write_edge_list(graph: &BipartiteGraph, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# sources={} destinations={}",
        graph.num_sources, graph.num_destinations
    );
    for &(u, v) in &graph.edges {
        let _ = writeln!(out, "{u}\t{v}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl IdMapping {
    /// Two-column `raw<TAB>dense` sidecars, one file per node side.
    pub fn write_sidecars(&self, source_path: &Path, dest_path: &Path) -> Result<()> {
        for (ids, path) in [(&self.sources, source_path), (&self.destinations, dest_path)] {
            let mut out = String::new();
            for (dense, raw) in ids.iter().enumerate() {
                let _ = writeln!(out, "{raw}\t{dense}");
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn parse_header(rest: &str) -> Option<(u32, u32)> {
    let mut nu = None;
    let mut nv = None;
    for token in rest.split_whitespace() {
        if let Some(n) = token.strip_prefix("sources=") {
            nu = n.parse().ok();
        } else if let Some(n) = token.strip_prefix("destinations=") {
            nv = n.parse().ok();
        }
    }
    match (nu, nv) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    }
}

fn parse_err(path: &Path, line: usize, content: &str) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        reason: format!("expected `<u> <v>`, got {content:?}"),
    }
}

/// Per-source stratified train/test partition of the edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    num_sources: u32,
    num_destinations: u32,
    train_edges: Vec<(u32, u32)>,
    test_edges: Vec<(u32, u32)>,
    train_neighbors: Vec<Vec<u32>>,
    test_neighbors: Vec<Vec<u32>>,
}

/// Per-source split: each source keeps `round(ratio * deg)` train edges
/// (at least one), the rest go to test. Deterministic for a fixed seed.
pub fn split_dataset(graph: &BipartiteGraph, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::BadSplitRatio(ratio));
    }
    let mut rng = rng::stream(seed, "split");
    let mut train_edges = Vec::new();
    let mut test_edges = Vec::new();
    let mut train_neighbors = vec![Vec::new(); graph.num_sources as usize];
    let mut test_neighbors = vec![Vec::new(); graph.num_sources as usize];

    for u in 0..graph.num_sources {
        let neighbors = graph.neighbors_of_source(u);
        if neighbors.is_empty() {
            return Err(Error::IsolatedSource(u));
        }
        let mut shuffled = neighbors.to_vec();
        shuffled.shuffle(&mut rng);
        let deg = shuffled.len();
        let quota = ((ratio * deg as f64).round() as usize).clamp(1, deg);
        for (i, &v) in shuffled.iter().enumerate() {
            if i < quota {
                train_edges.push((u, v));
                train_neighbors[u as usize].push(v);
            } else {
                test_edges.push((u, v));
                test_neighbors[u as usize].push(v);
            }
        }
    }
    train_edges.sort_unstable();
    test_edges.sort_unstable();
    for list in train_neighbors.iter_mut().chain(test_neighbors.iter_mut()) {
        list.sort_unstable();
    }
    Ok(DatasetSplit {
        num_sources: graph.num_sources,
        num_destinations: graph.num_destinations,
        train_edges,
        test_edges,
        train_neighbors,
        test_neighbors,
    })
}

impl DatasetSplit {
    pub fn num_sources(&self) -> u32 {
        self.num_sources
    }

    pub fn num_destinations(&self) -> u32 {
        self.num_destinations
    }

    pub fn num_nodes(&self) -> usize {
        self.num_sources as usize + self.num_destinations as usize
    }

    pub fn train_edges(&self) -> &[(u32, u32)] {
        &self.train_edges
    }

    pub fn test_edges(&self) -> &[(u32, u32)] {
        &self.test_edges
    }

    /// Sorted train-set destinations of source `u`.
    pub fn train_neighbors(&self, u: u32) -> &[u32] {
        &self.train_neighbors[u as usize]
    }

    /// Sorted test-set destinations of source `u`.
    pub fn test_neighbors(&self, u: u32) -> &[u32] {
        &self.test_neighbors[u as usize]
    }

    pub fn is_train_edge(&self, u: u32, v: u32) -> bool {
        self.train_neighbors[u as usize].binary_search(&v).is_ok()
    }

    pub fn is_test_edge(&self, u: u32, v: u32) -> bool {
        self.test_neighbors[u as usize].binary_search(&v).is_ok()
    }

    pub fn global_dest(&self, v: u32) -> usize {
        self.num_sources as usize + v as usize
    }
}

/// Symmetric degree-normalized adjacency over the combined node space,
/// compressed row layout. Entry for train edge (x, y) is
/// `1 / (sqrt|N(x)| * sqrt|N(y)|)` with degrees counted on train edges only.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

pub fn build_normalized_adjacency(split: &DatasetSplit) -> NormalizedAdjacency {
    let nu = split.num_sources as usize;
    let n = split.num_nodes();
    let mut degree = vec![0usize; n];
    for &(u, v) in split.train_edges() {
        degree[u as usize] += 1;
        degree[nu + v as usize] += 1;
    }

    let mut row_ptr = vec![0usize; n + 1];
    for &(u, v) in split.train_edges() {
        row_ptr[u as usize + 1] += 1;
        row_ptr[nu + v as usize + 1] += 1;
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    let nnz = row_ptr[n];
    let mut col_idx = vec![0u32; nnz];
    let mut values = vec![0.0f64; nnz];
    let mut cursor = row_ptr.clone();
    // Train edges are sorted by (u, v), so source rows come out with sorted
    // columns; destination rows get sorted columns because u increases.
    for &(u, v) in split.train_edges() {
        let x = u as usize;
        let y = nu + v as usize;
        let w = 1.0 / ((degree[x] as f64).sqrt() * (degree[y] as f64).sqrt());
        col_idx[cursor[x]] = y as u32;
        values[cursor[x]] = w;
        cursor[x] += 1;
        col_idx[cursor[y]] = x as u32;
        values[cursor[y]] = w;
        cursor[y] += 1;
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_ptr,
        col_idx,
        values,
    }
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_entries(&self) -> usize {
        self.col_idx.len()
    }

    /// (column, value) pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Sparse-dense product `out = A * x` where `x` is row-major
    /// `num_nodes x d`. Rows are independent, so the result does not depend
    /// on the parallel schedule.
    pub fn multiply(&self, x: &[f64], d: usize, out: &mut [f64]) {
        assert_eq!(x.len(), self.num_nodes * d, "input shape");
        assert_eq!(out.len(), self.num_nodes * d, "output shape");
        use rayon::prelude::*;
        out.par_chunks_mut(d).enumerate().for_each(|(i, row_out)| {
            row_out.fill(0.0);
            for (col, w) in self.row(i) {
                let src = &x[col as usize * d..col as usize * d + d];
                for (o, s) in row_out.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn write_tmp(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_edge_list() {
        let f = write_tmp("0 0\n0 1\n1 1\n");
        let (g, map) = load_edge_list(f.path()).unwrap();
        assert_eq!(g.num_sources(), 2);
        assert_eq!(g.num_destinations(), 2);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.neighbors_of_source(0), &[0, 1]);
        assert_eq!(map.sources, vec![0, 1]);
    }

    #[test]
    fn duplicate_lines_are_deduplicated() {
        let f = write_tmp("0 0\n0 0\n0 0\n");
        let (g, _) = load_edge_list(f.path()).unwrap();
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn sparse_raw_ids_are_remapped_dense() {
        let f = write_tmp("100 7\n5 7\n100 9000\n");
        let (g, map) = load_edge_list(f.path()).unwrap();
        assert_eq!(g.num_sources(), 2);
        assert_eq!(g.num_destinations(), 2);
        assert_eq!(map.sources, vec![5, 100]);
        assert_eq!(map.destinations, vec![7, 9000]);
        // remapped: (1,0), (0,0), (1,1)
        assert_eq!(g.edges(), &[(0, 0), (1, 0), (1, 1)]);
    }

    #[test]
    fn header_overrides_sizes() {
        let f = write_tmp("# sources=4 destinations=5\n0 0\n2 4\n");
        let (g, _) = load_edge_list(f.path()).unwrap();
        assert_eq!(g.num_sources(), 4);
        assert_eq!(g.num_destinations(), 5);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("0 0\nnope\n");
        let err = load_edge_list(f.path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("\n\n");
        assert!(matches!(
            load_edge_list(f.path()).unwrap_err(),
            Error::EmptyEdgeList { .. }
        ));
    }

    #[test]
    fn round_trip_preserves_graph() {
        let f = write_tmp("3 1\n0 0\n0 5\n2 5\n");
        let (g, _) = load_edge_list(f.path()).unwrap();
        let out = NamedTempFile::new().unwrap();
        write_edge_list(&g, out.path()).unwrap();
        let (g2, _) = load_edge_list(out.path()).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn split_quota_matches_rounding() {
        // one source with 5 edges: 4 train + 1 test at ratio 0.8
        let g = BipartiteGraph::from_edges(1, 5, &[(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let s = split_dataset(&g, 0.8, 42).unwrap();
        assert_eq!(s.train_neighbors(0).len(), 4);
        assert_eq!(s.test_neighbors(0).len(), 1);
    }

    #[test]
    fn degree_one_source_keeps_its_edge_in_train() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        let s = split_dataset(&g, 0.8, 0).unwrap();
        assert_eq!(s.train_edges(), &[(0, 0)]);
        assert!(s.test_edges().is_empty());
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let mut edges = Vec::new();
        for u in 0..20u32 {
            for v in 0..12u32 {
                if (u + v) % 3 != 0 {
                    edges.push((u, v));
                }
            }
        }
        let g = BipartiteGraph::from_edges(20, 12, &edges).unwrap();
        let a = split_dataset(&g, 0.8, 7).unwrap();
        let b = split_dataset(&g, 0.8, 7).unwrap();
        assert_eq!(a, b);

        let mut union: Vec<(u32, u32)> = a
            .train_edges()
            .iter()
            .chain(a.test_edges())
            .copied()
            .collect();
        union.sort_unstable();
        assert_eq!(union, g.edges());
        for &(u, v) in a.train_edges() {
            assert!(!a.is_test_edge(u, v));
        }
    }

    #[test]
    fn bad_ratio_is_rejected() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        assert!(matches!(
            split_dataset(&g, 1.0, 0).unwrap_err(),
            Error::BadSplitRatio(_)
        ));
    }

    #[test]
    fn single_edge_adjacency_entry_is_one() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        let s = split_dataset(&g, 0.8, 0).unwrap();
        let adj = build_normalized_adjacency(&s);
        let row: Vec<_> = adj.row(0).collect();
        assert_eq!(row, vec![(1, 1.0)]);
    }

    #[test]
    fn star_adjacency_entries_are_half() {
        // source 0 with 4 degree-1 destinations: 1/(sqrt(4) * sqrt(1)) = 0.5
        let g = BipartiteGraph::from_edges(1, 4, &[(0, 0), (0, 1), (0, 2), (0, 3)]).unwrap();
        let s = split_dataset(&g, 0.9, 0).unwrap();
        assert_eq!(s.train_neighbors(0).len(), 4);
        let adj = build_normalized_adjacency(&s);
        for (_, w) in adj.row(0) {
            assert_eq!(w, 0.5);
        }
    }

    #[test]
    fn adjacency_matches_dense_oracle() {
        // random-ish 10x10 bipartite graph, fixed pattern
        let mut edges = Vec::new();
        for u in 0..10u32 {
            for v in 0..10u32 {
                if (u * 7 + v * 3) % 4 == 0 {
                    edges.push((u, v));
                }
            }
        }
        let g = BipartiteGraph::from_edges(10, 10, &edges).unwrap();
        let s = split_dataset(&g, 0.8, 3).unwrap();
        let adj = build_normalized_adjacency(&s);

        // dense oracle: D^{-1/2} A D^{-1/2} over the 20-node space
        let n = 20usize;
        let mut dense = vec![0.0f64; n * n];
        let mut deg = vec![0usize; n];
        for &(u, v) in s.train_edges() {
            deg[u as usize] += 1;
            deg[10 + v as usize] += 1;
        }
        for &(u, v) in s.train_edges() {
            let (x, y) = (u as usize, 10 + v as usize);
            let w = 1.0 / ((deg[x] as f64).sqrt() * (deg[y] as f64).sqrt());
            dense[x * n + y] = w;
            dense[y * n + x] = w;
        }
        for i in 0..n {
            let mut sparse_row = vec![0.0f64; n];
            for (c, w) in adj.row(i) {
                sparse_row[c as usize] = w;
            }
            for j in 0..n {
                assert!((sparse_row[j] - dense[i * n + j]).abs() < 1e-12);
            }
        }

        // multiply against the dense oracle on a deterministic input
        let d = 3usize;
        let x: Vec<f64> = (0..n * d).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let mut out = vec![0.0; n * d];
        adj.multiply(&x, d, &mut out);
        for i in 0..n {
            for k in 0..d {
                let mut want = 0.0;
                for j in 0..n {
                    want += dense[i * n + j] * x[j * d + k];
                }
                assert!((out[i * d + k] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn row_sums_respect_cauchy_schwarz_bound() {
        let mut edges = Vec::new();
        for u in 0..15u32 {
            for v in 0..9u32 {
                if (u + 2 * v) % 3 == 0 {
                    edges.push((u, v));
                }
            }
        }
        let g = BipartiteGraph::from_edges(15, 9, &edges).unwrap();
        let s = split_dataset(&g, 0.8, 11).unwrap();
        let adj = build_normalized_adjacency(&s);
        let mut deg = vec![0usize; s.num_nodes()];
        for &(u, v) in s.train_edges() {
            deg[u as usize] += 1;
            deg[s.global_dest(v)] += 1;
        }
        for (i, &degree) in deg.iter().enumerate() {
            let sum: f64 = adj.row(i).map(|(_, w)| w).sum();
            assert!(sum <= (degree as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn degree_one_row_sums_to_inverse_root_of_neighbor_degree() {
        // destination 0 has the single neighbor u0, whose train degree is 4
        let g = BipartiteGraph::from_edges(1, 4, &[(0, 0), (0, 1), (0, 2), (0, 3)]).unwrap();
        let s = split_dataset(&g, 0.9, 0).unwrap();
        let adj = build_normalized_adjacency(&s);
        for v in 0..4usize {
            let sum: f64 = adj.row(1 + v).map(|(_, w)| w).sum();
            assert!((sum - 1.0 / 4.0f64.sqrt()).abs() < 1e-12);
        }
    }
}
