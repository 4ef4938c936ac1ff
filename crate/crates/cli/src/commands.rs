use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sgbh_core::{
    evaluate, forward, hit_edge_set, layer_hamming_stats, layer_mean, load_codebook,
    load_edge_list, planted_blocks, save_codebook, similarity_stats_csv, split_dataset,
    topk_search, train, train_log_csv, write_edge_list, Error, LayerCodes, OpCounter,
    PackedCodebook, PairKind, SynthSpec,
};

use crate::config::RunConfig;

/// Failure with the exit code it maps to: 2 for usage/config problems,
/// 1 for runtime failures.
#[derive(Debug)]
pub enum CmdError {
    Usage(String),
    Runtime(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Runtime(m) => m,
        }
    }
}

pub fn usage(e: impl std::fmt::Display) -> CmdError {
    CmdError::Usage(e.to_string())
}

pub fn runtime(e: impl std::fmt::Display) -> CmdError {
    CmdError::Runtime(e.to_string())
}

/// Variant-based classification for errors bubbling out of the pipeline.
fn classify(e: Error) -> CmdError {
    match e {
        Error::Config(_)
        | Error::BadSplitRatio(_)
        | Error::IsolatedSource(_)
        | Error::TooManyClusters { .. }
        | Error::SizeMismatch { .. } => usage(e),
        other => runtime(other),
    }
}

fn ensure_out_dir(out: &Path) -> Result<(), CmdError> {
    fs::create_dir_all(out).map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CmdError> {
    fs::write(path, content).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_inputs(
    edges: &Path,
    cfg: &RunConfig,
) -> Result<(sgbh_core::BipartiteGraph, sgbh_core::IdMapping, sgbh_core::DatasetSplit), CmdError> {
    let (graph, mapping) = load_edge_list(edges).map_err(usage)?;
    let split = split_dataset(&graph, cfg.split_ratio, cfg.seed).map_err(usage)?;
    Ok((graph, mapping, split))
}

fn check_sizes(cb: &PackedCodebook, split: &sgbh_core::DatasetSplit) -> Result<(), CmdError> {
    if cb.num_nodes() != split.num_nodes() || cb.num_sources() != split.num_sources() {
        return Err(usage(Error::SizeMismatch {
            codebook: cb.num_nodes(),
            graph: split.num_nodes(),
        }));
    }
    Ok(())
}

pub fn cmd_train(edges: &Path, out: &Path, cfg: &RunConfig) -> Result<(), CmdError> {
    ensure_out_dir(out)?;
    let (_, mapping, split) = load_inputs(edges, cfg)?;
    write_file(&out.join("resolved.conf"), &cfg.render())?;
    mapping
        .write_sidecars(&out.join("source_ids.tsv"), &out.join("dest_ids.tsv"))
        .map_err(runtime)?;

    let model_cfg = cfg.model_config();
    let train_cfg = cfg.train_config();
    let outcome = train(&split, &model_cfg, &train_cfg).map_err(classify)?;

    write_file(&out.join("train_log.csv"), &train_log_csv(&outcome.log))?;

    let adj = sgbh_core::build_normalized_adjacency(&split);
    let (_, fin) = forward(&outcome.table, &adj, &model_cfg, split.num_sources()).map_err(runtime)?;
    let cb = PackedCodebook::from_final(&fin);
    save_codebook(&cb, &out.join("codebook.sgbh")).map_err(runtime)?;

    let last = outcome.log.last();
    println!(
        "trained {} epochs (mode {}), final loss {:.6}, best recall@20 {}",
        outcome.log.len(),
        cfg.mode.as_str(),
        last.map(|l| l.total).unwrap_or(f64::NAN),
        outcome
            .best_recall20
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    println!("codebook: {}", out.join("codebook.sgbh").display());
    Ok(())
}

pub fn cmd_eval(codebook: &Path, edges: &Path, out: &Path, cfg: &RunConfig) -> Result<(), CmdError> {
    ensure_out_dir(out)?;
    let cb = load_codebook(codebook).map_err(usage)?;
    let (_, _, split) = load_inputs(edges, cfg)?;
    check_sizes(&cb, &split)?;
    write_file(&out.join("resolved.conf"), &cfg.render())?;

    let ks = [20, 40, 60, 80, 100];
    let report = evaluate(&cb, &split, &ks, true).map_err(classify)?;
    write_file(&out.join("metrics.csv"), &report.to_csv())?;
    for (i, k) in report.ks.iter().enumerate() {
        println!("recall@{k} = {:.6}  ndcg@{k} = {:.6}", report.recall[i], report.ndcg[i]);
    }
    println!("evaluated {} sources", report.evaluated_sources);
    Ok(())
}

pub fn cmd_diagnose(
    codebook: &Path,
    edges: &Path,
    out: &Path,
    cfg: &RunConfig,
    groups: usize,
    neg_samples: usize,
    top: usize,
) -> Result<(), CmdError> {
    ensure_out_dir(out)?;
    let cb = load_codebook(codebook).map_err(usage)?;
    let (_, _, split) = load_inputs(edges, cfg)?;
    check_sizes(&cb, &split)?;
    write_file(&out.join("resolved.conf"), &cfg.render())?;

    let hits = hit_edge_set(&cb, &split, top).map_err(classify)?;
    let codes = LayerCodes::from_codebook(&cb);
    let stats = layer_hamming_stats(&codes, &split, &hits, groups, neg_samples, cfg.seed);
    write_file(&out.join("similarity.csv"), &similarity_stats_csv(&stats))?;

    println!("hit edges: {} of {} test edges", hits.len(), split.test_edges().len());
    for l in 0..codes.num_layers() {
        let nb = layer_mean(&stats, l, PairKind::Neighbor)
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "n/a".into());
        let non = layer_mean(&stats, l, PairKind::NonNeighbor)
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "n/a".into());
        println!("layer {l}: neighbor sim {nb}, non-neighbor sim {non}");
    }
    Ok(())
}

pub enum QuerySpec {
    Explicit(Vec<u32>),
    Random(usize),
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_search(
    codebook: &Path,
    out: &Path,
    cfg: &RunConfig,
    queries: QuerySpec,
    k: usize,
    edges: Option<&Path>,
    exclude_train: bool,
) -> Result<(), CmdError> {
    ensure_out_dir(out)?;
    let cb = load_codebook(codebook).map_err(usage)?;
    let split = match (edges, exclude_train) {
        (Some(path), true) => {
            let (_, _, split) = load_inputs(path, cfg)?;
            check_sizes(&cb, &split)?;
            Some(split)
        }
        (None, true) => {
            return Err(usage("--exclude-train needs --edges to reconstruct the split"));
        }
        _ => None,
    };
    write_file(&out.join("resolved.conf"), &cfg.render())?;

    let ids: Vec<u32> = match queries {
        QuerySpec::Explicit(ids) => ids,
        QuerySpec::Random(n) => {
            use rand::Rng;
            let mut rng = sgbh_core::rng::stream(cfg.seed, "queries");
            (0..n).map(|_| rng.gen_range(0..cb.num_sources())).collect()
        }
    };

    let mut tsv = String::new();
    let mut totals = OpCounter::default();
    let t0 = Instant::now();
    for &q in &ids {
        let exclude: &[u32] = match (&split, q < cb.num_sources()) {
            (Some(s), true) => s.train_neighbors(q),
            _ => &[],
        };
        let mut counter = OpCounter::default();
        match topk_search(&cb, q, k, exclude, &mut counter) {
            Ok(res) => {
                totals.merge(counter);
                for (rank0, (dest, score)) in res.entries.iter().enumerate() {
                    let _ = writeln!(tsv, "{q}\t{}\t{dest}\t{score:.6}", rank0 + 1);
                }
            }
            Err(e) => {
                let _ = writeln!(tsv, "{q}\terror\t{e}\t");
            }
        }
    }
    let ms = t0.elapsed().as_millis();
    write_file(&out.join("results.tsv"), &tsv)?;
    println!("flops={} bops={} ms={}", totals.flops, totals.bops, ms);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    out: &Path,
    file_name: &str,
    blocks: usize,
    sources: u32,
    destinations: u32,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<PathBuf, CmdError> {
    ensure_out_dir(out)?;
    let spec = SynthSpec {
        blocks,
        num_sources: sources,
        num_destinations: destinations,
        p_in,
        p_out,
        seed,
    };
    let graph = planted_blocks(&spec).map_err(classify)?;
    let path = out.join(file_name);
    write_edge_list(&graph, &path).map_err(runtime)?;

    let mut conf = String::new();
    let _ = writeln!(conf, "blocks = {blocks}");
    let _ = writeln!(conf, "sources = {sources}");
    let _ = writeln!(conf, "destinations = {destinations}");
    let _ = writeln!(conf, "p_in = {p_in}");
    let _ = writeln!(conf, "p_out = {p_out}");
    let _ = writeln!(conf, "seed = {seed}");
    write_file(&out.join("resolved.conf"), &conf)?;

    println!(
        "wrote {} ({} sources x {} destinations, {} edges)",
        path.display(),
        graph.num_sources(),
        graph.num_destinations(),
        graph.num_edges()
    );
    Ok(path)
}
