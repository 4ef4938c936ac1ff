//! Line-oriented `key = value` run configuration with flag overrides.
//!
//! Precedence: command-line flag, then config file entry, then built-in
//! default. Every command writes its fully resolved configuration next to
//! its outputs so a run can be reproduced from that file alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sgbh_core::{ModelConfig, TrainConfig, TrainMode};

/// Raw key/value pairs from a config file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    values.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    return Err(format!(
                        "{}:{}: expected `key = value`, got {line:?}",
                        path.display(),
                        idx + 1
                    ));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config key {key}: cannot parse {raw:?}")),
        }
    }
}

/// Fully resolved run parameters shared by the subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: TrainMode,
    pub dim: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub gamma: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub lambda: f64,
    pub centers: usize,
    pub kmeans_iters: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub fourier_h: f64,
    pub fourier_terms: usize,
}

/// Optional overrides collected from command-line flags.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub mode: Option<String>,
    pub dim: Option<usize>,
    pub layers: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub lambda: Option<f64>,
    pub centers: Option<usize>,
    pub kmeans_iters: Option<usize>,
    pub eval_every: Option<usize>,
    pub patience: Option<usize>,
    pub split_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub fourier_h: Option<f64>,
    pub fourier_terms: Option<usize>,
}

macro_rules! resolve {
    ($flags:expr, $file:expr, $field:ident, $key:literal, $default:expr) => {
        match $flags.$field {
            Some(v) => v,
            None => $file.parsed($key)?.unwrap_or($default),
        }
    };
}

impl RunConfig {
    pub fn resolve(flags: &Overrides, file: &ConfigFile) -> Result<Self, String> {
        let mode_str = match &flags.mode {
            Some(m) => m.clone(),
            None => file.get("mode").unwrap_or("sgbgh").to_string(),
        };
        let mode = TrainMode::parse(&mode_str).map_err(|e| e.to_string())?;
        Ok(Self {
            mode,
            dim: resolve!(flags, file, dim, "dim", 64),
            layers: resolve!(flags, file, layers, "layers", 2),
            epochs: resolve!(flags, file, epochs, "epochs", 400),
            batch_size: resolve!(flags, file, batch_size, "batch_size", 4096),
            learning_rate: resolve!(flags, file, learning_rate, "learning_rate", 0.001),
            tau: resolve!(flags, file, tau, "tau", 0.2),
            gamma: resolve!(flags, file, gamma, "gamma", 0.5),
            beta0: resolve!(flags, file, beta0, "beta0", 1.0),
            beta1: resolve!(flags, file, beta1, "beta1", 1.0),
            lambda: resolve!(flags, file, lambda, "lambda", 0.001),
            centers: resolve!(flags, file, centers, "centers", 64),
            kmeans_iters: resolve!(flags, file, kmeans_iters, "kmeans_iters", 20),
            eval_every: resolve!(flags, file, eval_every, "eval_every", 1),
            patience: resolve!(flags, file, patience, "patience", 10),
            split_ratio: resolve!(flags, file, split_ratio, "split_ratio", 0.8),
            seed: resolve!(flags, file, seed, "seed", 0),
            fourier_h: resolve!(flags, file, fourier_h, "fourier_h", 3.0),
            fourier_terms: resolve!(flags, file, fourier_terms, "fourier_terms", 11),
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.dim, self.layers, self.seed);
        cfg.fourier_h = self.fourier_h;
        cfg.fourier_terms = self.fourier_terms;
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.mode, self.seed);
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg.epochs = self.epochs;
        cfg.tau = self.tau;
        cfg.gamma = self.gamma;
        cfg.beta0 = self.beta0;
        cfg.beta1 = self.beta1;
        cfg.lambda = self.lambda;
        cfg.num_centers = self.centers;
        cfg.kmeans_iters = self.kmeans_iters;
        cfg.eval_every = self.eval_every;
        cfg.patience = self.patience;
        cfg
    }

    /// `key = value` rendering of every resolved parameter.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode = {}", self.mode.as_str());
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "layers = {}", self.layers);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(out, "tau = {}", self.tau);
        let _ = writeln!(out, "gamma = {}", self.gamma);
        let _ = writeln!(out, "beta0 = {}", self.beta0);
        let _ = writeln!(out, "beta1 = {}", self.beta1);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "centers = {}", self.centers);
        let _ = writeln!(out, "kmeans_iters = {}", self.kmeans_iters);
        let _ = writeln!(out, "eval_every = {}", self.eval_every);
        let _ = writeln!(out, "patience = {}", self.patience);
        let _ = writeln!(out, "split_ratio = {}", self.split_ratio);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "fourier_h = {}", self.fourier_h);
        let _ = writeln!(out, "fourier_terms = {}", self.fourier_terms);
        out
    }
}
