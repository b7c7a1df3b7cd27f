//! Run configuration: flat `key = value` text, one pair per line, `#`
//! starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_sbm, load_graph, AttributedGraph, SbmParams};
use crate::scalar::Real;

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: Option<PathBuf>,
    },
    Synthetic(SbmParams),
}

impl DataSource {
    pub fn load<T: Real>(&self) -> Result<AttributedGraph<T>> {
        match self {
            DataSource::Files {
                edges,
                features,
                labels,
            } => load_graph(edges, features, labels.as_deref()),
            DataSource::Synthetic(p) => generate_sbm(p),
        }
    }
}

/// The four-block planted partition used as the default dataset.
pub fn default_sbm() -> SbmParams {
    SbmParams {
        blocks: 4,
        nodes_per_block: 50,
        p_in: 0.5,
        p_out: 0.01,
        feature_dim: 16,
        mean_separation: 4.0,
        seed: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    /// Smoothing hops `t`.
    pub hops: usize,
    pub latent_dim: usize,
    /// Hidden width of each encoder view; `None` means a single linear layer.
    pub encoder_hidden: Option<usize>,
    pub quality_hidden: usize,
    /// Largest cluster number the controller may choose (`N_K`).
    pub max_k: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub buffer_capacity: usize,
    pub encoder_epochs: usize,
    pub quality_epochs: usize,
    pub lr_encoder: f64,
    pub lr_quality: f64,
    pub temperature: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub seed: u64,
    /// Write the final fused embedding next to the run record.
    pub export_embedding: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(default_sbm()),
            hops: 2,
            latent_dim: 64,
            encoder_hidden: None,
            quality_hidden: 32,
            max_k: 10,
            alpha: 10.0,
            gamma: 0.1,
            epsilon_initial: 0.5,
            epsilon_final: 1.0,
            buffer_capacity: 40,
            encoder_epochs: 400,
            quality_epochs: 30,
            lr_encoder: 1e-3,
            lr_quality: 1e-3,
            temperature: 1.0,
            kmeans_restarts: 10,
            kmeans_max_iters: 100,
            seed: 0,
            export_embedding: false,
        }
    }
}

pub const MAX_HOPS: usize = 5;

const SBM_KEYS: [&str; 7] = [
    "sbm_blocks",
    "sbm_per_block",
    "sbm_p_in",
    "sbm_p_out",
    "sbm_dim",
    "sbm_sep",
    "sbm_seed",
];

fn parse_value<V: FromStr>(key: &str, value: &str, line: usize) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: invalid value '{value}' for '{key}'"
        ))),
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be >= 1")))
    }
}

impl RunConfig {
    /// Parses config text. Relative data paths are resolved against `base`.
    /// Keys not given keep their defaults.
    pub fn parse_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut sbm = default_sbm();
        let mut sbm_seen = false;
        let mut edges = None;
        let mut features = None;
        let mut labels = None;
        let resolve = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line}: expected key = value, got '{content}'"
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if SBM_KEYS.contains(&key) {
                sbm_seen = true;
            }
            match key {
                "edges" => edges = Some(resolve(value)),
                "features" => features = Some(resolve(value)),
                "labels" => labels = Some(resolve(value)),
                "sbm_blocks" => sbm.blocks = parse_value(key, value, line)?,
                "sbm_per_block" => sbm.nodes_per_block = parse_value(key, value, line)?,
                "sbm_p_in" => sbm.p_in = parse_value(key, value, line)?,
                "sbm_p_out" => sbm.p_out = parse_value(key, value, line)?,
                "sbm_dim" => sbm.feature_dim = parse_value(key, value, line)?,
                "sbm_sep" => sbm.mean_separation = parse_value(key, value, line)?,
                "sbm_seed" => sbm.seed = parse_value(key, value, line)?,
                "hops" => cfg.hops = parse_value(key, value, line)?,
                "latent_dim" => cfg.latent_dim = parse_value(key, value, line)?,
                "encoder_hidden" => {
                    let h: usize = parse_value(key, value, line)?;
                    cfg.encoder_hidden = (h > 0).then_some(h);
                }
                "quality_hidden" => cfg.quality_hidden = parse_value(key, value, line)?,
                "max_k" => cfg.max_k = parse_value(key, value, line)?,
                "alpha" => cfg.alpha = parse_value(key, value, line)?,
                "gamma" => cfg.gamma = parse_value(key, value, line)?,
                "epsilon_initial" => cfg.epsilon_initial = parse_value(key, value, line)?,
                "epsilon_final" => cfg.epsilon_final = parse_value(key, value, line)?,
                "buffer_capacity" => cfg.buffer_capacity = parse_value(key, value, line)?,
                "encoder_epochs" => cfg.encoder_epochs = parse_value(key, value, line)?,
                "quality_epochs" => cfg.quality_epochs = parse_value(key, value, line)?,
                "lr_encoder" => cfg.lr_encoder = parse_value(key, value, line)?,
                "lr_quality" => cfg.lr_quality = parse_value(key, value, line)?,
                "temperature" => cfg.temperature = parse_value(key, value, line)?,
                "kmeans_restarts" => cfg.kmeans_restarts = parse_value(key, value, line)?,
                "kmeans_max_iters" => cfg.kmeans_max_iters = parse_value(key, value, line)?,
                "seed" => cfg.seed = parse_value(key, value, line)?,
                "export_embedding" => cfg.export_embedding = parse_bool(key, value, line)?,
                other => return Err(Error::Config(format!("line {line}: unknown key '{other}'"))),
            }
        }
        let any_file = edges.is_some() || features.is_some() || labels.is_some();
        cfg.data = match (edges, features) {
            (Some(edges), Some(features)) if !sbm_seen => DataSource::Files {
                edges,
                features,
                labels,
            },
            _ if any_file && sbm_seen => {
                return Err(Error::Config(
                    "file data keys and sbm_* keys are mutually exclusive".into(),
                ))
            }
            (None, None) if labels.is_none() => DataSource::Synthetic(sbm),
            _ => {
                return Err(Error::Config(
                    "'edges' and 'features' must be given together".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path.parent())
    }

    /// Serializes back into the key = value format; parsing the output gives
    /// an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        match &self.data {
            DataSource::Files {
                edges,
                features,
                labels,
            } => {
                let _ = writeln!(s, "edges = {}", edges.display());
                let _ = writeln!(s, "features = {}", features.display());
                if let Some(l) = labels {
                    let _ = writeln!(s, "labels = {}", l.display());
                }
            }
            DataSource::Synthetic(p) => {
                let _ = writeln!(s, "sbm_blocks = {}", p.blocks);
                let _ = writeln!(s, "sbm_per_block = {}", p.nodes_per_block);
                let _ = writeln!(s, "sbm_p_in = {:?}", p.p_in);
                let _ = writeln!(s, "sbm_p_out = {:?}", p.p_out);
                let _ = writeln!(s, "sbm_dim = {}", p.feature_dim);
                let _ = writeln!(s, "sbm_sep = {:?}", p.mean_separation);
                let _ = writeln!(s, "sbm_seed = {}", p.seed);
            }
        }
        let _ = writeln!(s, "hops = {}", self.hops);
        let _ = writeln!(s, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(s, "encoder_hidden = {}", self.encoder_hidden.unwrap_or(0));
        let _ = writeln!(s, "quality_hidden = {}", self.quality_hidden);
        let _ = writeln!(s, "max_k = {}", self.max_k);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "epsilon_initial = {:?}", self.epsilon_initial);
        let _ = writeln!(s, "epsilon_final = {:?}", self.epsilon_final);
        let _ = writeln!(s, "buffer_capacity = {}", self.buffer_capacity);
        let _ = writeln!(s, "encoder_epochs = {}", self.encoder_epochs);
        let _ = writeln!(s, "quality_epochs = {}", self.quality_epochs);
        let _ = writeln!(s, "lr_encoder = {:?}", self.lr_encoder);
        let _ = writeln!(s, "lr_quality = {:?}", self.lr_quality);
        let _ = writeln!(s, "temperature = {:?}", self.temperature);
        let _ = writeln!(s, "kmeans_restarts = {}", self.kmeans_restarts);
        let _ = writeln!(s, "kmeans_max_iters = {}", self.kmeans_max_iters);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "export_embedding = {}", self.export_embedding);
        s
    }

    /// Replaces the seed with `value` when present (the `RGC_SEED` override).
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("RGC_SEED: invalid seed '{v}'")))?;
        }
        Ok(())
    }

    /// Range checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.hops > MAX_HOPS {
            return Err(Error::Config(format!(
                "hops = {} exceeds {MAX_HOPS}",
                self.hops
            )));
        }
        at_least_one("latent_dim", self.latent_dim)?;
        at_least_one("quality_hidden", self.quality_hidden)?;
        at_least_one("buffer_capacity", self.buffer_capacity)?;
        at_least_one("encoder_epochs", self.encoder_epochs)?;
        at_least_one("kmeans_restarts", self.kmeans_restarts)?;
        at_least_one("kmeans_max_iters", self.kmeans_max_iters)?;
        if self.max_k < 2 {
            return Err(Error::Config(format!(
                "max_k = {} must be >= 2",
                self.max_k
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma = {} outside [0, 1]",
                self.gamma
            )));
        }
        if !unit.contains(&self.epsilon_initial) || !unit.contains(&self.epsilon_final) {
            return Err(Error::Config("epsilon values must lie in [0, 1]".into()));
        }
        if self.epsilon_final < self.epsilon_initial {
            return Err(Error::Config(
                "epsilon_final must be >= epsilon_initial".into(),
            ));
        }
        positive("lr_encoder", self.lr_encoder)?;
        positive("lr_quality", self.lr_quality)?;
        positive("temperature", self.temperature)?;
        if let DataSource::Synthetic(p) = &self.data {
            if p.blocks == 0 || p.nodes_per_block == 0 || p.feature_dim == 0 {
                return Err(Error::Config("sbm sizes must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Checks that depend on the loaded graph.
    pub fn validate_for<T: Real>(&self, g: &AttributedGraph<T>) -> Result<()> {
        self.validate()?;
        if g.n() < self.max_k {
            return Err(Error::Config(format!(
                "max_k = {} exceeds the node count {}",
                self.max_k,
                g.n()
            )));
        }
        Ok(())
    }

    /// Config equality up to the seed.
    pub fn same_except_seed(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.seed = other.seed;
        a == *other
    }
}
