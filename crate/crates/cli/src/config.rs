//! Experiment configuration schema (JSON) and validation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use psketch_core::embed::EmbeddingSpec;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "distort")]
    Distort,
    #[serde(rename = "tails")]
    Tails,
    #[serde(rename = "hardstress")]
    HardStress,
    #[serde(rename = "rankdrop")]
    RankDrop,
    #[serde(rename = "regress")]
    Regress,
    #[serde(rename = "sweep")]
    Sweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Distort => "distort",
            ExperimentKind::Tails => "tails",
            ExperimentKind::HardStress => "hardstress",
            ExperimentKind::RankDrop => "rankdrop",
            ExperimentKind::Regress => "regress",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

/// What matrix each trial measures against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstanceConfig {
    /// Dense i.i.d. standard Gaussian, n x d.
    Gaussian { n: usize, d: usize },
    /// A draw from the adversarial column-role distribution.
    Hard { n: usize, d: usize },
    /// Matrices loaded from disk; `.mtx` files parse as sparse, anything
    /// else as dense text. `b` is only used by regression experiments.
    Files { a: PathBuf, b: Option<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionMetric {
    ExactL2,
    Empirical,
}

/// One tail event to measure in a `tails` experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailKindConfig {
    CauchySumUpper,
    #[serde(rename = "pstable_sum_lower")]
    PStableSumLower {
        #[serde(rename = "T")]
        t: f64,
    },
    WeightedGaussian { a: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailsConfig {
    pub n: usize,
    pub p: f64,
    pub mc_trials: u64,
    pub kinds: Vec<TailKindConfig>,
}

fn default_trials() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceConfig>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Witness budget for empirical distortion runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<DistortionMetric>,
    /// Norm exponent override for distortion / regression.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tails: Option<TailsConfig>,
    /// Subspace dimensions for hardstress (n = n_per_d * d each).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_d: Option<usize>,
    /// Row-sample size for the precondition-sample-solve pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_t: Option<f64>,
    /// Directory for per-trial extreme witness vectors (dense text),
    /// written by distortion experiments when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_out: Option<PathBuf>,
    /// Regression experiments: also measure (alpha, beta) of the
    /// preconditioned basis and report the product columns.
    #[serde(default)]
    pub measure_conditioning: bool,
    /// Sweep: named parameter grids applied over `base`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<BTreeMap<String, Vec<serde_json::Value>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<ExperimentConfig>>,
    /// CI mode: spot-check that 5 random rows replay byte-identically.
    #[serde(default)]
    pub ci: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config JSON: {e}"))
    }

    /// Validates the whole config, returning every failure at once.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.trials < 1 {
            errs.push("trials must be at least 1".into());
        }
        match self.kind {
            ExperimentKind::Distort => {
                if self.embedding.is_none() {
                    errs.push("distort requires an embedding spec".into());
                }
                if self.instance.is_none() {
                    errs.push("distort requires an instance".into());
                }
                if let Some(b) = self.budget {
                    if b == 0 {
                        errs.push("budget must be positive".into());
                    }
                }
            }
            ExperimentKind::Tails => {
                match &self.tails {
                    None => errs.push("tails requires a tails section".into()),
                    Some(t) => {
                        if t.kinds.is_empty() {
                            errs.push("tails.kinds must be nonempty".into());
                        }
                        if t.mc_trials < 100 {
                            errs.push("tails.mc_trials must be at least 100".into());
                        }
                        if !(1.0..=2.0).contains(&t.p) {
                            errs.push(format!("tails.p must be in [1, 2], got {}", t.p));
                        }
                    }
                }
            }
            ExperimentKind::HardStress => {
                if self.embedding.is_none() {
                    errs.push("hardstress requires an embedding spec".into());
                }
                match &self.d_grid {
                    None => errs.push("hardstress requires d_grid".into()),
                    Some(g) if g.is_empty() => errs.push("d_grid must be nonempty".into()),
                    _ => {}
                }
                if self.n_per_d.is_none() {
                    errs.push("hardstress requires n_per_d".into());
                }
            }
            ExperimentKind::RankDrop => {
                if self.embedding.is_none() {
                    errs.push("rankdrop requires an embedding spec".into());
                }
                match &self.instance {
                    Some(InstanceConfig::Gaussian { .. }) => {}
                    _ => errs.push("rankdrop requires a gaussian instance".into()),
                }
            }
            ExperimentKind::Regress => {
                if self.embedding.is_none() {
                    errs.push("regress requires an embedding spec template".into());
                }
                match &self.instance {
                    Some(InstanceConfig::Gaussian { n, d }) => {
                        if n < d {
                            errs.push("regression instance needs n >= d".into());
                        }
                    }
                    Some(InstanceConfig::Files { .. }) => {}
                    _ => errs.push("regress requires a gaussian or files instance".into()),
                }
                if let Some(p) = self.p {
                    if !(1.0..=2.0).contains(&p) {
                        errs.push(format!("p must be in [1, 2], got {p}"));
                    }
                }
            }
            ExperimentKind::Sweep => {
                match &self.base {
                    None => errs.push("sweep requires a base config".into()),
                    Some(base) => {
                        if base.kind == ExperimentKind::Sweep {
                            errs.push("sweep cannot nest".into());
                        } else if let Err(inner) = base.validate() {
                            errs.extend(inner.into_iter().map(|e| format!("base: {e}")));
                        }
                    }
                }
                match &self.grid {
                    None => errs.push("sweep requires a grid".into()),
                    Some(grid) => {
                        if grid.is_empty() {
                            errs.push("grid must be nonempty".into());
                        }
                        let product: usize = grid
                            .values()
                            .map(|v| v.len().max(1))
                            .fold(1usize, |acc, len| acc.saturating_mul(len));
                        if product > 1_000_000 {
                            errs.push(format!("grid product {product} exceeds the 10^6 guard"));
                        }
                        for key in grid.keys() {
                            if !SWEEPABLE_KEYS.contains(&key.as_str()) {
                                errs.push(format!(
                                    "unknown grid key '{key}'; known: {SWEEPABLE_KEYS:?}"
                                ));
                            }
                        }
                    }
                }
            }
        }
        // Shared embedding sanity where present (full validation happens at
        // build time with instance-sized n and d).
        if let Some(spec) = &self.embedding {
            if !(1.0..=2.0).contains(&spec.p) {
                errs.push(format!("embedding.p must be in [1, 2], got {}", spec.p));
            }
            if !(spec.row_const > 0.0) {
                errs.push("embedding.row_const must be positive".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

pub const SWEEPABLE_KEYS: [&str; 9] = [
    "n",
    "d",
    "B",
    "eps",
    "alpha",
    "row_const",
    "sample_t",
    "budget",
    "trials",
];

/// Applies one grid assignment onto a copy of the base config.
pub fn apply_grid_point(
    base: &ExperimentConfig,
    point: &BTreeMap<String, serde_json::Value>,
) -> Result<ExperimentConfig, String> {
    let mut cfg = base.clone();
    for (key, value) in point {
        let as_f64 = value.as_f64();
        let as_usize = value.as_u64().map(|v| v as usize);
        match key.as_str() {
            "n" | "d" => {
                let v = as_usize.ok_or_else(|| format!("grid {key} must be an integer"))?;
                match (&mut cfg.instance, key.as_str()) {
                    (Some(InstanceConfig::Gaussian { n, .. }), "n")
                    | (Some(InstanceConfig::Hard { n, .. }), "n") => *n = v,
                    (Some(InstanceConfig::Gaussian { d, .. }), "d")
                    | (Some(InstanceConfig::Hard { d, .. }), "d") => *d = v,
                    _ => return Err(format!("grid {key} needs a gaussian or hard instance")),
                }
            }
            "B" => {
                let spec = cfg.embedding.as_mut().ok_or("grid B needs an embedding")?;
                spec.b = Some(as_f64.ok_or("grid B must be a number")?);
            }
            "eps" => {
                let spec = cfg.embedding.as_mut().ok_or("grid eps needs an embedding")?;
                spec.eps = Some(as_f64.ok_or("grid eps must be a number")?);
            }
            "alpha" => {
                let spec = cfg
                    .embedding
                    .as_mut()
                    .ok_or("grid alpha needs an embedding")?;
                spec.alpha = Some(as_f64.ok_or("grid alpha must be a number")?);
            }
            "row_const" => {
                let spec = cfg
                    .embedding
                    .as_mut()
                    .ok_or("grid row_const needs an embedding")?;
                spec.row_const = as_f64.ok_or("grid row_const must be a number")?;
            }
            "sample_t" => cfg.sample_t = Some(as_f64.ok_or("grid sample_t must be a number")?),
            "budget" => {
                cfg.budget = Some(as_usize.ok_or("grid budget must be an integer")?);
            }
            "trials" => {
                cfg.trials = value.as_u64().ok_or("grid trials must be an integer")?;
            }
            other => return Err(format!("unknown grid key '{other}'")),
        }
    }
    Ok(cfg)
}
