//! Flat TOML run configuration.
//!
//! Every key is optional; see [`RunConfig`] for names and defaults. CLI
//! overrides are `key=value` pairs whose value is read as a TOML value and
//! falls back to a plain string.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    LeastSquares,
    SparseLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Support,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Seq,
    Filtered,
    Batch,
    Parallel,
    DelaySim,
    DelaySimGrowing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Classic,
    TheoremSgd,
    Hogwild,
    HogwildAs,
    Power,
    Stepped,
    Constant,
    GrowingTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRuleKind {
    Constant,
    Stepped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauGrowthKind {
    Constant,
    SqrtLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    AllIn,
    NoneIn,
    Bernoulli,
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Iid,
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    None,
    Theorem2,
    Hogwild,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    None,
    /// `v ∈ {1, 3/4, 2/3, 1/2, 1/3, 1/4}` at `τ = 10`.
    Fractions,
    /// Every value of `sweep_taus`.
    Taus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // problem
    /// Sparse text file (`.gz` accepted). Exclusive with `synthetic`.
    pub dataset: Option<String>,
    pub synthetic: Option<SyntheticKind>,
    /// Feature-space size override for `dataset`.
    pub dim: Option<usize>,
    pub subsample: Option<usize>,
    pub subsample_seed: u64,
    pub objective: LossKind,
    /// Defaults to `1/n`; synthetic least squares always uses 0.
    pub lambda: Option<f64>,
    pub reg_scope: ScopeKind,

    // synthetic generators
    pub syn_dim: usize,
    pub syn_n: usize,
    pub syn_nnz: usize,
    pub syn_norm_sq: f64,
    pub syn_flip: f64,
    pub syn_mu: f64,
    pub syn_l: f64,
    pub syn_delta: f64,
    pub syn_rotate: bool,
    pub syn_seed: u64,

    // engine
    pub engine: EngineKind,
    pub workers: usize,
    pub batch_k: usize,
    pub batch_sampling: SamplingKind,
    #[serde(rename = "D")]
    pub d: usize,
    /// Uniform-fraction filter `v`; replaces the partition filter when set.
    pub fraction: Option<f64>,
    pub tau: u64,
    pub tau_growth: TauGrowthKind,
    pub mask: MaskKind,
    pub mask_p: f64,

    // schedule
    pub schedule: ScheduleKind,
    pub alpha: Option<f64>,
    pub alpha_rule: AlphaRuleKind,
    pub alpha_t: Option<f64>,
    pub eta0: Option<f64>,
    pub t0: Option<f64>,
    pub beta: Option<f64>,
    pub k_offset: Option<f64>,
    pub q: Option<f64>,
    pub k: Option<f64>,
    pub e: Option<f64>,
    pub eta: Option<f64>,
    pub nonconvex: bool,

    // run
    pub iterations: Option<u64>,
    /// Used when `iterations` is unset; one epoch is `n` iterations.
    pub epochs: Option<f64>,
    pub seeds: Vec<u64>,
    /// 0 selects `max(1, n/10)`.
    pub record_every: u64,
    pub bound: BoundKind,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub divergence_limit: f64,
    pub out: String,
    pub sweep: SweepKind,
    pub sweep_taus: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            synthetic: None,
            dim: None,
            subsample: None,
            subsample_seed: 1,
            objective: LossKind::Logistic,
            lambda: None,
            reg_scope: ScopeKind::Support,
            syn_dim: 10,
            syn_n: 5000,
            syn_nnz: 10,
            syn_norm_sq: 0.24,
            syn_flip: 0.1,
            syn_mu: 0.1,
            syn_l: 1.0,
            syn_delta: 0.5,
            syn_rotate: true,
            syn_seed: 0,
            engine: EngineKind::Filtered,
            workers: 1,
            batch_k: 1,
            batch_sampling: SamplingKind::Iid,
            d: 1,
            fraction: None,
            tau: 0,
            tau_growth: TauGrowthKind::Constant,
            mask: MaskKind::Bernoulli,
            mask_p: 0.5,
            schedule: ScheduleKind::Hogwild,
            alpha: None,
            alpha_rule: AlphaRuleKind::Constant,
            alpha_t: None,
            eta0: None,
            t0: None,
            beta: None,
            k_offset: None,
            q: None,
            k: None,
            e: None,
            eta: None,
            nonconvex: false,
            iterations: None,
            epochs: None,
            seeds: (0..10).collect(),
            record_every: 0,
            bound: BoundKind::None,
            solver_tol: 1e-10,
            solver_max_iter: 200_000,
            divergence_limit: 1e150,
            out: "out".into(),
            sweep: SweepKind::None,
            sweep_taus: vec![0, 1, 10, 100],
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Reads a `key=value` override value as TOML, falling back to a string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("override `{s}` is not key=value"))),
    }
}

impl RunConfig {
    /// Parses `text`, applies `overrides` in order, and checks the result.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for (k, v) in overrides {
            table.insert(k.clone(), override_value(v));
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides)
    }

    /// The effective configuration as TOML.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// FNV-1a of the dumped config, for trace metadata.
    pub fn hash(&self) -> u64 {
        self.dump().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    /// Checks that need no data: source choice, engine/schedule pairing and
    /// ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.dataset, self.synthetic) {
            (Some(_), Some(_)) => return bad("set either `dataset` or `synthetic`, not both".into()),
            (None, None) => return bad("one of `dataset` or `synthetic` is required".into()),
            _ => {}
        }
        if self.synthetic == Some(SyntheticKind::LeastSquares) && self.objective != LossKind::LeastSquares {
            return bad("synthetic least_squares needs objective = \"least_squares\"".into());
        }
        if self.synthetic == Some(SyntheticKind::SparseLogistic) && self.objective != LossKind::Logistic {
            return bad("synthetic sparse_logistic needs objective = \"logistic\"".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.d == 0 {
            return bad("D must be >= 1".into());
        }
        if let Some(v) = self.fraction {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("fraction must lie in (0, 1], got {v}"));
            }
            if self.engine == EngineKind::Seq {
                return bad("engine seq has no filter; drop `fraction`".into());
            }
        }
        if self.engine == EngineKind::Seq && self.d != 1 {
            return bad("engine seq writes the full gradient; use engine filtered for D > 1".into());
        }
        if self.engine == EngineKind::Parallel && self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.engine == EngineKind::Batch && self.batch_k == 0 {
            return bad("batch_k must be >= 1".into());
        }
        let delayed = matches!(self.engine, EngineKind::DelaySim | EngineKind::DelaySimGrowing);
        if !delayed && self.tau > 0 && self.engine != EngineKind::Parallel {
            return bad(format!("tau > 0 needs a delay engine, got {:?}", self.engine));
        }
        let growing = self.schedule == ScheduleKind::GrowingTau;
        if growing != (self.engine == EngineKind::DelaySimGrowing) {
            return bad("schedule growing_tau and engine delay_sim_growing go together".into());
        }
        if self.engine != EngineKind::DelaySimGrowing && self.tau_growth != TauGrowthKind::Constant {
            return bad("tau_growth other than constant needs engine delay_sim_growing".into());
        }
        if self.mask == MaskKind::Bernoulli && !(0.0..=1.0).contains(&self.mask_p) {
            return bad(format!("mask_p must lie in [0, 1], got {}", self.mask_p));
        }
        if self.schedule == ScheduleKind::HogwildAs {
            let k = self.k_offset.unwrap_or(f64::INFINITY);
            if k < 3.0 * self.tau as f64 {
                return bad(format!("hogwild_as needs k_offset >= 3*tau = {}, got {k}", 3 * self.tau));
            }
        }
        if self.iterations.is_none() && self.epochs.is_none() {
            return bad("set `iterations` or `epochs`".into());
        }
        if let Some(e) = self.epochs {
            if !(e >= 0.0) {
                return bad(format!("epochs must be >= 0, got {e}"));
            }
        }
        if self.sweep == SweepKind::Taus && self.sweep_taus.is_empty() {
            return bad("sweep_taus must not be empty".into());
        }
        Ok(())
    }

    /// The grid of configurations requested by `sweep`, with a label per
    /// point.
    pub fn expand_sweep(&self) -> Vec<(String, RunConfig)> {
        match self.sweep {
            SweepKind::None => vec![("run".into(), self.clone())],
            SweepKind::Fractions => FRACTIONS
                .iter()
                .map(|&(label, v)| {
                    let mut c = self.clone();
                    c.sweep = SweepKind::None;
                    c.fraction = Some(v);
                    c.tau = 10;
                    (format!("v{label}"), c)
                })
                .collect(),
            SweepKind::Taus => self
                .sweep_taus
                .iter()
                .map(|&tau| {
                    let mut c = self.clone();
                    c.sweep = SweepKind::None;
                    c.tau = tau;
                    (format!("tau{tau}"), c)
                })
                .collect(),
        }
    }
}

/// Filter fractions of the experiment grid.
pub const FRACTIONS: [(&str, f64); 6] = [
    ("1", 1.0),
    ("3_4", 0.75),
    ("2_3", 2.0 / 3.0),
    ("1_2", 0.5),
    ("1_3", 1.0 / 3.0),
    ("1_4", 0.25),
];
