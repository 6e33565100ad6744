//! Experiment configuration: JSON schema, validation, and source presets.

use serde::{Deserialize, Serialize};

use crate::entangled::{BipartiteEnsemble, BipartiteState};
use crate::exponents::OracleConfig;
use crate::linalg::{C64, CMat, CVec, DensityMatrix, Ensemble, DEFAULT_MAX_DIM};
use crate::varlen::DefinitionalPolicy;
use crate::{Error, Result};

/// Experiment mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fixed,
    Varlen,
    Naive,
    EntangledFixed,
    EntangledVarlen,
    Exponent,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Fixed => "fixed",
            Mode::Varlen => "varlen",
            Mode::Naive => "naive",
            Mode::EntangledFixed => "entangled-fixed",
            Mode::EntangledVarlen => "entangled-varlen",
            Mode::Exponent => "exponent",
        }
    }

    pub fn is_entangled(&self) -> bool {
        matches!(self, Mode::EntangledFixed | Mode::EntangledVarlen)
    }
}

/// A complex matrix as nested `[re, im]` pairs, row by row.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

/// One ensemble member given explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub prob: f64,
    pub matrix: MatrixSpec,
}

/// Source description: a named preset or explicit matrices.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Angle of the second state for `pure-qubit-pair`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Top eigenvalues for `diagonal-mixed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q2: Option<f64>,
    /// Probability of the first member for `diagonal-mixed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Top Schmidt weight for `schmidt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<StateSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim_a: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim_b: Option<usize>,
}

/// A built source: single-system or bipartite.
#[derive(Debug, Clone)]
pub enum Source {
    Plain(Ensemble),
    Bipartite(BipartiteEnsemble),
}

fn parse_matrix(spec: &MatrixSpec) -> Result<CMat> {
    let rows = spec.len();
    if rows == 0 || spec.iter().any(|r| r.len() != rows) {
        return Err(Error::InvalidConfig(
            "state matrices must be square".to_string(),
        ));
    }
    Ok(CMat::from_fn(rows, rows, |i, j| {
        C64::new(spec[i][j][0], spec[i][j][1])
    }))
}

impl SourceSpec {
    /// Build and validate the source.
    pub fn build(&self, entangled: bool) -> Result<Source> {
        if let Some(name) = &self.preset {
            return self.build_preset(name, entangled);
        }
        let Some(states) = &self.states else {
            return Err(Error::InvalidConfig(
                "source needs either a preset or explicit states".to_string(),
            ));
        };
        let mut items = Vec::with_capacity(states.len());
        for s in states {
            items.push((s.prob, DensityMatrix::new(parse_matrix(&s.matrix)?)?));
        }
        if entangled {
            let dim_a = self.dim_a.ok_or_else(|| {
                Error::InvalidConfig("bipartite source needs dim_a".to_string())
            })?;
            let dim_b = self.dim_b.ok_or_else(|| {
                Error::InvalidConfig("bipartite source needs dim_b".to_string())
            })?;
            let members = items
                .into_iter()
                .map(|(p, s)| Ok((p, BipartiteState::new(dim_a, dim_b, s)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Source::Bipartite(BipartiteEnsemble::new(members)?))
        } else {
            Ok(Source::Plain(Ensemble::new(items)?))
        }
    }

    fn build_preset(&self, name: &str, entangled: bool) -> Result<Source> {
        match name {
            "pure-qubit-pair" => {
                let theta = self.theta.unwrap_or(0.8);
                let zero = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
                let tilted = CVec::from_vec(vec![
                    C64::new(theta.cos(), 0.0),
                    C64::new(theta.sin(), 0.0),
                ]);
                let e = Ensemble::new(vec![
                    (0.5, DensityMatrix::from_pure(&zero)?),
                    (0.5, DensityMatrix::from_pure(&tilted)?),
                ])?;
                wrap_plain(e, entangled)
            }
            "diagonal-mixed" => {
                let q1 = self.q1.unwrap_or(0.9);
                let q2 = self.q2.unwrap_or(0.7);
                let w = self.weight.unwrap_or(0.5);
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidConfig(format!("weight {w} outside [0,1]")));
                }
                let e = Ensemble::new(vec![
                    (w, DensityMatrix::from_diagonal(&[q1, 1.0 - q1])?),
                    (1.0 - w, DensityMatrix::from_diagonal(&[q2, 1.0 - q2])?),
                ])?;
                wrap_plain(e, entangled)
            }
            "bell" => {
                if !entangled {
                    return Err(Error::InvalidConfig(
                        "preset 'bell' is bipartite; use an entangled mode".to_string(),
                    ));
                }
                Ok(Source::Bipartite(BipartiteEnsemble::single(
                    BipartiteState::bell(),
                )))
            }
            "schmidt" => {
                if !entangled {
                    return Err(Error::InvalidConfig(
                        "preset 'schmidt' is bipartite; use an entangled mode".to_string(),
                    ));
                }
                let q = self.q.unwrap_or(0.95);
                Ok(Source::Bipartite(BipartiteEnsemble::single(
                    BipartiteState::schmidt(&[q, 1.0 - q])?,
                )))
            }
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

fn wrap_plain(e: Ensemble, entangled: bool) -> Result<Source> {
    if entangled {
        // dim_b = 1 embedding keeps single-system presets usable there
        let members = e
            .items()
            .iter()
            .map(|(p, s)| Ok((*p, BipartiteState::new(s.dim(), 1, s.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Source::Bipartite(BipartiteEnsemble::new(members)?))
    } else {
        Ok(Source::Plain(e))
    }
}

/// Resource caps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub exact_sequences: usize,
    pub mc_samples: usize,
    pub max_dim: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            exact_sequences: 4096,
            mc_samples: 10_000,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

/// An inclusive rate grid specification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateGridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl RateGridSpec {
    pub fn expand(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.min];
        }
        (0..self.steps)
            .map(|k| self.min + (self.max - self.min) * k as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// The experiment configuration (JSON on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    /// Inclusive block-length range `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_grid: Option<RateGridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<f64>,
    /// Sweep lists (cartesian with `n` and rates).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_primes: Option<Vec<f64>>,
    /// Use `δ_n = n^{-1/6}`, `δ'_n = n^{-1/3}`; infeasible pairs (any
    /// `n <= 64`) fall back to `delta`/`delta_prime`.
    #[serde(default)]
    pub use_schedule: bool,
    /// Interior grid knots for the naive mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_knots: Option<Vec<f64>>,
    /// Target distribution for the exponent mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definitional: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn definitional_policy(&self) -> Result<DefinitionalPolicy> {
        match self.definitional.as_deref() {
            None | Some("auto") => Ok(DefinitionalPolicy::Auto),
            Some("always") => Ok(DefinitionalPolicy::Always),
            Some("never") => Ok(DefinitionalPolicy::Never),
            Some(other) => Err(Error::InvalidConfig(format!(
                "definitional must be auto|always|never, got '{other}'"
            ))),
        }
    }

    /// Block lengths of the experiment.
    pub fn ns(&self) -> Result<Vec<usize>> {
        let [lo, hi] = self.n_range.ok_or_else(|| {
            Error::InvalidConfig("n_range is required for this mode".to_string())
        })?;
        if lo < 1 || hi < lo {
            return Err(Error::InvalidConfig(format!("bad n_range [{lo}, {hi}]")));
        }
        Ok((lo..=hi).collect())
    }

    /// The rate list (explicit list or grid).
    pub fn rate_list(&self) -> Result<Vec<f64>> {
        match (&self.rates, &self.rate_grid) {
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "give either rates or rate_grid, not both".to_string(),
            )),
            (Some(r), None) => Ok(r.clone()),
            (None, Some(g)) => Ok(g.expand()),
            (None, None) => Ok(Vec::new()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=8).contains(&self.d) {
            return Err(Error::InvalidConfig(format!("d = {} out of range", self.d)));
        }
        self.definitional_policy()?;
        let ln_d = (self.d as f64).ln();
        for r in self.rate_list()? {
            if !(0.0..=ln_d + 1e-9).contains(&r) {
                return Err(Error::InvalidConfig(format!(
                    "rate {r} outside [0, ln d]"
                )));
            }
        }
        if let Some(fmt) = &self.format {
            if fmt != "csv" && fmt != "json" {
                return Err(Error::InvalidConfig(format!("unknown format '{fmt}'")));
            }
        }
        match self.mode {
            Mode::Exponent => {
                let a = self.a.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("exponent mode needs 'a'".to_string())
                })?;
                if a.len() != self.d {
                    return Err(Error::InvalidConfig(format!(
                        "'a' has {} entries but d = {}",
                        a.len(),
                        self.d
                    )));
                }
                crate::exponents::ProbVector::new(a.clone())?;
                if self.rate_list()?.is_empty() {
                    return Err(Error::InvalidConfig(
                        "exponent mode needs rates or rate_grid".to_string(),
                    ));
                }
            }
            Mode::Naive => {
                self.require_source()?;
                self.ns()?;
                crate::varlen::RateGrid::from_knots(
                    self.d,
                    self.grid_knots.as_deref().unwrap_or(&[]),
                )?;
            }
            Mode::Fixed | Mode::EntangledFixed => {
                self.require_source()?;
                self.ns()?;
                if self.rate_list()?.is_empty() {
                    return Err(Error::InvalidConfig(
                        "fixed modes need rates or rate_grid".to_string(),
                    ));
                }
            }
            Mode::Varlen | Mode::EntangledVarlen => {
                self.require_source()?;
                self.ns()?;
                if !self.use_schedule && self.delta.is_none() && self.deltas.is_none() {
                    return Err(Error::InvalidConfig(
                        "variable-length modes need delta, deltas, or use_schedule".to_string(),
                    ));
                }
                // the error bound needs a feasible pair when requested here
                if let (Some(d), Some(dp)) = (self.delta, self.delta_prime) {
                    if !(dp > 0.0 && 2.0 * dp < d) {
                        return Err(Error::InvalidConfig(format!(
                            "need 0 < 2 delta_prime < delta, got {dp} and {d}"
                        )));
                    }
                }
            }
        }
        if self.mode != Mode::Exponent {
            // building the source validates probabilities and matrices
            self.require_source()?
                .build(self.mode.is_entangled())
                .map(|_| ())?;
        }
        Ok(())
    }

    fn require_source(&self) -> Result<&SourceSpec> {
        self.source.as_ref().ok_or_else(|| {
            Error::InvalidConfig("this mode requires a source".to_string())
        })
    }
}
