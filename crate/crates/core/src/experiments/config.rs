//! Flat `key = value` experiment configuration. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::bridge::TerminalReward;
use crate::costs::CostFunction;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    KernelsCheck,
    BridgeSolve,
    ZeroMass,
    ZeroMassBeta,
    Duality,
    Marginal,
    Deterministic,
    Assumptions,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::KernelsCheck,
        Scenario::BridgeSolve,
        Scenario::ZeroMass,
        Scenario::ZeroMassBeta,
        Scenario::Duality,
        Scenario::Marginal,
        Scenario::Deterministic,
        Scenario::Assumptions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::KernelsCheck => "kernels_check",
            Scenario::BridgeSolve => "bridge_solve",
            Scenario::ZeroMass => "zero_mass",
            Scenario::ZeroMassBeta => "zero_mass_beta",
            Scenario::Duality => "duality",
            Scenario::Marginal => "marginal",
            Scenario::Deterministic => "deterministic",
            Scenario::Assumptions => "assumptions",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// A marginal law: isotropic Gaussian `N(mean·1, std²·I)` or a CSV of weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalSpec {
    Gaussian { mean: f64, std: f64 },
    Csv(PathBuf),
}

impl MarginalSpec {
    /// `gaussian:<mean>:<std>` or `csv:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("csv:") {
            return Ok(MarginalSpec::Csv(PathBuf::from(path.trim())));
        }
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            ["gaussian", mean, std] => {
                let mean = parse_f64("marginal mean", mean)?;
                let std = parse_f64("marginal std", std)?;
                if !(std >= 0.0 && std.is_finite()) {
                    return Err(Error::Config(format!("marginal std {std} must be finite and >= 0")));
                }
                Ok(MarginalSpec::Gaussian { mean, std })
            }
            _ => Err(Error::Config(format!("marginal '{s}' is not gaussian:<mean>:<std> or csv:<path>"))),
        }
    }

    pub fn load(&self, dim: usize) -> Result<Option<EmpiricalMeasure>> {
        match self {
            MarginalSpec::Gaussian { .. } => Ok(None),
            MarginalSpec::Csv(path) => {
                let m = EmpiricalMeasure::load(path)?;
                if m.dim() != dim {
                    return Err(Error::Config(format!(
                        "{} has dimension {}, config says {dim}",
                        path.display(),
                        m.dim()
                    )));
                }
                Ok(Some(m))
            }
        }
    }
}

impl fmt::Display for MarginalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalSpec::Gaussian { mean, std } => write!(f, "gaussian:{mean}:{std}"),
            MarginalSpec::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl Serialize for MarginalSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Law of the prescribed initial momentum in the corrected coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumLaw {
    /// `√m · N(0, I)`, drawn from an independent stream.
    ScaledGaussian,
    /// The momentum of the uncorrected coupling, so the shift vanishes.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Option<Scenario>,
    pub dim: usize,
    pub p0: MarginalSpec,
    pub p1: MarginalSpec,
    /// Second initial law for the start-independence check of the duality run.
    pub p0_alt: MarginalSpec,
    pub gamma: f64,
    pub m_grid: Vec<f64>,
    /// Mass for the single-mass scenarios (duality, deterministic).
    pub mass: f64,
    pub paths: usize,
    pub grid: usize,
    #[serde(serialize_with = "as_display")]
    pub cost: CostFunction,
    pub seed: u64,
    pub epsilon0: f64,
    /// Target bandwidth `s` of the smoothed bridge.
    pub bandwidth: f64,
    /// Gauss–Hermite atoms per axis for Gaussian targets.
    pub target_atoms: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    /// Deviations are measured on `[0, t0]`.
    pub t0: f64,
    pub monotone_fraction: f64,
    pub sigma_multiplier: f64,
    pub terminal_gap_tol: f64,
    pub discretization_check: bool,
    pub y0_law: MomentumLaw,
    pub reward: String,
    pub y_star: f64,
    pub control_scale: f64,
    pub hjb_h: f64,
    pub hjb_points: usize,
    pub hjb_constant: f64,
    pub w2_threshold: f64,
    pub energy_threshold: f64,
    pub assumption_samples: usize,
    pub identity_paths: usize,
    pub identity_tol: f64,
}

fn as_display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            dim: 1,
            p0: MarginalSpec::Gaussian { mean: 0.0, std: 1.0 },
            p1: MarginalSpec::Gaussian { mean: 1.0, std: 0.5 },
            p0_alt: MarginalSpec::Gaussian { mean: -1.0, std: 0.5 },
            gamma: 1.0,
            m_grid: vec![0.05, 0.02, 0.01, 0.005],
            mass: 0.1,
            paths: 4096,
            grid: 2048,
            cost: CostFunction::quadratic(),
            seed: 0,
            epsilon0: 0.1,
            bandwidth: 0.125,
            target_atoms: 64,
            sinkhorn_tol: 1e-10,
            sinkhorn_max_iter: 100_000,
            t0: 0.9,
            monotone_fraction: 0.95,
            sigma_multiplier: 3.0,
            terminal_gap_tol: 1e-12,
            discretization_check: true,
            y0_law: MomentumLaw::ScaledGaussian,
            reward: "cosine:0.5".into(),
            y_star: 0.3,
            control_scale: 0.5,
            hjb_h: 0.01,
            hjb_points: 50,
            hjb_constant: 50.0,
            w2_threshold: 0.01,
            energy_threshold: 0.01,
            assumption_samples: 10_000,
            identity_paths: 20,
            identity_tol: 1e-10,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|e| Error::Config(format!("{key}: '{v}': {e}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().replace('_', "").parse::<usize>().map_err(|e| Error::Config(format!("{key}: '{v}': {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{v}' is not a boolean"))),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Later keys may not repeat earlier ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1)))?;
            let k = k.trim().to_string();
            if seen.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        let mut cfg = Self::default();
        for (k, v) in &seen {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = Some(v.parse()?),
            "dim" => self.dim = parse_usize(key, v)?,
            "p0" => self.p0 = MarginalSpec::parse(v)?,
            "p1" => self.p1 = MarginalSpec::parse(v)?,
            "p0_alt" => self.p0_alt = MarginalSpec::parse(v)?,
            "gamma" => self.gamma = parse_f64(key, v)?,
            "m_grid" => {
                self.m_grid = v.split(',').map(|s| parse_f64(key, s)).collect::<Result<_>>()?;
            }
            "mass" => self.mass = parse_f64(key, v)?,
            "paths" => self.paths = parse_usize(key, v)?,
            "grid" => self.grid = parse_usize(key, v)?,
            "cost" => self.cost = CostFunction::parse(v)?,
            "seed" => self.seed = v.trim().parse().map_err(|e| Error::Config(format!("seed: '{v}': {e}")))?,
            "epsilon0" => self.epsilon0 = parse_f64(key, v)?,
            "bandwidth" => self.bandwidth = parse_f64(key, v)?,
            "target_atoms" => self.target_atoms = parse_usize(key, v)?,
            "sinkhorn_tol" => self.sinkhorn_tol = parse_f64(key, v)?,
            "sinkhorn_max_iter" => self.sinkhorn_max_iter = parse_usize(key, v)?,
            "t0" => self.t0 = parse_f64(key, v)?,
            "monotone_fraction" => self.monotone_fraction = parse_f64(key, v)?,
            "sigma_multiplier" => self.sigma_multiplier = parse_f64(key, v)?,
            "terminal_gap_tol" => self.terminal_gap_tol = parse_f64(key, v)?,
            "discretization_check" => self.discretization_check = parse_bool(key, v)?,
            "y0_law" => {
                self.y0_law = match v.trim() {
                    "scaled_gaussian" => MomentumLaw::ScaledGaussian,
                    "matched" => MomentumLaw::Matched,
                    _ => return Err(Error::Config(format!("y0_law '{v}' is not scaled_gaussian or matched"))),
                }
            }
            "reward" => self.reward = v.trim().to_string(),
            "y_star" => self.y_star = parse_f64(key, v)?,
            "control_scale" => self.control_scale = parse_f64(key, v)?,
            "hjb_h" => self.hjb_h = parse_f64(key, v)?,
            "hjb_points" => self.hjb_points = parse_usize(key, v)?,
            "hjb_constant" => self.hjb_constant = parse_f64(key, v)?,
            "w2_threshold" => self.w2_threshold = parse_f64(key, v)?,
            "energy_threshold" => self.energy_threshold = parse_f64(key, v)?,
            "assumption_samples" => self.assumption_samples = parse_usize(key, v)?,
            "identity_paths" => self.identity_paths = parse_usize(key, v)?,
            "identity_tol" => self.identity_tol = parse_f64(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(1..=8).contains(&self.dim) {
            return fail(format!("dim = {} outside 1..=8", self.dim));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma = {} must be positive", self.gamma));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return fail(format!("epsilon0 = {} must be positive", self.epsilon0));
        }
        let cap = self.mass_cap();
        if self.m_grid.is_empty() {
            return fail("m_grid is empty".into());
        }
        if self.m_grid.windows(2).any(|w| w[1] >= w[0]) {
            return fail(format!("m_grid {:?} must be strictly decreasing", self.m_grid));
        }
        if let Some(m) = self.m_grid.iter().find(|m| !(**m > 0.0 && **m <= cap)) {
            return fail(format!("mass {m} outside (0, epsilon0*gamma/2] = (0, {cap}]"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return fail(format!("mass = {} must be positive", self.mass));
        }
        if self.paths < 100 {
            return fail(format!("paths = {} must be >= 100", self.paths));
        }
        if !self.grid.is_power_of_two() || self.grid < 2 {
            return fail(format!("grid = {} must be a power of two >= 2", self.grid));
        }
        if !(self.bandwidth >= 0.0 && self.bandwidth.is_finite()) {
            return fail(format!("bandwidth = {} must be >= 0", self.bandwidth));
        }
        if let MarginalSpec::Gaussian { std, .. } = self.p1 {
            if self.bandwidth > std {
                return fail(format!("bandwidth {} exceeds the target std {std}", self.bandwidth));
            }
        }
        if self.target_atoms < 1 || self.target_atoms.checked_pow(self.dim as u32).map_or(true, |n| n > 1 << 16) {
            return fail(format!("target_atoms^{} too large or zero", self.dim));
        }
        if !(self.sinkhorn_tol > 0.0) || self.sinkhorn_max_iter == 0 {
            return fail("sinkhorn_tol and sinkhorn_max_iter must be positive".into());
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return fail(format!("t0 = {} must lie in (0, 1)", self.t0));
        }
        if !(self.monotone_fraction > 0.0 && self.monotone_fraction <= 1.0) {
            return fail(format!("monotone_fraction = {} must lie in (0, 1]", self.monotone_fraction));
        }
        for (k, v) in [
            ("sigma_multiplier", self.sigma_multiplier),
            ("terminal_gap_tol", self.terminal_gap_tol),
            ("hjb_h", self.hjb_h),
            ("hjb_constant", self.hjb_constant),
            ("w2_threshold", self.w2_threshold),
            ("energy_threshold", self.energy_threshold),
            ("identity_tol", self.identity_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{k} = {v} must be positive"));
            }
        }
        if !(self.hjb_h < 0.1) {
            return fail(format!("hjb_h = {} must be below 0.1", self.hjb_h));
        }
        if !(self.control_scale.is_finite() && self.control_scale != 1.0) {
            return fail(format!("control_scale = {} must be finite and differ from 1", self.control_scale));
        }
        if self.assumption_samples < 1000 {
            return fail(format!("assumption_samples = {} must be >= 1000", self.assumption_samples));
        }
        if self.identity_paths == 0 || self.hjb_points == 0 {
            return fail("identity_paths and hjb_points must be positive".into());
        }
        TerminalReward::parse(&self.reward, 1).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Largest admissible mass `ε₀γ/2`.
    pub fn mass_cap(&self) -> f64 {
        0.5 * self.epsilon0 * self.gamma
    }

    /// Fails if the file named a different scenario.
    pub fn expect_scenario(&self, s: Scenario) -> Result<()> {
        match self.scenario {
            Some(c) if c != s => Err(Error::Config(format!("config is for scenario '{c}', not '{s}'"))),
            _ => Ok(()),
        }
    }
}
