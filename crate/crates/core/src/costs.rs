//! Running costs `L(t, z; u)`, the action functional and sampled checks of the
//! structural assumptions on `L`.
//!
//! A cost is a control part depending on `u` only plus a bounded potential
//! `U(t, z)`, with `z = (x, y)` the position and momentum.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::SampledPath;
use crate::kernels::KernelParams;
use crate::rng::{stream, PathSeed, Purpose};

/// Built-in bounded potentials. All are nonnegative and bounded by [`Potential::bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// `a·exp(-|x|²/(2w²))`, position only.
    Bump { amplitude: f64, width: f64 },
    /// `a·(1 + cos(2πt))/2`, time only.
    Pulse { amplitude: f64 },
    /// `a·(1 - exp(-|y|²))`, momentum only.
    Friction { amplitude: f64 },
}

impl Potential {
    pub fn bound(&self) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Bump { amplitude, .. } | Potential::Pulse { amplitude } | Potential::Friction { amplitude } => {
                amplitude
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero) || self.bound() == 0.0
    }

    /// `x` and `y` have the same length; pass zeros for `y` to get the restriction `L₀`.
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Bump { amplitude, width } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                amplitude * (-0.5 * r2 / (width * width)).exp()
            }
            Potential::Pulse { amplitude } => amplitude * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * t).cos()),
            Potential::Friction { amplitude } => {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                -amplitude * (-r2).exp_m1()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Potential::Zero => Ok(()),
            Potential::Bump { amplitude, width } => {
                ensure(amplitude.is_finite() && amplitude >= 0.0, || format!("bump amplitude {amplitude} must be >= 0"))?;
                ensure(width.is_finite() && width > 0.0, || format!("bump width {width} must be > 0"))
            }
            Potential::Pulse { amplitude } | Potential::Friction { amplitude } => {
                ensure(amplitude.is_finite() && amplitude >= 0.0, || format!("potential amplitude {amplitude} must be >= 0"))
            }
        }
    }

    /// `zero`, `bump:a:w`, `pulse:a` or `friction:a`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Config(format!("potential '{s}' is missing a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("potential '{s}': {e}")))
        };
        let p = match (parts[0], parts.len()) {
            ("zero", 1) => Potential::Zero,
            ("bump", 3) => Potential::Bump { amplitude: num(1)?, width: num(2)? },
            ("pulse", 2) => Potential::Pulse { amplitude: num(1)? },
            ("friction", 2) => Potential::Friction { amplitude: num(1)? },
            _ => return Err(Error::Config(format!("unknown potential '{s}'"))),
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "zero"),
            Potential::Bump { amplitude, width } => write!(f, "bump:{amplitude}:{width}"),
            Potential::Pulse { amplitude } => write!(f, "pulse:{amplitude}"),
            Potential::Friction { amplitude } => write!(f, "friction:{amplitude}"),
        }
    }
}

/// Control part of the cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    /// `|u|²/2`.
    Quadratic,
    /// `Σ a_n |u|^{p_n}` with `a_n ≥ 0`, some `a_n > 0`, `2 ≤ p_1 < p_2 < …`.
    PowerSum { coefficients: Vec<f64>, exponents: Vec<f64> },
    /// `|u|² - |u|^p + 1` with `p ∈ (0, 2)`. Not convex near the origin; kept as a
    /// negative control for the convexity check.
    SoftenedQuadratic { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    kind: CostKind,
    potential: Potential,
    r0: f64,
}

impl CostFunction {
    pub fn quadratic() -> Self {
        Self { kind: CostKind::Quadratic, potential: Potential::Zero, r0: 2.0 }
    }

    pub fn power_sum(coefficients: Vec<f64>, exponents: Vec<f64>) -> Result<Self> {
        ensure(!coefficients.is_empty() && coefficients.len() == exponents.len(), || {
            format!("power sum needs matching nonempty coefficient/exponent lists ({} vs {})", coefficients.len(), exponents.len())
        })?;
        ensure(coefficients.iter().all(|a| a.is_finite() && *a >= 0.0), || "power sum coefficients must be >= 0".into())?;
        ensure(coefficients.iter().any(|a| *a > 0.0), || "power sum needs at least one positive coefficient".into())?;
        ensure(exponents.iter().all(|p| p.is_finite() && *p >= 2.0), || "power sum exponents must be >= 2".into())?;
        ensure(exponents.windows(2).all(|w| w[0] < w[1]), || "power sum exponents must be strictly increasing".into())?;
        let r0 = *exponents.last().unwrap();
        Ok(Self { kind: CostKind::PowerSum { coefficients, exponents }, potential: Potential::Zero, r0 })
    }

    pub fn softened_quadratic(p: f64) -> Result<Self> {
        ensure(p > 0.0 && p < 2.0, || format!("softened quadratic exponent {p} must lie in (0, 2)"))?;
        Ok(Self { kind: CostKind::SoftenedQuadratic { p }, potential: Potential::Zero, r0: 2.0 })
    }

    pub fn with_potential(mut self, potential: Potential) -> Result<Self> {
        potential.validate()?;
        self.potential = potential;
        Ok(self)
    }

    /// Overrides the declared polynomial order used by the growth checks.
    pub fn with_r0(mut self, r0: f64) -> Result<Self> {
        ensure(r0.is_finite() && r0 >= 1.0, || format!("r0 = {r0} must be >= 1"))?;
        self.r0 = r0;
        Ok(self)
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, CostKind::Quadratic)
    }

    /// Control part as a function of `|u|²`.
    pub fn control_part(&self, norm_sq: f64) -> f64 {
        match &self.kind {
            CostKind::Quadratic => 0.5 * norm_sq,
            CostKind::PowerSum { coefficients, exponents } => coefficients
                .iter()
                .zip(exponents)
                .map(|(a, p)| if *p == 2.0 { a * norm_sq } else { a * norm_sq.powf(0.5 * p) })
                .sum(),
            CostKind::SoftenedQuadratic { p } => norm_sq - norm_sq.powf(0.5 * p) + 1.0,
        }
    }

    /// `L(t, (x, y); u)`.
    pub fn evaluate(&self, t: f64, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
        let norm_sq: f64 = u.iter().map(|v| v * v).sum();
        self.control_part(norm_sq) + self.potential.eval(t, x, y)
    }

    /// `L₀(t, x; u) = L(t, (x, 0); u)`.
    pub fn evaluate_l0(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let zeros = vec![0.0; x.len()];
        self.evaluate(t, x, &zeros, u)
    }

    /// Lower bound for `inf_{|u| ≥ R} L/|u|`, valid for every `(t, z)`.
    pub fn c1_lower(&self, r: f64) -> f64 {
        match &self.kind {
            CostKind::Quadratic => 0.5 * r,
            CostKind::PowerSum { coefficients, exponents } => {
                coefficients.iter().zip(exponents).map(|(a, p)| a * r.powf(p - 1.0)).sum()
            }
            CostKind::SoftenedQuadratic { .. } => {
                // s ↦ L(s)/s is eventually increasing; scan a log range past its minimum.
                let hi = r.max(1.0) * 1e4;
                let n = 2000;
                (0..=n)
                    .map(|k| {
                        let s = r * (hi / r).powf(k as f64 / n as f64);
                        self.control_part(s * s) / s
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Constant in the growth bound `L(u+v) ≤ L(u) + C|v|(|u|^{r0-1} + |v|^{r0-1})`
    /// for single-power costs, from convexity of `x ↦ (|u| + x)^p`.
    pub fn growth_constant(&self) -> Option<f64> {
        let c = |a: f64, p: f64| a * p * if p >= 2.0 { 2f64.powf(p - 2.0) } else { 1.0 };
        match &self.kind {
            CostKind::Quadratic => Some(c(0.5, 2.0)),
            CostKind::PowerSum { coefficients, exponents } => {
                Some(coefficients.iter().zip(exponents).map(|(a, p)| c(*a, *p)).sum())
            }
            CostKind::SoftenedQuadratic { .. } => None,
        }
    }

    /// `descriptor` is a `;`-separated list of `key=value` pairs:
    /// `kind=quadratic|power_sum|softened`, `a=1,0.5`, `p=2,4`, `r0=...`, `potential=...`.
    pub fn parse(descriptor: &str) -> Result<Self> {
        let mut kind = None;
        let (mut a, mut p, mut r0, mut pot) = (None, None, None, None);
        for item in descriptor.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("cost descriptor item '{item}' is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            let list = |v: &str| -> Result<Vec<f64>> {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("cost descriptor '{k}': {e}"))))
                    .collect()
            };
            let slot_taken = match k {
                "kind" => kind.replace(v.to_string()).is_some(),
                "a" => a.replace(list(v)?).is_some(),
                "p" => p.replace(list(v)?).is_some(),
                "r0" => r0
                    .replace(v.parse::<f64>().map_err(|e| Error::Config(format!("cost descriptor 'r0': {e}")))?)
                    .is_some(),
                "potential" => pot.replace(Potential::parse(v)?).is_some(),
                _ => return Err(Error::Config(format!("unknown cost descriptor key '{k}'"))),
            };
            if slot_taken {
                return Err(Error::Config(format!("duplicate cost descriptor key '{k}'")));
            }
        }
        let as_config = |e: Error| Error::Config(e.to_string());
        let mut cost = match kind.as_deref() {
            Some("quadratic") => {
                if a.is_some() || p.is_some() {
                    return Err(Error::Config("quadratic cost takes no a/p lists".into()));
                }
                CostFunction::quadratic()
            }
            Some("power_sum") => CostFunction::power_sum(
                a.ok_or_else(|| Error::Config("power_sum needs a=...".into()))?,
                p.ok_or_else(|| Error::Config("power_sum needs p=...".into()))?,
            )
            .map_err(as_config)?,
            Some("softened") => {
                let p = p.ok_or_else(|| Error::Config("softened needs p=...".into()))?;
                if p.len() != 1 || a.is_some() {
                    return Err(Error::Config("softened takes a single exponent p and no a".into()));
                }
                CostFunction::softened_quadratic(p[0]).map_err(as_config)?
            }
            Some(other) => return Err(Error::Config(format!("unknown cost kind '{other}'"))),
            None => return Err(Error::Config("cost descriptor needs kind=...".into())),
        };
        if let Some(pot) = pot {
            cost = cost.with_potential(pot).map_err(as_config)?;
        }
        if let Some(r0) = r0 {
            cost = cost.with_r0(r0).map_err(as_config)?;
        }
        Ok(cost)
    }
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.kind {
            CostKind::Quadratic => write!(f, "kind=quadratic")?,
            CostKind::PowerSum { coefficients, exponents } => {
                write!(f, "kind=power_sum;a={};p={}", join(coefficients), join(exponents))?
            }
            CostKind::SoftenedQuadratic { p } => write!(f, "kind=softened;p={p}")?,
        }
        write!(f, ";r0={};potential={}", self.r0, self.potential)
    }
}

impl FromStr for CostFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Trapezoid rule for `t ↦ L(t, (x(t), y(t)); u(t))`. Without `momentum` the
/// restriction `L₀` is used.
pub fn action(control: &SampledPath, position: &SampledPath, momentum: Option<&SampledPath>, cost: &CostFunction) -> Result<f64> {
    control.check_aligned(position)?;
    if let Some(y) = momentum {
        control.check_aligned(y)?;
    }
    let grid = control.grid();
    let zeros = vec![0.0; position.dim()];
    let values: Vec<f64> = (0..grid.len())
        .map(|k| {
            let y = momentum.map_or(zeros.as_slice(), |y| y.at(k));
            cost.evaluate(grid.nodes()[k], position.at(k), y, control.at(k))
        })
        .collect();
    Ok(trapezoid(grid.nodes(), &values))
}

pub(crate) fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Sample mean and standard error of the mean.
pub fn mc_value(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Domain("Monte-Carlo estimate of an empty batch".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Where the assumption checks draw their random tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub samples: usize,
    pub dim: usize,
    /// Positions and momenta are drawn from the cube `[-z_radius, z_radius]^{2d}`.
    pub z_radius: f64,
    /// Controls are drawn from the ball `|u| ≤ u_radius`.
    pub u_radius: f64,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn new(samples: usize, dim: usize) -> Self {
        Self { samples, dim, z_radius: 5.0, u_radius: 3.0, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_radii(mut self, z_radius: f64, u_radius: f64) -> Self {
        self.z_radius = z_radius;
        self.u_radius = u_radius;
        self
    }

    fn validate(&self) -> Result<()> {
        ensure(self.samples >= 1000, || format!("assumption checks need >= 1000 samples, got {}", self.samples))?;
        ensure(self.dim >= 1, || "dimension must be >= 1".into())?;
        ensure(self.z_radius.is_finite() && self.z_radius >= 0.0, || "z_radius must be finite and >= 0".into())?;
        ensure(self.u_radius.is_finite() && self.u_radius > 0.0, || "u_radius must be finite and > 0".into())
    }
}

/// Sampled `inf L/|u|^r` over `|u| ≥ R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub r: f64,
    pub radius: f64,
    pub value: f64,
}

/// Sampled `sup (L(t1,z1;u) - L(t2,z2;u)) / (1 + L(t2,z2;u))`. `eps_z = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub eps_t: f64,
    pub eps_z: Option<f64>,
    pub value: f64,
}

/// Worst sampled margin of an inequality `lhs ≤ rhs`, as `(rhs - lhs)/(1 + |rhs|)`.
/// A negative value is a sampled violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub worst: f64,
    pub violations: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub cost: String,
    pub sampling: SamplingSpec,
    pub growth: Vec<GrowthEstimate>,
    /// `R₁(ru) ≤ r² R₁(u)` for `r ∈ (0, 1)`, with `R₁(u) = L(u) - L(0)`.
    pub homogeneity: Margin,
    /// Polynomial growth bound with [`CostFunction::growth_constant`]; `None` when no constant is known.
    pub growth_bound: Option<Margin>,
    pub growth_bound_constant: Option<f64>,
    pub modulus: Vec<ModulusEstimate>,
    /// Midpoint convexity along random segments.
    pub convexity: Margin,
}

impl AssumptionReport {
    pub fn growth_at(&self, r: f64, radius: f64) -> Option<f64> {
        self.growth.iter().find(|g| g.r == r && g.radius == radius).map(|g| g.value)
    }

    pub fn is_convex(&self) -> bool {
        self.convexity.violations == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// Violations smaller than this (relative) are rounding, not structure.
const ROUNDING: f64 = 1e-12;

fn margin(values: impl ParallelIterator<Item = (f64, f64)>, samples: usize) -> Margin {
    let (worst, violations) = values
        .map(|(lhs, rhs)| {
            let m = (rhs - lhs) / (1.0 + rhs.abs());
            (m, usize::from(m < -ROUNDING))
        })
        .reduce(|| (f64::INFINITY, 0), |a, b| (a.0.min(b.0), a.1 + b.1));
    Margin { worst, violations, samples }
}

struct Tuple {
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn uniform_cube<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

fn direction<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; d];
        crate::rng::fill_normal(rng, &mut v);
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            v.iter_mut().for_each(|a| *a /= n);
            return v;
        }
    }
}

// Uniform in the ball of the given radius.
fn ball<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    direction(rng, d).into_iter().map(|a| a * r).collect()
}

fn state<R: Rng>(rng: &mut R, spec: &SamplingSpec) -> Tuple {
    Tuple { t: rng.random(), x: uniform_cube(rng, spec.dim, spec.z_radius), y: uniform_cube(rng, spec.dim, spec.z_radius) }
}

fn norm_pow(u: &[f64], r: f64) -> f64 {
    let s: f64 = u.iter().map(|v| v * v).sum();
    if r == 2.0 {
        s
    } else {
        s.powf(0.5 * r)
    }
}

/// Sampling-based falsification of the structural assumptions on `cost`.
///
/// Growth constants are estimated for `r ∈ {1, 2, r0}` at every radius in
/// `radii`; moduli for every `(eps_t, eps_z)` pair in `eps_grid`.
pub fn check_assumptions(
    cost: &CostFunction,
    spec: &SamplingSpec,
    radii: &[f64],
    eps_grid: &[(f64, Option<f64>)],
) -> Result<AssumptionReport> {
    spec.validate()?;
    ensure(radii.iter().all(|r| r.is_finite() && *r > 0.0), || "radii must be finite and positive".into())?;
    let n = spec.samples;
    let d = spec.dim;
    let rng_for = |check: u64, i: usize| stream(PathSeed::new(spec.seed, (check << 40) | i as u64), Purpose::Aux);

    let mut orders = vec![1.0, 2.0, cost.r0()];
    orders.sort_by(f64::total_cmp);
    orders.dedup();
    let mut growth = Vec::new();
    for (ri, &radius) in radii.iter().enumerate() {
        for &r in &orders {
            let value = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(1 + ri as u64, i);
                    let s = state(&mut rng, spec);
                    // |u| log-uniform in [R, 100 R]; the first sample sits on the boundary.
                    let scale = if i == 0 { 1.0 } else { 100f64.powf(rng.random::<f64>()) };
                    let u: Vec<f64> = direction(&mut rng, d).into_iter().map(|a| a * radius * scale).collect();
                    cost.evaluate(s.t, &s.x, &s.y, &u) / norm_pow(&u, r)
                })
                .reduce(|| f64::INFINITY, f64::min);
            growth.push(GrowthEstimate { r, radius, value });
        }
    }

    let homogeneity = margin(
        (0..n).into_par_iter().map(|i| {
            let mut rng = rng_for(0x100, i);
            let s = state(&mut rng, spec);
            let u = ball(&mut rng, d, spec.u_radius);
            let r: f64 = rng.random_range(f64::EPSILON..1.0);
            let ru: Vec<f64> = u.iter().map(|a| r * a).collect();
            let l0 = cost.evaluate(s.t, &s.x, &s.y, &vec![0.0; d]);
            let lhs = cost.evaluate(s.t, &s.x, &s.y, &ru) - l0;
            let rhs = r * r * (cost.evaluate(s.t, &s.x, &s.y, &u) - l0);
            (lhs, rhs)
        }),
        n,
    );

    let growth_bound_constant = cost.growth_constant();
    let growth_bound = growth_bound_constant.map(|c| {
        let r0 = cost.r0();
        margin(
            (0..n).into_par_iter().map(|i| {
                let mut rng = rng_for(0x101, i);
                let s = state(&mut rng, spec);
                let u = ball(&mut rng, d, spec.u_radius);
                let v = ball(&mut rng, d, spec.u_radius);
                let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                let nv = norm_pow(&v, 1.0);
                let lhs = cost.evaluate(s.t, &s.x, &s.y, &uv);
                let rhs = cost.evaluate(s.t, &s.x, &s.y, &u)
                    + c * nv * (norm_pow(&u, r0 - 1.0) + norm_pow(&v, r0 - 1.0));
                (lhs, rhs)
            }),
            n,
        )
    });

    let modulus = eps_grid
        .iter()
        .enumerate()
        .map(|(ei, &(eps_t, eps_z))| {
            let value = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(0x200 + ei as u64, i);
                    let a = state(&mut rng, spec);
                    let b = match eps_z {
                        None => state(&mut rng, spec),
                        Some(eps) => {
                            // |z1 - z2| < eps in the joint (x, y) norm.
                            let dz = ball(&mut rng, 2 * d, eps * (1.0 - 1e-12));
                            Tuple {
                                t: a.t,
                                x: a.x.iter().zip(&dz[..d]).map(|(p, q)| p + q).collect(),
                                y: a.y.iter().zip(&dz[d..]).map(|(p, q)| p + q).collect(),
                            }
                        }
                    };
                    let t2 = (a.t + eps_t * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
                    let u = ball(&mut rng, d, spec.u_radius);
                    let l1 = cost.evaluate(a.t, &a.x, &a.y, &u);
                    let l2 = cost.evaluate(t2, &b.x, &b.y, &u);
                    (l1 - l2) / (1.0 + l2)
                })
                .reduce(|| f64::NEG_INFINITY, f64::max);
            ModulusEstimate { eps_t, eps_z, value }
        })
        .collect();

    let convexity = margin(
        (0..n).into_par_iter().map(|i| {
            let mut rng = rng_for(0x300, i);
            let s = state(&mut rng, spec);
            let u = ball(&mut rng, d, spec.u_radius);
            let v = ball(&mut rng, d, spec.u_radius);
            let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = cost.evaluate(s.t, &s.x, &s.y, &mid);
            let rhs = 0.5 * (cost.evaluate(s.t, &s.x, &s.y, &u) + cost.evaluate(s.t, &s.x, &s.y, &v));
            (lhs, rhs)
        }),
        n,
    );

    Ok(AssumptionReport {
        cost: cost.to_string(),
        sampling: spec.clone(),
        growth,
        homogeneity,
        growth_bound,
        growth_bound_constant,
        modulus,
        convexity,
    })
}

/// Polynomial path `X(t) = Σ_k c_k t^k` in `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPath {
    dim: usize,
    /// `coefficients[k]` multiplies `t^k`.
    coefficients: Vec<Vec<f64>>,
}

pub const MAX_PATH_DEGREE: usize = 10;

impl PolynomialPath {
    pub fn new(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        ensure(!coefficients.is_empty(), || "polynomial path needs at least one coefficient".into())?;
        if coefficients.len() > MAX_PATH_DEGREE + 1 {
            return Err(Error::Unsupported(format!(
                "polynomial degree {} exceeds {MAX_PATH_DEGREE}",
                coefficients.len() - 1
            )));
        }
        let dim = coefficients[0].len();
        ensure(dim >= 1, || "polynomial path dimension must be >= 1".into())?;
        for c in &coefficients {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            ensure(c.iter().all(|v| v.is_finite()), || "polynomial coefficients must be finite".into())?;
        }
        Ok(Self { dim, coefficients })
    }

    /// `x0 + t·(x1 - x0)`.
    pub fn line(x0: &[f64], x1: &[f64]) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(Error::DimensionMismatch { expected: x0.len(), got: x1.len() });
        }
        Self::new(vec![x0.to_vec(), x1.iter().zip(x0).map(|(b, a)| b - a).collect()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn derivative(&self) -> Self {
        let d = self.dim;
        let coefficients = if self.coefficients.len() == 1 {
            vec![vec![0.0; d]]
        } else {
            self.coefficients[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| c.iter().map(|v| (k + 1) as f64 * v).collect())
                .collect()
        };
        Self { dim: d, coefficients }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in self.coefficients.iter().rev() {
            for (o, ci) in out.iter_mut().zip(c) {
                *o = *o * t + ci;
            }
        }
        out
    }

    /// `∫₀¹ |X(t)|² dt`, exact from the coefficients.
    pub fn integral_norm_sq(&self) -> f64 {
        let c = &self.coefficients;
        let mut total = 0.0;
        for (j, cj) in c.iter().enumerate() {
            for (k, ck) in c.iter().enumerate() {
                let dot: f64 = cj.iter().zip(ck).map(|(a, b)| a * b).sum();
                total += dot / (j + k + 1) as f64;
            }
        }
        total
    }

    fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let n = self.coefficients.len().max(other.coefficients.len());
        let zero = vec![0.0; self.dim];
        let coefficients = (0..n)
            .map(|k| {
                let p = self.coefficients.get(k).unwrap_or(&zero);
                let q = other.coefficients.get(k).unwrap_or(&zero);
                p.iter().zip(q).map(|(p, q)| a * p + b * q).collect()
            })
            .collect();
        Self { dim: self.dim, coefficients }
    }
}

/// Both sides of the energy split
/// `∫|γẊ + mẌ|² = γ²∫|Ẋ|² + m²∫|Ẍ|² + γm(|Ẋ(1)|² - |Ẋ(0)|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicIdentity {
    pub lhs: f64,
    pub velocity_term: f64,
    pub acceleration_term: f64,
    pub boundary_term: f64,
}

impl DeterministicIdentity {
    pub fn rhs(&self) -> f64 {
        self.velocity_term + self.acceleration_term + self.boundary_term
    }

    pub fn discrepancy(&self) -> f64 {
        (self.lhs - self.rhs()).abs()
    }
}

pub fn deterministic_identity_check(path: &PolynomialPath, params: &KernelParams) -> DeterministicIdentity {
    let (gamma, m) = (params.gamma(), params.m());
    let vel = path.derivative();
    let acc = vel.derivative();
    let force = vel.combine(gamma, &acc, m);
    let sq = |v: Vec<f64>| v.iter().map(|a| a * a).sum::<f64>();
    DeterministicIdentity {
        lhs: force.integral_norm_sq(),
        velocity_term: gamma * gamma * vel.integral_norm_sq(),
        acceleration_term: m * m * acc.integral_norm_sq(),
        boundary_term: gamma * m * (sq(vel.eval(1.0)) - sq(vel.eval(0.0))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    #[test]
    fn evaluate_examples() {
        let q = CostFunction::quadratic();
        assert_eq!(q.evaluate(0.3, &[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0]), 12.5);
        let p = CostFunction::power_sum(vec![1.0], vec![2.0]).unwrap();
        assert_eq!(p.evaluate(0.0, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]), 2.0);
        let p = CostFunction::power_sum(vec![1.0, 0.5], vec![2.0, 4.0]).unwrap();
        assert_eq!(p.evaluate(0.0, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]), 1.5);
    }

    #[test]
    fn invalid_power_sums() {
        assert!(CostFunction::power_sum(vec![0.0], vec![2.0]).is_err());
        assert!(CostFunction::power_sum(vec![1.0, 1.0], vec![3.0, 2.0]).is_err());
        assert!(CostFunction::power_sum(vec![1.0], vec![1.5]).is_err());
        assert!(CostFunction::power_sum(vec![-1.0, 1.0], vec![2.0, 3.0]).is_err());
        assert!(CostFunction::softened_quadratic(2.0).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        for s in ["kind=quadratic", "kind=power_sum;a=1,0.5;p=2,4;potential=bump:0.3:1.5", "kind=softened;p=1"] {
            let c = CostFunction::parse(s).unwrap();
            assert_eq!(CostFunction::parse(&c.to_string()).unwrap(), c);
        }
        let c = CostFunction::parse("kind=power_sum; a=2; p=3; r0=4").unwrap();
        assert_eq!(c.r0(), 4.0);
        for bad in ["", "kind=cubic", "kind=quadratic;a=1", "kind=quadratic;kind=quadratic", "kind=quadratic;foo=1", "kind=power_sum;a=1"] {
            assert!(matches!(CostFunction::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn potentials_are_bounded() {
        for p in ["zero", "bump:2:0.5", "pulse:1.5", "friction:0.7"] {
            let p = Potential::parse(p).unwrap();
            for k in 0..50 {
                let t = k as f64 / 49.0;
                let x = [t * 6.0 - 3.0];
                let v = p.eval(t, &x, &[1.0 - 2.0 * t]);
                assert!((0.0..=p.bound()).contains(&v));
            }
        }
        assert!(Potential::parse("bump:1").is_err());
        assert!(Potential::parse("pulse:-1").is_err());
    }

    #[test]
    fn action_constant_control() {
        let g = TimeGrid::uniform(16).unwrap();
        let u = SampledPath::constant(g.clone(), &[1.0, -2.0]);
        let x = SampledPath::zeros(g, 2);
        let a = action(&u, &x, None, &CostFunction::quadratic()).unwrap();
        assert!((a - 2.5).abs() < 1e-15);
    }

    #[test]
    fn mc_value_examples() {
        assert_eq!(mc_value(&[0.0, 2.0]).unwrap(), (1.0, 1.0));
        assert_eq!(mc_value(&[3.0; 5]).unwrap(), (3.0, 0.0));
        assert!(matches!(mc_value(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn c1_lower_is_a_lower_bound() {
        let costs = [
            CostFunction::quadratic(),
            CostFunction::power_sum(vec![0.5, 0.1], vec![2.0, 3.0]).unwrap(),
            CostFunction::softened_quadratic(1.0).unwrap(),
        ];
        for c in &costs {
            for r in [0.1, 1.0, 5.0] {
                let lb = c.c1_lower(r);
                for k in 0..200 {
                    let s = r * (1.0 + k as f64 * 0.05);
                    assert!(c.control_part(s * s) / s >= lb - 1e-12, "{c} R={r} s={s}");
                }
            }
        }
    }

    #[test]
    fn polynomial_calculus() {
        let p = PolynomialPath::new(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(p.eval(2.0), vec![17.0]);
        assert_eq!(p.derivative().coefficients(), &[vec![2.0], vec![6.0]]);
        // (1 + 2t + 3t²)² = 1 + 4t² + 9t⁴ + 2(2t + 3t² + 6t³)
        let exact = 1.0 + 4.0 / 3.0 + 9.0 / 5.0 + 2.0 * (2.0 / 2.0 + 3.0 / 3.0 + 6.0 / 4.0);
        assert!((p.integral_norm_sq() - exact).abs() < 1e-14);
        assert!(matches!(PolynomialPath::new(vec![vec![0.0]; 12]), Err(Error::Unsupported(_))));
    }
}
