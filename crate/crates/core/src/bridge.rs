//! Schrödinger bridge for the zero-mass problem and the explicit value
//! functions of the quadratic-cost example.
//!
//! The reference motion is `X(0) + W(t)/γ`, so the Gibbs kernel between the
//! marginals is the Gaussian density with variance `1/γ²`. Sinkhorn potentials
//! `u, v` make `π_ij = exp(-u_i - v_j) g(1/γ², y_j - x_i) p_i q_j` a coupling,
//! and the bridge drift is `(1/γ) ∇_x log Σ_j exp(-v_j) q_j g((1-t)/γ², y_j - x)`.
//!
//! An optional target bandwidth `s` replaces each target atom by a Gaussian
//! blob of variance `s²` in the kernel, i.e. the kernel variance becomes
//! `1/γ² + s²` and the drift variance `(1-t)/γ² + s²`. With `s = 0` this is
//! the plain discrete bridge, whose drift blows up like `1/(1-t)` at the end.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, ensure_domain, Error, Result};
use crate::kernels::KernelParams;
use crate::measures::{DiscreteCoupling, EmpiricalMeasure};
use crate::quad::{log_sum_exp, GaussHermite};
use crate::sde::{DriftField, DRIFT_HORIZON_GAP};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log g(t, x)` for the centred Gaussian density with covariance `t·I`.
pub fn log_gaussian_density(t: f64, x: &[f64]) -> Result<f64> {
    ensure_domain(t > 0.0 && t.is_finite(), || format!("variance must be positive, got {t}"))?;
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(-0.5 * x.len() as f64 * (LN_2PI + t.ln()) - sq / (2.0 * t))
}

/// `g(t, x) = (2πt)^{-d/2} exp(-|x|²/(2t))`.
pub fn gaussian_density(t: f64, x: &[f64]) -> Result<f64> {
    Ok(log_gaussian_density(t, x)?.exp())
}

/// Solved discrete Schrödinger system.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornPotentials {
    source: EmpiricalMeasure,
    target: EmpiricalMeasure,
    source_potentials: Vec<f64>,
    target_potentials: Vec<f64>,
    gamma: f64,
    bandwidth: f64,
    tol: f64,
    iterations: usize,
    residual: f64,
    // log(exp(-v_j) q_j), cached for drift evaluation.
    log_beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PotentialsMeta {
    gamma: f64,
    bandwidth: f64,
    tol: f64,
    residual: f64,
    iterations: usize,
    dim: usize,
}

/// Sinkhorn with `s = 0`.
pub fn sinkhorn(
    p0: &EmpiricalMeasure,
    p1: &EmpiricalMeasure,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornPotentials> {
    sinkhorn_smoothed(p0, p1, gamma, 0.0, tol, max_iter)
}

/// Log-domain Sinkhorn with target bandwidth `s ≥ 0`.
///
/// Stops once the L1 row-marginal error falls to `tol` (columns are exact
/// after every sweep).
pub fn sinkhorn_smoothed(
    p0: &EmpiricalMeasure,
    p1: &EmpiricalMeasure,
    gamma: f64,
    bandwidth: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornPotentials> {
    ensure(gamma > 0.0 && gamma.is_finite(), || format!("gamma must be positive, got {gamma}"))?;
    ensure(bandwidth >= 0.0 && bandwidth.is_finite(), || format!("bandwidth must be nonnegative, got {bandwidth}"))?;
    ensure(tol > 0.0, || format!("tolerance must be positive, got {tol}"))?;
    if p0.dim() != p1.dim() {
        return Err(Error::DimensionMismatch { expected: p0.dim(), got: p1.dim() });
    }
    let (n0, n1) = (p0.len(), p1.len());
    let var = 1.0 / (gamma * gamma) + bandwidth * bandwidth;
    let mut log_g = vec![0.0; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let diff: Vec<f64> = p1.point(j).iter().zip(p0.point(i)).map(|(y, x)| y - x).collect();
            log_g[i * n1 + j] = log_gaussian_density(var, &diff)?;
        }
    }
    let lw0: Vec<f64> = p0.weights().iter().map(|w| w.ln()).collect();
    let lw1: Vec<f64> = p1.weights().iter().map(|w| w.ln()).collect();
    let mut u = vec![0.0; n0];
    let mut v = vec![0.0; n1];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = log_sum_exp((0..n1).map(|j| log_g[i * n1 + j] - v[j] + lw1[j]));
        }
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = log_sum_exp((0..n0).map(|i| log_g[i * n1 + j] - u[i] + lw0[i]));
        }
        residual = (0..n0)
            .map(|i| {
                let row: f64 =
                    (0..n1).map(|j| (log_g[i * n1 + j] - u[i] - v[j] + lw0[i] + lw1[j]).exp()).sum();
                (row - p0.weights()[i]).abs()
            })
            .sum();
        ensure_domain(residual.is_finite(), || "Sinkhorn produced a non-finite plan".into())?;
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::NotConverged { iterations, residual });
    }
    // Zero-weight atoms carry infinite potentials; pin them so they stay finite.
    for (ui, w) in u.iter_mut().zip(p0.weights()) {
        if *w == 0.0 || !ui.is_finite() {
            *ui = 0.0;
        }
    }
    for (vj, w) in v.iter_mut().zip(p1.weights()) {
        if *w == 0.0 || !vj.is_finite() {
            *vj = 0.0;
        }
    }
    let log_beta = v.iter().zip(&lw1).map(|(vj, l)| l - vj).collect();
    Ok(SinkhornPotentials {
        source: p0.clone(),
        target: p1.clone(),
        source_potentials: u,
        target_potentials: v,
        gamma,
        bandwidth,
        tol,
        iterations,
        residual,
        log_beta,
    })
}

impl SinkhornPotentials {
    pub fn source(&self) -> &EmpiricalMeasure {
        &self.source
    }

    pub fn target(&self) -> &EmpiricalMeasure {
        &self.target
    }

    pub fn source_potentials(&self) -> &[f64] {
        &self.source_potentials
    }

    pub fn target_potentials(&self) -> &[f64] {
        &self.target_potentials
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    fn kernel_variance(&self) -> f64 {
        1.0 / (self.gamma * self.gamma) + self.bandwidth * self.bandwidth
    }

    /// Row-major plan `π_ij`.
    pub fn plan(&self) -> Vec<f64> {
        let (n0, n1) = (self.source.len(), self.target.len());
        let var = self.kernel_variance();
        let mut plan = vec![0.0; n0 * n1];
        let mut diff = vec![0.0; self.dim()];
        for i in 0..n0 {
            for j in 0..n1 {
                for (k, dk) in diff.iter_mut().enumerate() {
                    *dk = self.target.point(j)[k] - self.source.point(i)[k];
                }
                let lg = log_gaussian_density(var, &diff).unwrap_or(f64::NEG_INFINITY);
                let w = self.source.weights()[i] * self.target.weights()[j];
                plan[i * n1 + j] = if w == 0.0 {
                    0.0
                } else {
                    (lg - self.source_potentials[i] - self.target_potentials[j]).exp() * w
                };
            }
        }
        plan
    }

    /// The plan as a validated coupling; fails if `tol` was looser than 1e-10.
    pub fn coupling(&self) -> Result<DiscreteCoupling> {
        DiscreteCoupling::new(self.source.clone(), self.target.clone(), self.plan())
    }

    /// Reference measure `p_i g(·) q_j` of the entropic problem, row-major.
    pub fn reference(&self) -> Vec<f64> {
        let (n0, n1) = (self.source.len(), self.target.len());
        let var = self.kernel_variance();
        let mut r = vec![0.0; n0 * n1];
        for i in 0..n0 {
            for j in 0..n1 {
                let diff: Vec<f64> =
                    self.target.point(j).iter().zip(self.source.point(i)).map(|(y, x)| y - x).collect();
                r[i * n1 + j] = gaussian_density(var, &diff).unwrap_or(0.0)
                    * self.source.weights()[i]
                    * self.target.weights()[j];
            }
        }
        r
    }

    /// Drift at `t < 1` without range checks; writes into `out`.
    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let tau = (1.0 - t) / (self.gamma * self.gamma) + self.bandwidth * self.bandwidth;
        let n1 = self.target.len();
        let pts = self.target.points();
        let mut max = f64::NEG_INFINITY;
        let mut logits = Vec::with_capacity(n1);
        for j in 0..n1 {
            let y = &pts[j * d..(j + 1) * d];
            let sq: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let l = self.log_beta[j] - sq / (2.0 * tau);
            max = max.max(l);
            logits.push(l);
        }
        out.fill(0.0);
        let mut total = 0.0;
        for (j, l) in logits.iter().enumerate() {
            let p = (l - max).exp();
            total += p;
            for k in 0..d {
                out[k] += p * pts[j * d + k];
            }
        }
        let scale = 1.0 / (self.gamma * tau);
        for k in 0..d {
            out[k] = (out[k] / total - x[k]) * scale;
        }
    }

    /// `log h(t, x) = log Σ_j β_j g(τ, y_j - x)`; the drift is `(1/γ) ∇ log h`.
    pub fn log_harmonic(&self, t: f64, x: &[f64]) -> Result<f64> {
        let tau = (1.0 - t) / (self.gamma * self.gamma) + self.bandwidth * self.bandwidth;
        let terms: Result<Vec<f64>> = (0..self.target.len())
            .map(|j| {
                let diff: Vec<f64> = self.target.point(j).iter().zip(x).map(|(y, xi)| y - xi).collect();
                Ok(self.log_beta[j] + log_gaussian_density(tau, &diff)?)
            })
            .collect();
        Ok(log_sum_exp(terms?))
    }

    /// Writes `source_potentials.csv`, `target_potentials.csv` and `potentials.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, m, pot) in [
            ("source_potentials.csv", &self.source, &self.source_potentials),
            ("target_potentials.csv", &self.target, &self.target_potentials),
        ] {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_potentials_csv(m, pot, file)?;
        }
        let path = dir.join("potentials.json");
        let meta = PotentialsMeta {
            gamma: self.gamma,
            bandwidth: self.bandwidth,
            tol: self.tol,
            residual: self.residual,
            iterations: self.iterations,
            dim: self.dim(),
        };
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Reads back what [`save`](Self::save) wrote.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("potentials.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: PotentialsMeta = serde_json::from_str(&text)?;
        let read = |name: &str| -> Result<(EmpiricalMeasure, Vec<f64>)> {
            let path = dir.join(name);
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            read_potentials_csv(file, meta.dim)
        };
        let (source, u) = read("source_potentials.csv")?;
        let (target, v) = read("target_potentials.csv")?;
        let log_beta = v.iter().zip(target.weights()).map(|(vj, w)| w.ln() - vj).collect();
        Ok(Self {
            source,
            target,
            source_potentials: u,
            target_potentials: v,
            gamma: meta.gamma,
            bandwidth: meta.bandwidth,
            tol: meta.tol,
            iterations: meta.iterations,
            residual: meta.residual,
            log_beta,
        })
    }
}

fn write_potentials_csv<W: Write>(m: &EmpiricalMeasure, pot: &[f64], out: W) -> Result<()> {
    let d = m.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("weight".into());
    header.push("potential".into());
    w.write_record(&header)?;
    for i in 0..m.len() {
        let mut row: Vec<String> = m.point(i).iter().map(f64::to_string).collect();
        row.push(m.weights()[i].to_string());
        row.push(pot[i].to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

fn read_potentials_csv<R: Read>(input: R, dim: usize) -> Result<(EmpiricalMeasure, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() != dim + 2 {
        return Err(Error::Config(format!("potentials CSV needs {} columns, found {}", dim + 2, header.len())));
    }
    let (mut pts, mut ws, mut pot) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Config(format!("bad number in potentials CSV: {e}")))?;
        pts.extend_from_slice(&vals[..dim]);
        ws.push(vals[dim]);
        pot.push(vals[dim + 1]);
    }
    Ok((EmpiricalMeasure::new(dim, pts, ws)?, pot))
}

/// Bridge drift `u(t, x)` for `t < 1`.
pub fn bridge_drift_m0(pot: &SinkhornPotentials, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    ensure_domain(t < 1.0 && t.is_finite(), || format!("bridge drift needs t < 1, got {t}"))?;
    if x.len() != pot.dim() {
        return Err(Error::DimensionMismatch { expected: pot.dim(), got: x.len() });
    }
    let mut out = vec![0.0; x.len()];
    pot.drift_into(t, x, &mut out);
    ensure_domain(out.iter().all(|v| v.is_finite()), || "bridge drift is not finite".into())?;
    Ok(out)
}

/// The bridge drift as a feedback field for the overdamped simulator.
pub struct BridgeDrift<'a>(pub &'a SinkhornPotentials);

impl DriftField for BridgeDrift<'_> {
    fn eval(&self, t: f64, x: &[f64], _y: Option<&[f64]>, out: &mut [f64]) {
        self.0.drift_into(t.min(1.0 - DRIFT_HORIZON_GAP), x, out);
    }
}

/// Built-in bounded smooth terminal rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    Constant { value: f64 },
    /// `amplitude · mean_i cos(y_i)`.
    ScaledCosine { amplitude: f64 },
    /// `amplitude · exp(-|y - center|² / (2 width²))`.
    GaussianBump { amplitude: f64, center: Vec<f64>, width: f64 },
}

/// Terminal reward `f` together with the Gauss–Hermite rule used for `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalReward {
    kind: RewardKind,
    dim: usize,
    // Tensor-product standard-normal nodes, row-major `len × dim`.
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

pub const DEFAULT_HERMITE_NODES: usize = 64;
const MAX_TENSOR_NODES: usize = 1 << 20;

impl TerminalReward {
    pub fn new(kind: RewardKind, dim: usize) -> Result<Self> {
        Self::with_nodes(kind, dim, DEFAULT_HERMITE_NODES)
    }

    pub fn with_nodes(kind: RewardKind, dim: usize, per_axis: usize) -> Result<Self> {
        ensure(dim >= 1, || "dimension must be at least 1".into())?;
        match &kind {
            RewardKind::Constant { value } => ensure(value.is_finite(), || "reward must be finite".into())?,
            RewardKind::ScaledCosine { amplitude } => {
                ensure(amplitude.is_finite(), || "amplitude must be finite".into())?
            }
            RewardKind::GaussianBump { amplitude, center, width } => {
                ensure(amplitude.is_finite(), || "amplitude must be finite".into())?;
                ensure(*width > 0.0, || "bump width must be positive".into())?;
                if center.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
                }
            }
        }
        let total = per_axis.checked_pow(dim as u32).filter(|&n| n <= MAX_TENSOR_NODES);
        let Some(total) = total else {
            return Err(Error::TooLarge(format!("{per_axis}^{dim} quadrature nodes")));
        };
        let gh = GaussHermite::new(per_axis)?;
        let mut nodes = vec![0.0; total * dim];
        let mut log_weights = vec![0.0; total];
        for (idx, lw) in log_weights.iter_mut().enumerate() {
            let mut rem = idx;
            for k in 0..dim {
                let a = rem % per_axis;
                rem /= per_axis;
                nodes[idx * dim + k] = gh.nodes()[a];
                *lw += gh.weights()[a].ln();
            }
        }
        Ok(Self { kind, dim, nodes, log_weights })
    }

    pub fn constant(value: f64, dim: usize) -> Result<Self> {
        Self::new(RewardKind::Constant { value }, dim)
    }

    pub fn scaled_cosine(amplitude: f64, dim: usize) -> Result<Self> {
        Self::new(RewardKind::ScaledCosine { amplitude }, dim)
    }

    pub fn gaussian_bump(amplitude: f64, center: Vec<f64>, width: f64) -> Result<Self> {
        let dim = center.len();
        Self::new(RewardKind::GaussianBump { amplitude, center, width }, dim)
    }

    /// Parses `constant:<c>`, `cosine:<amplitude>` or `bump:<amplitude>:<width>`
    /// (bump centred at the origin).
    pub fn parse(desc: &str, dim: usize) -> Result<Self> {
        let parts: Vec<&str> = desc.trim().split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {s:?} in reward {desc:?}")))
        };
        let kind = match parts.as_slice() {
            ["constant", c] => RewardKind::Constant { value: num(c)? },
            ["cosine", a] => RewardKind::ScaledCosine { amplitude: num(a)? },
            ["bump", a, w] => RewardKind::GaussianBump { amplitude: num(a)?, center: vec![0.0; dim], width: num(w)? },
            _ => return Err(Error::Config(format!("unknown reward descriptor {desc:?}"))),
        };
        Self::new(kind, dim)
    }

    pub fn kind(&self) -> &RewardKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared bound `sup |f|`.
    pub fn bound(&self) -> f64 {
        match &self.kind {
            RewardKind::Constant { value } => value.abs(),
            RewardKind::ScaledCosine { amplitude } | RewardKind::GaussianBump { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match &self.kind {
            RewardKind::Constant { value } => *value,
            RewardKind::ScaledCosine { amplitude } => {
                amplitude * y.iter().map(|v| v.cos()).sum::<f64>() / y.len() as f64
            }
            RewardKind::GaussianBump { amplitude, center, width } => {
                let sq: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-sq / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn grad(&self, y: &[f64], out: &mut [f64]) {
        match &self.kind {
            RewardKind::Constant { .. } => out.fill(0.0),
            RewardKind::ScaledCosine { amplitude } => {
                let d = y.len() as f64;
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -amplitude * v.sin() / d;
                }
            }
            RewardKind::GaussianBump { width, center, .. } => {
                let f = self.eval(y);
                for ((o, v), c) in out.iter_mut().zip(y).zip(center) {
                    *o = -f * (v - c) / (width * width);
                }
            }
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.log_weights.len()
    }

    // log Σ w_i exp f(x + s z_i), optionally with the softmax-weighted gradient.
    fn smoothed(&self, s: f64, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let d = self.dim;
        let n = self.num_nodes();
        let bound = self.bound() * (1.0 + 1e-12) + 1e-300;
        let mut point = vec![0.0; d];
        let mut logits = Vec::with_capacity(n);
        for i in 0..n {
            for k in 0..d {
                point[k] = x[k] + s * self.nodes[i * d + k];
            }
            let f = self.eval(&point);
            ensure_domain(f.abs() <= bound, || format!("reward {f} exceeds its declared bound {}", self.bound()))?;
            logits.push(self.log_weights[i] + f);
        }
        let lse = log_sum_exp(logits.iter().copied());
        if let Some(g) = grad {
            g.fill(0.0);
            let mut gi = vec![0.0; d];
            for i in 0..n {
                let p = (logits[i] - lse).exp();
                for k in 0..d {
                    point[k] = x[k] + s * self.nodes[i * d + k];
                }
                self.grad(&point, &mut gi);
                for k in 0..d {
                    g[k] += p * gi[k];
                }
            }
        }
        Ok(lse)
    }
}

fn check_point(reward: &TerminalReward, x: &[f64]) -> Result<()> {
    if x.len() != reward.dim {
        return Err(Error::DimensionMismatch { expected: reward.dim, got: x.len() });
    }
    ensure(x.iter().all(|v| v.is_finite()), || "evaluation point must be finite".into())
}

fn check_unit(t: f64) -> Result<()> {
    ensure_domain((0.0..=1.0).contains(&t), || format!("time {t} outside [0, 1]"))
}

// Value with the remaining time `r = 1 - t` given directly.
fn phi_remaining(reward: &TerminalReward, gamma: f64, r: f64, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
    if r <= 0.0 {
        if let Some(g) = grad {
            reward.grad(x, g);
        }
        return Ok(reward.eval(x));
    }
    reward.smoothed(r.sqrt() / gamma, x, grad)
}

/// `φ(t, x) = log E[exp f(x + √(1-t) Z / γ)]`, and `f(x)` at `t = 1`.
pub fn phi_value(reward: &TerminalReward, gamma: f64, t: f64, x: &[f64]) -> Result<f64> {
    check_unit(t)?;
    check_point(reward, x)?;
    ensure(gamma > 0.0, || "gamma must be positive".into())?;
    phi_remaining(reward, gamma, 1.0 - t, x, None)
}

/// `∇_x φ(t, x)` by differentiating the quadrature.
pub fn phi_gradient(reward: &TerminalReward, gamma: f64, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_unit(t)?;
    check_point(reward, x)?;
    ensure(gamma > 0.0, || "gamma must be positive".into())?;
    let mut g = vec![0.0; x.len()];
    phi_remaining(reward, gamma, 1.0 - t, x, Some(&mut g))?;
    Ok(g)
}

fn eta(params: &KernelParams, t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    let k = params.k(1.0 - t);
    x.iter().zip(y).map(|(a, b)| a + k * b).collect()
}

/// `ψ^m(t, x, y) = φ(φ^m(t), x + K(1-t) y)`.
pub fn psi_m_value(reward: &TerminalReward, params: &KernelParams, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_unit(t)?;
    check_point(reward, x)?;
    check_point(reward, y)?;
    phi_remaining(reward, params.gamma(), params.one_minus_phi(t), &eta(params, t, x, y), None)
}

/// `D_y ψ^m = K(1-t) ∇φ(φ^m(t), x + K(1-t) y)`; zero at `t = 1`.
pub fn optimal_control_m(
    reward: &TerminalReward,
    params: &KernelParams,
    t: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    check_unit(t)?;
    check_point(reward, x)?;
    check_point(reward, y)?;
    let mut g = vec![0.0; x.len()];
    optimal_control_into(reward, params, t, x, y, &mut g)?;
    Ok(g)
}

fn optimal_control_into(
    reward: &TerminalReward,
    params: &KernelParams,
    t: f64,
    x: &[f64],
    y: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let k = params.k(1.0 - t);
    phi_remaining(reward, params.gamma(), params.one_minus_phi(t), &eta(params, t, x, y), Some(out))?;
    out.iter_mut().for_each(|v| *v *= k);
    Ok(())
}

/// Optimal feedback `D_y ψ^m` as a drift field for the underdamped simulator.
pub struct OptimalControl<'a> {
    pub reward: &'a TerminalReward,
    pub params: KernelParams,
    /// Multiplies the optimal control; `1.0` is optimal.
    pub scale: f64,
}

impl DriftField for OptimalControl<'_> {
    fn eval(&self, t: f64, x: &[f64], y: Option<&[f64]>, out: &mut [f64]) {
        let zeros;
        let y = match y {
            Some(y) => y,
            None => {
                zeros = vec![0.0; x.len()];
                &zeros
            }
        };
        if optimal_control_into(self.reward, &self.params, t, x, y, out).is_err() {
            out.fill(f64::NAN);
        }
        out.iter_mut().for_each(|v| *v *= self.scale);
    }
}

/// Central-difference residual of `∂_t φ + (1/2γ²) Δφ + (1/2γ²) |∇φ|²` for any `value(t, x)`.
pub fn hjb_residual_phi_fn(
    value: impl Fn(f64, &[f64]) -> Result<f64>,
    gamma: f64,
    t: f64,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    ensure(h > 0.0, || "step must be positive".into())?;
    ensure_domain(t - h > 0.0 && t + h < 1.0, || format!("stencil [{}, {}] leaves (0, 1)", t - h, t + h))?;
    let c = value(t, x)?;
    let dt = (value(t + h, x)? - value(t - h, x)?) / (2.0 * h);
    let (mut lap, mut grad_sq) = (0.0, 0.0);
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let up = value(t, &xp)?;
        xp[k] = x[k] - h;
        let dn = value(t, &xp)?;
        xp[k] = x[k];
        lap += (up - 2.0 * c + dn) / (h * h);
        grad_sq += ((up - dn) / (2.0 * h)).powi(2);
    }
    Ok(dt + (lap + grad_sq) / (2.0 * gamma * gamma))
}

pub fn hjb_residual_phi(reward: &TerminalReward, gamma: f64, t: f64, x: &[f64], h: f64) -> Result<f64> {
    check_point(reward, x)?;
    hjb_residual_phi_fn(|s, z| phi_value(reward, gamma, s, z), gamma, t, x, h)
}

/// Central-difference residual of
/// `∂_t ψ + ½ Δ_y ψ + ⟨(1/m) D_x ψ - (γ/m) D_y ψ, y⟩ + ½ |D_y ψ|²` for any `value(t, x, y)`.
pub fn hjb_residual_psi_fn(
    value: impl Fn(f64, &[f64], &[f64]) -> Result<f64>,
    params: &KernelParams,
    t: f64,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<f64> {
    ensure(h > 0.0, || "step must be positive".into())?;
    ensure_domain(t - h > 0.0 && t + h < 1.0, || format!("stencil [{}, {}] leaves (0, 1)", t - h, t + h))?;
    let (m, gamma) = (params.m(), params.gamma());
    let c = value(t, x, y)?;
    let dt = (value(t + h, x, y)? - value(t - h, x, y)?) / (2.0 * h);
    let mut total = dt;
    let (mut xp, mut yp) = (x.to_vec(), y.to_vec());
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let xu = value(t, &xp, y)?;
        xp[k] = x[k] - h;
        let xd = value(t, &xp, y)?;
        xp[k] = x[k];
        yp[k] = y[k] + h;
        let yu = value(t, x, &yp)?;
        yp[k] = y[k] - h;
        let yd = value(t, x, &yp)?;
        yp[k] = y[k];
        let dx = (xu - xd) / (2.0 * h);
        let dy = (yu - yd) / (2.0 * h);
        total += 0.5 * (yu - 2.0 * c + yd) / (h * h);
        total += (dx / m - gamma / m * dy) * y[k];
        total += 0.5 * dy * dy;
    }
    Ok(total)
}

pub fn hjb_residual_psi(
    reward: &TerminalReward,
    params: &KernelParams,
    t: f64,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<f64> {
    check_point(reward, x)?;
    check_point(reward, y)?;
    hjb_residual_psi_fn(|s, a, b| psi_m_value(reward, params, s, a, b), params, t, x, y, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_values() {
        assert!((gaussian_density(1.0, &[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let a = gaussian_density(0.7, &[0.3, -1.0]).unwrap();
        assert_eq!(a, gaussian_density(0.7, &[-0.3, 1.0]).unwrap());
        let r = gaussian_density(1.4, &[0.0; 3]).unwrap() / gaussian_density(0.7, &[0.0; 3]).unwrap();
        assert!((r - 2f64.powf(-1.5)).abs() < 1e-15);
        assert!(gaussian_density(0.0, &[0.0]).is_err());
    }

    #[test]
    fn single_point_sinkhorn() {
        let p = EmpiricalMeasure::dirac(&[0.5]).unwrap();
        let pot = sinkhorn(&p, &p, 1.0, 1e-12, 10).unwrap();
        assert_eq!(pot.residual(), 0.0);
        assert!((pot.plan()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_target_drift() {
        let p0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let p1 = EmpiricalMeasure::dirac(&[2.0]).unwrap();
        let pot = sinkhorn(&p0, &p1, 1.5, 1e-12, 10).unwrap();
        let u = bridge_drift_m0(&pot, 0.4, &[0.3]).unwrap();
        assert!((u[0] - 1.5 * (2.0 - 0.3) / 0.6).abs() < 1e-12);
        assert!(bridge_drift_m0(&pot, 1.0, &[0.3]).is_err());
    }

    #[test]
    fn cosine_reward_boundary_and_constant() {
        let f = TerminalReward::scaled_cosine(0.5, 1).unwrap();
        assert_eq!(phi_value(&f, 1.0, 1.0, &[0.3]).unwrap(), 0.5 * 0.3f64.cos());
        let c = TerminalReward::constant(1.25, 2).unwrap();
        assert!((phi_value(&c, 2.0, 0.3, &[0.1, 4.0]).unwrap() - 1.25).abs() < 1e-13);
        assert!(optimal_control_m(&c, &KernelParams::new(0.1, 1.0).unwrap(), 0.2, &[0.0, 0.0], &[1.0, 1.0])
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn reward_parser() {
        assert!(matches!(TerminalReward::parse("cosine:0.5", 1).unwrap().kind(), RewardKind::ScaledCosine { .. }));
        assert!(TerminalReward::parse("bump:1:0.5", 2).is_ok());
        assert!(TerminalReward::parse("wave:1", 1).is_err());
        assert!(TerminalReward::with_nodes(RewardKind::Constant { value: 0.0 }, 5, 64).is_err());
    }
}
