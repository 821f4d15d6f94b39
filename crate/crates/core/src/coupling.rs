//! Positive-mass paths built from a zero-mass path.
//!
//! Given an overdamped path `X` with feedback drift `u`, the mass-`m` path
//!
//! ```text
//! X^m(t) = (1 - K(t)/K(1)) X(0) + f(t) Ψ(X∘φ / f²)(t)
//! Y^m(t) = -e^{-γt/m} X(0)/K(1) + X(φ(t))/K(1-t) - γ Ψ(X∘φ / f²)(t)
//! ```
//!
//! is driven by the control `u(φ(t)) f(t)`, starts from momentum
//! `(X(φ(0)) - X(0))/K(1)` and hits `X(1)` at time 1. The source path only
//! needs to be known at the warped times `φ(t_k)` of the evaluation grid, so
//! callers simulate on a grid that contains them (see [`simulation_grid`]).

use std::io::Write;

use serde::Serialize;

use crate::error::{ensure, ensure_domain, Error, Result};
use crate::grid::{SampledPath, TimeGrid};
use crate::kernels::{psi_over_f_squared, KernelParams};
use crate::quad::golden_section;
use crate::sde::{Trajectory, DRIFT_HORIZON_GAP};

/// Nodes closer than this are treated as the same time.
pub const NODE_TOLERANCE: f64 = 1e-12;

/// Evaluation nodes must stay this far below 1, except the final node 1 itself.
pub const INTERIOR_GAP: f64 = DRIFT_HORIZON_GAP;

#[derive(Debug, Clone)]
pub struct CouplingResult {
    pub xm: SampledPath,
    pub ym: SampledPath,
    /// Effective control fed to the cost.
    pub control: SampledPath,
    /// `|X^m(1) - X(1)|` as produced by the construction.
    pub terminal_gap: f64,
    pub params: KernelParams,
    /// Initial momentum `Y^m(0)`.
    pub y0: Vec<f64>,
    /// Constant control shift of the corrected variant.
    pub beta: Option<Vec<f64>>,
    /// `max_k |f(t_k) Ψ(1/f²)(t_k) - K(t_k)/K(1)|` over interior nodes.
    pub self_test_error: f64,
}

#[derive(Serialize)]
struct CouplingMeta<'a> {
    m: f64,
    gamma: f64,
    terminal_gap: f64,
    self_test_error: f64,
    y0: &'a [f64],
    beta: Option<&'a [f64]>,
}

impl CouplingResult {
    pub fn grid(&self) -> &TimeGrid {
        self.xm.grid()
    }

    /// CSV with columns `t, xm_1..xm_d, ym_1..ym_d, v_1..v_d`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.xm.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for prefix in ["xm", "ym", "v"] {
            header.extend((1..=d).map(|i| format!("{prefix}_{i}")));
        }
        w.write_record(&header)?;
        for (k, t) in self.grid().nodes().iter().enumerate() {
            let mut row = vec![t.to_string()];
            for p in [&self.xm, &self.ym, &self.control] {
                row.extend(p.at(k).iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// JSON sidecar with `m`, `gamma` and the terminal gap.
    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&CouplingMeta {
            m: self.params.m(),
            gamma: self.params.gamma(),
            terminal_gap: self.terminal_gap,
            self_test_error: self.self_test_error,
            y0: &self.y0,
            beta: self.beta.as_deref(),
        })?)
    }
}

/// `φ(t_k)` for every evaluation node.
pub fn warped_nodes(params: &KernelParams, eval_grid: &TimeGrid) -> Vec<f64> {
    eval_grid.nodes().iter().map(|&t| params.phi(t)).collect()
}

/// Evaluation grid merged with `{0}` and the warped nodes of every mass.
pub fn simulation_grid(eval_grid: &TimeGrid, masses: &[KernelParams]) -> Result<TimeGrid> {
    let mut extra = vec![0.0];
    for p in masses {
        extra.extend(warped_nodes(p, eval_grid));
    }
    eval_grid.union(&extra, NODE_TOLERANCE)
}

fn check_eval_grid(eval_grid: &TimeGrid) -> Result<()> {
    ensure_domain(eval_grid.len() >= 2, || "evaluation grid needs at least two nodes".into())?;
    ensure_domain(eval_grid.first() == 0.0 && eval_grid.last() == 1.0, || {
        "evaluation grid must run from 0 to 1".into()
    })?;
    let last_interior = eval_grid.nodes()[eval_grid.len() - 2];
    ensure_domain(last_interior < 1.0 - INTERIOR_GAP, || {
        format!("interior evaluation node {last_interior} is within {INTERIOR_GAP} of t = 1")
    })
}

struct Warped {
    x0: Vec<f64>,
    // X(φ(t_k)) and u(φ(t_k)) for every evaluation node.
    x: Vec<f64>,
    u: Vec<f64>,
}

fn sample_warped(traj: &Trajectory, params: &KernelParams, eval_grid: &TimeGrid) -> Result<Warped> {
    let d = traj.dim();
    let tg = traj.grid();
    ensure_domain(tg.first() == 0.0 && tg.last() == 1.0, || "source path must cover [0, 1]".into())?;
    let mut x = Vec::with_capacity(eval_grid.len() * d);
    let mut u = Vec::with_capacity(eval_grid.len() * d);
    for s in warped_nodes(params, eval_grid) {
        let j = tg.locate(s, NODE_TOLERANCE).ok_or_else(|| {
            Error::Domain(format!("source path has no node at warped time {s}; simulate on simulation_grid()"))
        })?;
        x.extend_from_slice(traj.x_at(j));
        u.extend_from_slice(traj.u_at(j));
    }
    Ok(Warped { x0: traj.x_at(0).to_vec(), x, u })
}

fn interior(eval_grid: &TimeGrid) -> Result<TimeGrid> {
    TimeGrid::new(eval_grid.nodes()[..eval_grid.len() - 1].to_vec())
}

/// Mass-`m` path driven by `u(φ(t)) f(t)` with terminal value `X(1)`.
///
/// `traj` is an overdamped path whose grid contains the warped nodes of
/// `eval_grid`; `eval_grid` runs from 0 to 1.
pub fn build_zm(traj: &Trajectory, params: &KernelParams, eval_grid: &TimeGrid) -> Result<CouplingResult> {
    check_eval_grid(eval_grid)?;
    let w = sample_warped(traj, params, eval_grid)?;
    let d = traj.dim();
    let n = eval_grid.len();
    let inner = interior(eval_grid)?;
    let nodes = eval_grid.nodes();

    let mut g = vec![0.0; (n - 1) * d];
    g.copy_from_slice(&w.x[..(n - 1) * d]);
    let psi = psi_over_f_squared(params, &SampledPath::from_parts_unchecked(inner.clone(), d, g))?;
    let ones = SampledPath::constant(inner.clone(), &[1.0]);
    let psi_one = psi_over_f_squared(params, &ones)?;

    let (gamma, k1) = (params.gamma(), params.k(1.0));
    let mut xm = vec![0.0; n * d];
    let mut ym = vec![0.0; n * d];
    let mut v = vec![0.0; n * d];
    let mut self_test_error: f64 = 0.0;
    for k in 0..n - 1 {
        let t = nodes[k];
        let (kt, ft, k_rem) = (params.k(t), params.f(t), params.k(1.0 - t));
        let decay = (-params.rate() * t).exp();
        self_test_error = self_test_error.max((ft * psi_one.at(k)[0] - kt / k1).abs());
        for i in 0..d {
            let (x0, xs, p) = (w.x0[i], w.x[k * d + i], psi.at(k)[i]);
            xm[k * d + i] = (1.0 - kt / k1) * x0 + ft * p;
            ym[k * d + i] = -decay * x0 / k1 + xs / k_rem - gamma * p;
            v[k * d + i] = w.u[k * d + i] * ft;
        }
    }
    let last = (n - 1) * d;
    xm[last..].copy_from_slice(&w.x[last..]);
    ym.copy_within(last - d..last, last);
    // v(1) = u(1) f(1) = 0 already.
    let y0: Vec<f64> = (0..d).map(|i| (w.x[i] - w.x0[i]) / k1).collect();
    if !v.iter().chain(&xm).chain(&ym).all(|z| z.is_finite()) {
        return Err(Error::Numerical(format!("coupling produced non-finite values at m = {}", params.m())));
    }
    Ok(CouplingResult {
        xm: SampledPath::from_parts_unchecked(eval_grid.clone(), d, xm),
        ym: SampledPath::from_parts_unchecked(eval_grid.clone(), d, ym),
        control: SampledPath::from_parts_unchecked(eval_grid.clone(), d, v),
        terminal_gap: 0.0,
        params: *params,
        y0,
        beta: None,
        self_test_error,
    })
}

/// Variant started from a prescribed momentum `y0_sample`, corrected by the
/// constant shift `β = γ (X(φ(0)) - X(0) - K(1) y0) / (1 - φ(0))` so that the
/// terminal value is still `X(1)`.
pub fn build_zm_beta(
    traj: &Trajectory,
    y0_sample: &[f64],
    params: &KernelParams,
    eval_grid: &TimeGrid,
) -> Result<CouplingResult> {
    let d = traj.dim();
    if y0_sample.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: y0_sample.len() });
    }
    ensure(y0_sample.iter().all(|v| v.is_finite()), || "initial momentum must be finite".into())?;
    let base = build_zm(traj, params, eval_grid)?;
    let w = sample_warped(traj, params, eval_grid)?;
    let (gamma, k1) = (params.gamma(), params.k(1.0));
    let gap: Vec<f64> = (0..d).map(|i| w.x[i] - w.x0[i] - k1 * y0_sample[i]).collect();
    let beta: Vec<f64> = gap.iter().map(|g| gamma * g / params.one_minus_phi(0.0)).collect();

    let n = eval_grid.len();
    let nodes = eval_grid.nodes();
    let mut xm = base.xm.into_values();
    let mut ym = base.ym.into_values();
    let mut v = base.control.into_values();
    for k in 0..n {
        let t = nodes[k];
        let (kt, decay, a_t, b_t, ft) =
            (params.k(t), (-params.rate() * t).exp(), params.k_conv_f(t), params.exp_conv_f(t), params.f(t));
        for i in 0..d {
            xm[k * d + i] += -kt * gap[i] / k1 + a_t * beta[i];
            if k < n - 1 {
                ym[k * d + i] += -decay * gap[i] / k1 + b_t * beta[i];
                v[k * d + i] += beta[i] * ft;
            }
        }
    }
    let last = (n - 1) * d;
    ym.copy_within(last - d..last, last);
    let terminal_gap = (0..d).map(|i| (xm[last + i] - w.x[last + i]).abs()).fold(0.0, f64::max);
    xm[last..].copy_from_slice(&w.x[last..]);
    Ok(CouplingResult {
        xm: SampledPath::from_parts_unchecked(eval_grid.clone(), d, xm),
        ym: SampledPath::from_parts_unchecked(eval_grid.clone(), d, ym),
        control: SampledPath::from_parts_unchecked(eval_grid.clone(), d, v),
        terminal_gap,
        params: *params,
        y0: y0_sample.to_vec(),
        beta: Some(beta),
        self_test_error: base.self_test_error,
    })
}

/// `η(t) = X(t) + K(1-t) Y(t)`; `η(1) = X(1)`.
pub fn eta_transform(traj: &Trajectory, params: &KernelParams) -> Result<SampledPath> {
    let d = traj.dim();
    ensure_domain(traj.y_at(0).is_some(), || "eta transform needs momentum samples".into())?;
    let grid = traj.grid().clone();
    let mut out = Vec::with_capacity(grid.len() * d);
    for (k, t) in grid.nodes().iter().enumerate() {
        let kr = params.k(1.0 - t);
        let y = traj.y_at(k).unwrap_or(&[]);
        out.extend(traj.x_at(k).iter().zip(y).map(|(x, y)| x + kr * y));
    }
    Ok(SampledPath::from_parts_unchecked(grid, d, out))
}

/// `(1/f(0)) inf_{R>0} [R φ(0) + V/C₁(R) + √(d φ(0))]` with `V = v0_plus_1`,
/// minimised over `log R ∈ [log 1e-6, log 1e6]`.
pub fn momentum_bound(
    params: &KernelParams,
    v0_plus_1: f64,
    c1_lower: impl Fn(f64) -> f64,
    dim: usize,
) -> Result<f64> {
    ensure(v0_plus_1.is_finite() && v0_plus_1 >= 0.0, || format!("V + 1 must be nonnegative, got {v0_plus_1}"))?;
    let phi0 = params.phi(0.0);
    let tail = (dim as f64 * phi0).sqrt();
    let objective = |log_r: f64| {
        let r = log_r.exp();
        let c1 = c1_lower(r);
        if c1 > 0.0 {
            r * phi0 + v0_plus_1 / c1 + tail
        } else {
            f64::INFINITY
        }
    };
    let (lo, hi) = (1e-6f64.ln(), 1e6f64.ln());
    // Coarse scan so that a non-unimodal objective still lands in the right basin.
    let scan = 240;
    let (mut best_k, mut best) = (0, f64::INFINITY);
    for k in 0..=scan {
        let v = objective(lo + (hi - lo) * k as f64 / scan as f64);
        if v < best {
            (best_k, best) = (k, v);
        }
    }
    let step = (hi - lo) / scan as f64;
    let a = (lo + step * (best_k as f64 - 1.0)).max(lo);
    let b = (lo + step * (best_k as f64 + 1.0)).min(hi);
    let (_, refined) = golden_section(objective, a, b, 1e-12);
    let value = refined.min(best) / params.f(0.0);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("momentum bound is not finite (V + 1 = {v0_plus_1})")));
    }
    Ok(value)
}

/// Closed form of [`momentum_bound`] for `L = |u|²/2`, where `C₁(R) = R/2`.
pub fn momentum_bound_quadratic(params: &KernelParams, v0_plus_1: f64, dim: usize) -> f64 {
    let phi0 = params.phi(0.0);
    (2.0 * (2.0 * v0_plus_1 * phi0).sqrt() + (dim as f64 * phi0).sqrt()) / params.f(0.0)
}
