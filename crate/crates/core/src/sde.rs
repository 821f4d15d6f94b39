//! Simulation of the controlled Langevin system
//!
//! ```text
//! dX = (Y/m) dt
//! dY = (u - (γ/m) Y) dt + σ dW
//! ```
//!
//! and of its overdamped limit `γ dX = u dt + σ dW`.
//!
//! Controls are feedback fields `u(t, x, y)` held constant over each step at
//! their left-node value. The `u` samples of a [`Trajectory`] are those held
//! values; the terminal sample repeats the last one. Near `t = 1` drifts are
//! not evaluated past `1 - 1e-6`: the previous value is held instead, which is
//! what singular bridge drifts require.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{ensure, ensure_domain, Error, Result};
use crate::grid::{SampledPath, TimeGrid};
use crate::kernels::{int_one_minus_exp, int_sq_one_minus_exp, one_minus_exp_neg, KernelParams};
use crate::rng::{fill_normal, stream, PathSeed, Purpose};

/// Drifts are never evaluated at or beyond `1 - DRIFT_HORIZON_GAP`.
pub const DRIFT_HORIZON_GAP: f64 = 1e-6;

/// Constant-coefficient noise and the kernel parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig {
    params: KernelParams,
    dim: usize,
    sigma: Vec<f64>,
}

impl SdeConfig {
    /// Identity noise matrix.
    pub fn new(params: KernelParams, dim: usize) -> Result<Self> {
        ensure(dim >= 1, || "dimension must be at least 1".into())?;
        let mut sigma = vec![0.0; dim * dim];
        (0..dim).for_each(|i| sigma[i * dim + i] = 1.0);
        Ok(Self { params, dim, sigma })
    }

    /// Row-major `d×d` noise matrix.
    pub fn with_sigma(params: KernelParams, dim: usize, sigma: Vec<f64>) -> Result<Self> {
        ensure(dim >= 1, || "dimension must be at least 1".into())?;
        if sigma.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: sigma.len() });
        }
        ensure(sigma.iter().all(|s| s.is_finite()), || "sigma must be finite".into())?;
        Ok(Self { params, dim, sigma })
    }

    /// `σ = s·I`.
    pub fn scaled_identity(params: KernelParams, dim: usize, s: f64) -> Result<Self> {
        let mut c = Self::new(params, dim)?;
        c.sigma.iter_mut().for_each(|v| *v *= s);
        ensure(s.is_finite(), || "sigma must be finite".into())?;
        Ok(c)
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `out = σ v`.
    pub fn apply_sigma(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            out[i] = (0..d).map(|j| self.sigma[i * d + j] * v[j]).sum();
        }
    }
}

/// Feedback control `(t, x, y) ↦ u`.
pub trait DriftField: Sync {
    /// Writes `u(t, x, y)` into `out`; `y` is `None` for overdamped dynamics.
    fn eval(&self, t: f64, x: &[f64], y: Option<&[f64]>, out: &mut [f64]);
}

/// `u ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl DriftField for ZeroDrift {
    fn eval(&self, _t: f64, _x: &[f64], _y: Option<&[f64]>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `u ≡ c`.
#[derive(Debug, Clone)]
pub struct ConstantDrift(pub Vec<f64>);

impl DriftField for ConstantDrift {
    fn eval(&self, _t: f64, _x: &[f64], _y: Option<&[f64]>, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Adapts a closure into a [`DriftField`].
pub struct FnDrift<F>(pub F);

impl<F> DriftField for FnDrift<F>
where
    F: Fn(f64, &[f64], Option<&[f64]>, &mut [f64]) + Sync,
{
    fn eval(&self, t: f64, x: &[f64], y: Option<&[f64]>, out: &mut [f64]) {
        (self.0)(t, x, y, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    UnderdampedEuler,
    UnderdampedExact,
    Overdamped,
}

/// One simulated path. `dw` holds the raw Brownian increments (before `σ`).
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    x: Vec<f64>,
    y: Option<Vec<f64>>,
    u: Vec<f64>,
    dw: Vec<f64>,
    seed: PathSeed,
    scheme: Scheme,
}

#[derive(Serialize)]
struct TrajectoryMeta<'a> {
    scheme: Scheme,
    seed: u64,
    path: u64,
    steps: usize,
    dim: usize,
    m: Option<f64>,
    gamma: f64,
    sigma: &'a [f64],
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> PathSeed {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn x(&self) -> SampledPath {
        SampledPath::from_parts_unchecked(self.grid.clone(), self.dim, self.x.clone())
    }

    pub fn y(&self) -> Option<SampledPath> {
        self.y
            .as_ref()
            .map(|y| SampledPath::from_parts_unchecked(self.grid.clone(), self.dim, y.clone()))
    }

    pub fn u(&self) -> SampledPath {
        SampledPath::from_parts_unchecked(self.grid.clone(), self.dim, self.u.clone())
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn y_at(&self, k: usize) -> Option<&[f64]> {
        self.y.as_ref().map(|y| &y[k * self.dim..(k + 1) * self.dim])
    }

    pub fn u_at(&self, k: usize) -> &[f64] {
        &self.u[k * self.dim..(k + 1) * self.dim]
    }

    /// Brownian increment over step `k`.
    pub fn dw_at(&self, k: usize) -> &[f64] {
        &self.dw[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dw(&self) -> &[f64] {
        &self.dw
    }

    /// CSV with columns `t, x_1..x_d, [y_1..y_d,] u_1..u_d`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        if self.y.is_some() {
            header.extend((1..=d).map(|i| format!("y_{i}")));
        }
        header.extend((1..=d).map(|i| format!("u_{i}")));
        w.write_record(&header)?;
        for (k, t) in self.grid.nodes().iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.x_at(k).iter().map(f64::to_string));
            if let Some(y) = self.y_at(k) {
                row.extend(y.iter().map(f64::to_string));
            }
            row.extend(self.u_at(k).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// One JSON line of run metadata.
    pub fn metadata_json(&self, config: &SdeConfig) -> Result<String> {
        let meta = TrajectoryMeta {
            scheme: self.scheme,
            seed: self.seed.seed,
            path: self.seed.path,
            steps: self.grid.steps(),
            dim: self.dim,
            m: (self.scheme != Scheme::Overdamped).then(|| config.params.m()),
            gamma: config.params.gamma(),
            sigma: config.sigma(),
        };
        Ok(serde_json::to_string(&meta)?)
    }
}

fn check_state(config: &SdeConfig, v: &[f64], what: &str) -> Result<()> {
    if v.len() != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: v.len() });
    }
    ensure(v.iter().all(|c| c.is_finite()), || format!("{what} must be finite"))
}

fn eval_drift(
    drift: &dyn DriftField,
    t: f64,
    x: &[f64],
    y: Option<&[f64]>,
    prev: Option<&[f64]>,
    out: &mut [f64],
) -> Result<()> {
    match prev {
        Some(p) if t >= 1.0 - DRIFT_HORIZON_GAP => out.copy_from_slice(p),
        _ => drift.eval(t, x, y, out),
    }
    ensure_domain(out.iter().all(|v| v.is_finite()), || {
        format!("drift returned a non-finite value at t = {t}")
    })
}

/// Explicit Euler–Maruyama for the underdamped system.
///
/// Requires `γΔ/m < 2` on every step, the stability limit of the explicit
/// momentum update.
pub fn simulate_underdamped_euler(
    config: &SdeConfig,
    drift: &dyn DriftField,
    x0: &[f64],
    y0: &[f64],
    grid: &TimeGrid,
    seed: impl Into<PathSeed>,
) -> Result<Trajectory> {
    check_state(config, x0, "x0")?;
    check_state(config, y0, "y0")?;
    let seed = seed.into();
    let p = config.params;
    let ratio = p.rate() * grid.max_step();
    if ratio >= 2.0 {
        return Err(Error::Stability(format!(
            "γΔ/m = {ratio:.3} ≥ 2; refine the grid or use the exponential integrator"
        )));
    }
    let (d, n) = (config.dim, grid.len());
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n * d];
    let mut u = vec![0.0; n * d];
    let mut dw = vec![0.0; (n - 1) * d];
    x[..d].copy_from_slice(x0);
    y[..d].copy_from_slice(y0);
    let mut rng = stream(seed, Purpose::Noise);
    let mut noise = vec![0.0; d];
    for k in 0..n - 1 {
        let t = grid.nodes()[k];
        let h = grid.step(k);
        {
            let (done, _) = u.split_at_mut((k + 1) * d);
            let (before, uk) = done.split_at_mut(k * d);
            let prev = (k > 0).then(|| &before[(k - 1) * d..]);
            eval_drift(drift, t, &x[k * d..(k + 1) * d], Some(&y[k * d..(k + 1) * d]), prev, uk)?;
        }
        let step_dw = &mut dw[k * d..(k + 1) * d];
        fill_normal(&mut rng, step_dw);
        step_dw.iter_mut().for_each(|v| *v *= h.sqrt());
        config.apply_sigma(step_dw, &mut noise);
        for i in 0..d {
            let (xi, yi) = (x[k * d + i], y[k * d + i]);
            x[(k + 1) * d + i] = xi + yi * h / p.m();
            y[(k + 1) * d + i] = yi + (u[k * d + i] - p.rate() * yi) * h + noise[i];
        }
    }
    hold_last_control(&mut u, n, d);
    Ok(Trajectory { grid: grid.clone(), dim: d, x, y: Some(y), u, dw, seed, scheme: Scheme::UnderdampedEuler })
}

/// Mean coefficients and noise factor of one exact step of width `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactStep {
    /// `K(h)`: position response to the initial momentum.
    pub k: f64,
    /// `∫_0^h K(τ) dτ`: position response to a held control.
    pub k_int: f64,
    /// `e^{-γh/m}`.
    pub decay: f64,
    /// `∫_0^h e^{-γτ/m} dτ`: momentum response to a held control.
    pub decay_int: f64,
    /// Itô-isometry integrals of the noise response.
    pub var_x: f64,
    pub cov_xy: f64,
    pub var_y: f64,
}

impl ExactStep {
    pub fn new(p: &KernelParams, h: f64) -> Self {
        let (m, g) = (p.m(), p.gamma());
        let x = p.rate() * h;
        let a = one_minus_exp_neg(x);
        Self {
            k: a / g,
            k_int: m / (g * g) * int_one_minus_exp(x),
            decay: (-x).exp(),
            decay_int: m * a / g,
            var_x: m / (g * g * g) * int_sq_one_minus_exp(x),
            cov_xy: m / (2.0 * g * g) * a * a,
            var_y: m / (2.0 * g) * a * (2.0 - a),
        }
    }

    /// Lower-triangular factor `[[l11, 0], [l21, l22]]` of the 2×2 covariance.
    pub fn cholesky(&self) -> Result<(f64, f64, f64)> {
        let l11 = self.var_x.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { self.cov_xy / l11 } else { 0.0 };
        let rem = self.var_y - l21 * l21;
        if rem < -1e-12 * self.var_y.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "step covariance not positive semidefinite: var_x={:e} cov={:e} var_y={:e}",
                self.var_x, self.cov_xy, self.var_y
            )));
        }
        Ok((l11, l21, rem.max(0.0).sqrt()))
    }
}

/// Exponential integrator: exact in law for the linear dynamics with the
/// control held at its left-node value.
pub fn simulate_underdamped_exact(
    config: &SdeConfig,
    drift: &dyn DriftField,
    x0: &[f64],
    y0: &[f64],
    grid: &TimeGrid,
    seed: impl Into<PathSeed>,
) -> Result<Trajectory> {
    check_state(config, x0, "x0")?;
    check_state(config, y0, "y0")?;
    let seed = seed.into();
    let p = config.params;
    let gamma = p.gamma();
    let (d, n) = (config.dim, grid.len());
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n * d];
    let mut u = vec![0.0; n * d];
    let mut dw = vec![0.0; (n - 1) * d];
    x[..d].copy_from_slice(x0);
    y[..d].copy_from_slice(y0);
    let mut rng = stream(seed, Purpose::Noise);
    let (mut xi1, mut xi2) = (vec![0.0; d], vec![0.0; d]);
    let (mut s1, mut s2) = (vec![0.0; d], vec![0.0; d]);
    let mut cached: Option<(f64, ExactStep, (f64, f64, f64))> = None;
    for k in 0..n - 1 {
        let t = grid.nodes()[k];
        let h = grid.step(k);
        let (step, (l11, l21, l22)) = match cached {
            Some((hc, s, l)) if hc == h => (s, l),
            _ => {
                let s = ExactStep::new(&p, h);
                let l = s.cholesky()?;
                cached = Some((h, s, l));
                (s, l)
            }
        };
        {
            let (done, _) = u.split_at_mut((k + 1) * d);
            let (before, uk) = done.split_at_mut(k * d);
            let prev = (k > 0).then(|| &before[(k - 1) * d..]);
            eval_drift(drift, t, &x[k * d..(k + 1) * d], Some(&y[k * d..(k + 1) * d]), prev, uk)?;
        }
        fill_normal(&mut rng, &mut xi1);
        fill_normal(&mut rng, &mut xi2);
        config.apply_sigma(&xi1, &mut s1);
        config.apply_sigma(&xi2, &mut s2);
        for i in 0..d {
            let (xk, yk, uk) = (x[k * d + i], y[k * d + i], u[k * d + i]);
            let nx = l11 * s1[i];
            let ny = l21 * s1[i] + l22 * s2[i];
            x[(k + 1) * d + i] = xk + step.k * yk + step.k_int * uk + nx;
            y[(k + 1) * d + i] = step.decay * yk + step.decay_int * uk + ny;
            // γ K(τ) + e^{-γτ/m} = 1, so the Brownian increment is γ·(x-noise) + (y-noise).
            dw[k * d + i] = (gamma * l11 + l21) * xi1[i] + l22 * xi2[i];
        }
    }
    hold_last_control(&mut u, n, d);
    Ok(Trajectory { grid: grid.clone(), dim: d, x, y: Some(y), u, dw, seed, scheme: Scheme::UnderdampedExact })
}

/// Euler–Maruyama for `dX = (u/γ) dt + (σ/γ) dW`. The mass is ignored.
pub fn simulate_overdamped(
    config: &SdeConfig,
    drift: &dyn DriftField,
    x0: &[f64],
    grid: &TimeGrid,
    seed: impl Into<PathSeed>,
) -> Result<Trajectory> {
    check_state(config, x0, "x0")?;
    let seed = seed.into();
    let mut rng = stream(seed, Purpose::Noise);
    simulate_overdamped_with(config, drift, x0, grid, seed, |out| fill_normal(&mut rng, out))
}

pub(crate) fn simulate_overdamped_with(
    config: &SdeConfig,
    drift: &dyn DriftField,
    x0: &[f64],
    grid: &TimeGrid,
    seed: PathSeed,
    mut normals: impl FnMut(&mut [f64]),
) -> Result<Trajectory> {
    let gamma = config.params.gamma();
    let (d, n) = (config.dim, grid.len());
    let mut x = vec![0.0; n * d];
    let mut u = vec![0.0; n * d];
    let mut dw = vec![0.0; (n - 1) * d];
    x[..d].copy_from_slice(x0);
    let mut noise = vec![0.0; d];
    for k in 0..n - 1 {
        let t = grid.nodes()[k];
        let h = grid.step(k);
        {
            let (done, _) = u.split_at_mut((k + 1) * d);
            let (before, uk) = done.split_at_mut(k * d);
            let prev = (k > 0).then(|| &before[(k - 1) * d..]);
            eval_drift(drift, t, &x[k * d..(k + 1) * d], None, prev, uk)?;
        }
        let step_dw = &mut dw[k * d..(k + 1) * d];
        normals(step_dw);
        let sh = h.sqrt();
        step_dw.iter_mut().for_each(|v| *v *= sh);
        config.apply_sigma(step_dw, &mut noise);
        for i in 0..d {
            x[(k + 1) * d + i] = x[k * d + i] + (u[k * d + i] * h + noise[i]) / gamma;
        }
    }
    hold_last_control(&mut u, n, d);
    Ok(Trajectory { grid: grid.clone(), dim: d, x, y: None, u, dw, seed, scheme: Scheme::Overdamped })
}

fn hold_last_control(u: &mut [f64], n: usize, d: usize) {
    if n >= 2 {
        let (head, tail) = u.split_at_mut((n - 1) * d);
        tail.copy_from_slice(&head[(n - 2) * d..]);
    }
}

/// Draws one standard normal vector of length `d` from `rng`.
pub fn standard_normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    fill_normal(rng, &mut v);
    v
}

/// Drift part `U(t) = ∫_0^t u` (trapezoid) and martingale part `M(t) = σ W(t)`.
pub fn decompose(traj: &Trajectory, config: &SdeConfig) -> Result<(SampledPath, SampledPath)> {
    let d = traj.dim;
    if d != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: d });
    }
    let n = traj.grid.len();
    ensure_domain(traj.u.len() == n * d && traj.dw.len() == (n - 1) * d, || {
        "trajectory lacks control or noise samples".into()
    })?;
    let mut big_u = vec![0.0; n * d];
    let mut big_m = vec![0.0; n * d];
    let mut noise = vec![0.0; d];
    for k in 0..n - 1 {
        let h = traj.grid.step(k);
        config.apply_sigma(traj.dw_at(k), &mut noise);
        for i in 0..d {
            big_u[(k + 1) * d + i] =
                big_u[k * d + i] + 0.5 * h * (traj.u[k * d + i] + traj.u[(k + 1) * d + i]);
            big_m[(k + 1) * d + i] = big_m[k * d + i] + noise[i];
        }
    }
    Ok((
        SampledPath::from_parts_unchecked(traj.grid.clone(), d, big_u),
        SampledPath::from_parts_unchecked(traj.grid.clone(), d, big_m),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: f64, gamma: f64, d: usize) -> SdeConfig {
        SdeConfig::new(KernelParams::new(m, gamma).unwrap(), d).unwrap()
    }

    fn quiet(m: f64, gamma: f64, d: usize) -> SdeConfig {
        SdeConfig::scaled_identity(KernelParams::new(m, gamma).unwrap(), d, 0.0).unwrap()
    }

    #[test]
    fn euler_rest_state_is_exact() {
        let g = TimeGrid::uniform(50).unwrap();
        let tr = simulate_underdamped_euler(&quiet(0.5, 1.0, 2), &ZeroDrift, &[1.0, -2.0], &[0.0, 0.0], &g, 3).unwrap();
        assert!(tr.x().rows().all(|r| r == [1.0, -2.0]));
    }

    #[test]
    fn euler_free_relaxation() {
        let (m, gamma, v) = (0.5, 1.0, 2.0);
        let g = TimeGrid::uniform(4000).unwrap();
        let tr = simulate_underdamped_euler(&quiet(m, gamma, 1), &ZeroDrift, &[0.0], &[v], &g, 0).unwrap();
        // dX = Y/m dt with Y = v e^{-γt/m} gives X(1) = v K(1).
        let exact = v / gamma * (1.0 - (-gamma / m).exp());
        assert!((tr.x_at(g.len() - 1)[0] - exact).abs() < 10.0 / 4000.0);
    }

    #[test]
    fn euler_stability_guard() {
        let g = TimeGrid::uniform(10).unwrap();
        let err = simulate_underdamped_euler(&cfg(0.01, 1.0, 1), &ZeroDrift, &[0.0], &[0.0], &g, 0);
        assert!(matches!(err, Err(Error::Stability(_))));
    }

    #[test]
    fn exact_without_noise_is_step_count_free() {
        let c = quiet(0.05, 1.3, 2);
        let drift = ConstantDrift(vec![0.7, -0.2]);
        let end = |steps| {
            let g = TimeGrid::uniform(steps).unwrap();
            let tr = simulate_underdamped_exact(&c, &drift, &[0.1, 0.2], &[1.0, -3.0], &g, 0).unwrap();
            (tr.x_at(steps).to_vec(), tr.y_at(steps).unwrap().to_vec())
        };
        let (xa, ya) = end(3);
        let (xb, yb) = end(257);
        for i in 0..2 {
            assert!((xa[i] - xb[i]).abs() < 1e-12);
            assert!((ya[i] - yb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_brownian_increment_matches_momentum_identity() {
        // With a held control, ΔY + γΔX = uΔt + σΔW holds exactly per step.
        let c = SdeConfig::with_sigma(KernelParams::new(0.2, 1.5).unwrap(), 2, vec![1.0, 0.3, -0.2, 0.8]).unwrap();
        let drift = FnDrift(|_t: f64, x: &[f64], _y: Option<&[f64]>, out: &mut [f64]| {
            out[0] = -x[0];
            out[1] = 0.5 - x[1];
        });
        let g = TimeGrid::uniform(64).unwrap();
        let tr = simulate_underdamped_exact(&c, &drift, &[0.3, 0.0], &[0.0, 1.0], &g, PathSeed::new(5, 9)).unwrap();
        let mut sdw = [0.0; 2];
        for k in 0..64 {
            c.apply_sigma(tr.dw_at(k), &mut sdw);
            for i in 0..2 {
                let dy = tr.y_at(k + 1).unwrap()[i] - tr.y_at(k).unwrap()[i];
                let dx = tr.x_at(k + 1)[i] - tr.x_at(k)[i];
                let rhs = tr.u_at(k)[i] * g.step(k) + sdw[i];
                assert!((dy + 1.5 * dx - rhs).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        let c = cfg(0.1, 1.0, 1);
        let g = TimeGrid::uniform(32).unwrap();
        let a = simulate_underdamped_exact(&c, &ZeroDrift, &[0.0], &[0.0], &g, PathSeed::new(1, 2)).unwrap();
        let b = simulate_underdamped_exact(&c, &ZeroDrift, &[0.0], &[0.0], &g, PathSeed::new(1, 2)).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.dw(), b.dw());
        let c2 = simulate_underdamped_exact(&c, &ZeroDrift, &[0.0], &[0.0], &g, PathSeed::new(1, 3)).unwrap();
        assert_ne!(a.x(), c2.x());
    }

    #[test]
    fn overdamped_straight_line() {
        let g = TimeGrid::uniform(10).unwrap();
        let tr = simulate_overdamped(&quiet(1.0, 2.0, 1), &ConstantDrift(vec![3.0]), &[1.0], &g, 0).unwrap();
        for (k, t) in g.nodes().iter().enumerate() {
            assert!((tr.x_at(k)[0] - (1.0 + t * 1.5)).abs() < 1e-14);
        }
        assert!(tr.y().is_none());
    }

    #[test]
    fn decompose_trivial_cases() {
        let g = TimeGrid::uniform(8).unwrap();
        let tr = simulate_overdamped(&cfg(1.0, 1.0, 1), &ZeroDrift, &[0.0], &g, 4).unwrap();
        let (u, m) = decompose(&tr, &cfg(1.0, 1.0, 1)).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        assert_eq!(m.at(8)[0], tr.x_at(8)[0]);
        let tr = simulate_overdamped(&quiet(1.0, 1.0, 1), &ConstantDrift(vec![2.0]), &[0.0], &g, 4).unwrap();
        let (u, m) = decompose(&tr, &quiet(1.0, 1.0, 1)).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
        assert!((u.at(8)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_and_metadata() {
        let c = cfg(0.3, 1.0, 2);
        let g = TimeGrid::uniform(2).unwrap();
        let tr = simulate_underdamped_exact(&c, &ZeroDrift, &[0.0, 1.0], &[0.0, 0.0], &g, 11).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x_1,x_2,y_1,y_2,u_1,u_2");
        assert_eq!(text.lines().count(), 4);
        let meta: serde_json::Value = serde_json::from_str(&tr.metadata_json(&c).unwrap()).unwrap();
        assert_eq!(meta["seed"], 11);
        assert_eq!(meta["steps"], 2);
        assert_eq!(meta["scheme"], "underdamped_exact");
    }
}
