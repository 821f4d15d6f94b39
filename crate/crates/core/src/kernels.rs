//! Deterministic kernels of the mass-`m` Langevin system on the unit horizon.
//!
//! With `λ = γ/m`:
//!
//! * `K(t) = (1 - e^{-λt}) / γ`, the response of position to a unit impulse;
//! * `f(t) = γ K(1 - t)`;
//! * `φ(t) = 1 - ∫_t^1 f(s)² ds`, the time change used by the zero-mass coupling;
//! * `Ψ(g)(t) = ∫_0^t λ e^{-λ(t-s)} g(s) ds`, exponential smoothing of a path.
//!
//! Everything is evaluated through `expm1`-based primitives so that masses far
//! below the grid spacing (and down to `m ≈ 1e-12`) stay finite and accurate.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, ensure_domain, Result};
use crate::grid::SampledPath;

/// Mass `m > 0` and friction `γ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    m: f64,
    gamma: f64,
}

impl KernelParams {
    pub fn new(m: f64, gamma: f64) -> Result<Self> {
        ensure(m.is_finite() && m > 0.0, || format!("mass must be positive and finite, got {m}"))?;
        ensure(gamma.is_finite() && gamma > 0.0, || {
            format!("friction must be positive and finite, got {gamma}")
        })?;
        Ok(Self { m, gamma })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Relaxation rate `γ/m`.
    pub fn rate(&self) -> f64 {
        self.gamma / self.m
    }

    /// `K(t)`; `t` is not range-checked.
    pub fn k(&self, t: f64) -> f64 {
        one_minus_exp_neg(self.rate() * t) / self.gamma
    }

    /// `f(t)`; `t` is not range-checked.
    pub fn f(&self, t: f64) -> f64 {
        one_minus_exp_neg(self.rate() * (1.0 - t))
    }

    /// `φ(t)`; `t` is not range-checked.
    pub fn phi(&self, t: f64) -> f64 {
        let x = self.rate() * (1.0 - t);
        if x < 0.5 {
            1.0 - (self.m / self.gamma) * int_sq_one_minus_exp(x)
        } else {
            let a = one_minus_exp_neg(x);
            t + (self.m / self.gamma) * (a + 0.5 * a * a)
        }
    }

    /// `∫_t^1 f(s)² ds = 1 - φ(t)` without cancellation near `t = 1`.
    pub fn one_minus_phi(&self, t: f64) -> f64 {
        (self.m / self.gamma) * int_sq_one_minus_exp(self.rate() * (1.0 - t))
    }

    /// `∫_0^t K(t-s) f(s) ds`.
    pub fn k_conv_f(&self, t: f64) -> f64 {
        let lam = self.rate();
        // ∫_0^t f = t - (e^{-λ(1-t)} - e^{-λ}) / λ
        let int_f = t - (-lam * (1.0 - t)).exp() * one_minus_exp_neg(lam * t) / lam;
        (int_f - self.exp_conv_f(t)) / self.gamma
    }

    /// `∫_0^t e^{-λ(t-s)} f(s) ds`.
    pub fn exp_conv_f(&self, t: f64) -> f64 {
        let lam = self.rate();
        // (1 - e^{-λt})/λ - e^{-λ(1-t)} (1 - e^{-2λt}) / (2λ)
        one_minus_exp_neg(lam * t) / lam
            - (-lam * (1.0 - t)).exp() * one_minus_exp_neg(2.0 * lam * t) / (2.0 * lam)
    }
}

fn check_unit(t: f64) -> Result<()> {
    ensure_domain(t.is_finite() && (0.0..=1.0).contains(&t), || {
        format!("time {t} outside [0, 1]")
    })
}

/// `K^m(t) = (1 - e^{-γt/m}) / γ`.
pub fn kernel_k(params: &KernelParams, t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(params.k(t))
}

/// `f^m(t) = 1 - e^{-γ(1-t)/m}`.
pub fn kernel_f(params: &KernelParams, t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(params.f(t))
}

/// `φ^m(t) = 1 - ∫_t^1 f^m(s)² ds`, in closed form.
pub fn kernel_phi(params: &KernelParams, t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(params.phi(t))
}

/// Inverse of `φ^m` on `[φ^m(0), 1]` by bisection.
pub fn kernel_phi_inverse(params: &KernelParams, s: f64) -> Result<f64> {
    let lo_s = params.phi(0.0);
    ensure_domain(s.is_finite() && s >= lo_s && s <= 1.0, || {
        format!("{s} outside the range [{lo_s}, 1] of the time change")
    })?;
    if s == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if params.phi(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rl, rh) = ((params.phi(lo) - s).abs(), (params.phi(hi) - s).abs());
    Ok(if rl <= rh { lo } else { hi })
}

/// `Ψ^m(g)` at every node, exact for the piecewise-linear interpolant of `g`.
///
/// The grid must start at 0.
pub fn psi_operator(params: &KernelParams, g: &SampledPath) -> Result<SampledPath> {
    ensure_domain(!g.is_empty(), || "empty path".into())?;
    ensure_domain(g.grid().first() == 0.0, || "path must start at t = 0".into())?;
    let d = g.dim();
    let lam = params.rate();
    let nodes = g.grid().nodes();
    let src = g.values();
    let mut out = vec![0.0; src.len()];
    for k in 0..nodes.len() - 1 {
        let (e, w_prev, w_next) = cell_weights(lam * (nodes[k + 1] - nodes[k]));
        for i in 0..d {
            out[(k + 1) * d + i] =
                e * out[k * d + i] + w_prev * src[k * d + i] + w_next * src[(k + 1) * d + i];
        }
    }
    Ok(SampledPath::from_parts_unchecked(g.grid().clone(), d, out))
}

/// `Ψ^m(g / f²)` at every node, with `g` piecewise linear and the weight `1/f²`
/// integrated exactly on each cell.
///
/// The grid must start at 0 and stay strictly below 1.
pub fn psi_over_f_squared(params: &KernelParams, g: &SampledPath) -> Result<SampledPath> {
    ensure_domain(!g.is_empty(), || "empty path".into())?;
    ensure_domain(g.grid().first() == 0.0, || "path must start at t = 0".into())?;
    ensure_domain(g.grid().last() < 1.0, || "weight 1/f² is singular at t = 1".into())?;
    let d = g.dim();
    let lam = params.rate();
    let nodes = g.grid().nodes();
    let src = g.values();
    let mut out = vec![0.0; src.len()];
    for k in 0..nodes.len() - 1 {
        let (e, w_prev, w_next) = inverse_square_cell_weights(lam, nodes[k], nodes[k + 1])?;
        for i in 0..d {
            out[(k + 1) * d + i] =
                e * out[k * d + i] + w_prev * src[k * d + i] + w_next * src[(k + 1) * d + i];
        }
    }
    Ok(SampledPath::from_parts_unchecked(g.grid().clone(), d, out))
}

// Weights of ∫_a^b λ e^{-λ(b-s)} f(s)^{-2} ℓ(s) ds for linear ℓ, in the variable r = λ(1-s).
fn inverse_square_cell_weights(lam: f64, a: f64, b: f64) -> Result<(f64, f64, f64)> {
    let h = lam * (b - a);
    let r_b = lam * (1.0 - b);
    let f_a = one_minus_exp_neg(lam * (1.0 - a));
    let f_b = one_minus_exp_neg(r_b);
    ensure_domain(f_b * f_b > f64::MIN_POSITIVE, || {
        format!("f(t)² underflows at t = {b}; keep evaluation nodes further from 1")
    })?;
    let a_h = one_minus_exp_neg(h);
    let total = a_h / (f_a * f_b);
    // y - log1p(y) over y, by series for small y
    let y = (-r_b).exp() / f_b * a_h;
    let excess = if y < 1e-3 {
        y / 2.0 - y * y / 3.0 + y * y * y / 4.0 - y.powi(4) / 5.0
    } else {
        (y - y.ln_1p()) / y
    };
    let w_next = (int_one_minus_exp(h) + a_h * excess) / (h * f_b);
    Ok(((-h).exp(), total - w_next, w_next))
}

/// `1 - e^{-x}`.
#[inline]
pub(crate) fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Exponential-smoothing weights over one cell of scaled width `x = λh`.
///
/// Returns `(e^{-x}, w_prev, w_next)` with `w_prev + w_next = 1 - e^{-x}`, so that
/// `Ψ_{k+1} = e^{-x} Ψ_k + w_prev g_k + w_next g_{k+1}` for linear `g` on the cell.
pub(crate) fn cell_weights(x: f64) -> (f64, f64, f64) {
    let e = (-x).exp();
    let a = one_minus_exp_neg(x);
    // w_prev = (1 - e^{-x}(1 + x)) / x
    let w_prev = if x < 0.1 {
        // Σ_{n≥2} (-1)^n (n-1) x^{n-1} / n!
        let mut pow_fact = x / 2.0;
        let mut sum = 0.0;
        for n in 2..22 {
            sum += (n - 1) as f64 * pow_fact;
            pow_fact *= -x / (n + 1) as f64;
        }
        sum
    } else {
        (a - x * e) / x
    };
    (e, w_prev, a - w_prev)
}

/// `∫_0^x (1 - e^{-s}) ds = x - 1 + e^{-x}`.
pub(crate) fn int_one_minus_exp(x: f64) -> f64 {
    if x < 0.5 {
        // Σ_{n≥2} (-1)^n x^n / n!
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for n in 2..24 {
            sum += term;
            term *= -x / (n + 1) as f64;
        }
        sum
    } else {
        x + (-x).exp_m1()
    }
}

/// `∫_0^x (1 - e^{-s})² ds = x - 2(1 - e^{-x}) + (1 - e^{-2x})/2`.
pub(crate) fn int_sq_one_minus_exp(x: f64) -> f64 {
    if x < 0.5 {
        // Σ_{n≥3} (-1)^{n+1} (2^{n-1} - 2) x^n / n!
        let mut pow_fact = x * x * x / 6.0;
        let mut two_pow = 4.0;
        let mut sum = 0.0;
        for n in 3..26 {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (two_pow - 2.0) * pow_fact;
            pow_fact *= x / (n + 1) as f64;
            two_pow *= 2.0;
        }
        sum
    } else {
        let a = one_minus_exp_neg(x);
        x - a - 0.5 * a * a
    }
}
