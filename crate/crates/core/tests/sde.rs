mod common;

use common::{integrate, mean_and_stderr};
use sotlab::kernels::psi_operator;
use sotlab::sde::{
    decompose, simulate_overdamped, simulate_underdamped_euler, simulate_underdamped_exact, ConstantDrift,
    ExactStep, FnDrift, SdeConfig, ZeroDrift,
};
use sotlab::{KernelParams, PathSeed, SampledPath, TimeGrid};

fn params(m: f64, gamma: f64) -> KernelParams {
    KernelParams::new(m, gamma).unwrap()
}

#[test]
fn step_covariance_matches_isometry_quadrature() {
    let (g, m, h) = (1.0, 0.5, 0.1);
    let lam = g / m;
    let k = |t: f64| (1.0 - (-lam * t).exp()) / g;
    let e = |t: f64| (-lam * t).exp();
    let s = ExactStep::new(&params(m, g), h);
    let vxx = integrate(|t| k(t) * k(t), 0.0, h, 2000);
    let cxy = integrate(|t| k(t) * e(t), 0.0, h, 2000);
    let vyy = integrate(|t| e(t) * e(t), 0.0, h, 2000);
    assert!((s.var_x - vxx).abs() < 1e-10, "{} {}", s.var_x, vxx);
    assert!((s.cov_xy - cxy).abs() < 1e-10);
    assert!((s.var_y - vyy).abs() < 1e-10);
}

#[test]
fn step_covariance_stays_psd_for_extreme_masses() {
    for m in [1e-9, 1e-4, 0.02, 1.0, 1e4] {
        for h in [1e-6, 1e-3, 0.5] {
            let s = ExactStep::new(&params(m, 1.3), h);
            let (l11, l21, l22) = s.cholesky().unwrap();
            assert!(l11.is_finite() && l21.is_finite() && l22.is_finite());
            // Brownian increment variance γ²vXX + 2γcXY + vYY equals h.
            let var_dw = 1.69 * s.var_x + 2.6 * s.cov_xy + s.var_y;
            assert!((var_dw - h).abs() <= 1e-12 * h.max(1e-3), "m={m} h={h} {var_dw}");
        }
    }
}

#[test]
fn one_step_mean_matches_variation_of_constants() {
    // Quiet dynamics, constant u: compare against quadrature of the mild solution.
    let (m, g, h) = (0.3, 1.4, 0.7);
    let (x0, y0, u) = (0.2, -1.1, 0.9);
    let lam = g / m;
    let cfg = SdeConfig::scaled_identity(params(m, g), 1, 0.0).unwrap();
    let grid = TimeGrid::new(vec![0.0, h]).unwrap();
    let tr = simulate_underdamped_exact(&cfg, &ConstantDrift(vec![u]), &[x0], &[y0], &grid, 0).unwrap();
    let y_of = |t: f64| (-lam * t).exp() * y0 + integrate(|s| (-lam * (t - s)).exp() * u, 0.0, t, 50);
    let x_ref = x0 + integrate(|t| y_of(t) / m, 0.0, h, 200);
    assert!((tr.x_at(1)[0] - x_ref).abs() < 1e-12);
    assert!((tr.y_at(1).unwrap()[0] - y_of(h)).abs() < 1e-12);
}

fn rk4(m: f64, g: f64, u: f64, x0: f64, y0: f64, steps: usize) -> (f64, f64) {
    let rhs = |_x: f64, y: f64| (y / m, u - g / m * y);
    let (mut x, mut y) = (x0, y0);
    let h = 1.0 / steps as f64;
    for _ in 0..steps {
        let (a1, b1) = rhs(x, y);
        let (a2, b2) = rhs(x + 0.5 * h * a1, y + 0.5 * h * b1);
        let (a3, b3) = rhs(x + 0.5 * h * a2, y + 0.5 * h * b2);
        let (a4, b4) = rhs(x + h * a3, y + h * b3);
        x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        y += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    (x, y)
}

#[test]
fn euler_constant_control_converges_to_ode_reference() {
    let (m, g, u) = (0.4, 1.0, 1.5);
    let (xr, yr) = rk4(m, g, u, 0.5, 0.2, 20_000);
    let cfg = SdeConfig::scaled_identity(params(m, g), 1, 0.0).unwrap();
    let mut errs = Vec::new();
    for steps in [200, 400, 800] {
        let grid = TimeGrid::uniform(steps).unwrap();
        let tr = simulate_underdamped_euler(&cfg, &ConstantDrift(vec![u]), &[0.5], &[0.2], &grid, 0).unwrap();
        let err = (tr.x_at(steps)[0] - xr).abs() + (tr.y_at(steps).unwrap()[0] - yr).abs();
        assert!(err < 5.0 / steps as f64, "steps={steps} err={err}");
        errs.push(err);
    }
    assert!(errs[0] / errs[2] > 3.0);
}

#[test]
fn overdamped_brownian_variance() {
    let d = 2;
    let cfg = SdeConfig::new(params(1.0, 1.0), d).unwrap();
    let grid = TimeGrid::uniform(16).unwrap();
    let sq: Vec<f64> = (0..10_000)
        .map(|p| {
            let tr = simulate_overdamped(&cfg, &ZeroDrift, &[0.0, 0.0], &grid, PathSeed::new(42, p)).unwrap();
            tr.x_at(16).iter().map(|v| v * v).sum()
        })
        .collect();
    let (mean, se) = mean_and_stderr(&sq);
    assert!((mean - d as f64).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn exact_integrator_law_is_step_count_free() {
    let (m, g, u) = (0.05, 1.0, 0.8);
    let cfg = SdeConfig::new(params(m, g), 1).unwrap();
    let endpoints = |steps: usize, seed: u64| {
        let grid = TimeGrid::uniform(steps).unwrap();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for p in 0..10_000 {
            let tr =
                simulate_underdamped_exact(&cfg, &ConstantDrift(vec![u]), &[0.0], &[0.3], &grid, PathSeed::new(seed, p))
                    .unwrap();
            xs.push(tr.x_at(steps)[0]);
            ys.push(tr.y_at(steps).unwrap()[0]);
        }
        (xs, ys)
    };
    let (xa, ya) = endpoints(16, 1);
    let (xb, yb) = endpoints(256, 2);
    for (a, b) in [(&xa, &xb), (&ya, &yb)] {
        let (ma, sa) = mean_and_stderr(a);
        let (mb, sb) = mean_and_stderr(b);
        assert!((ma - mb).abs() < 3.0 * (sa * sa + sb * sb).sqrt());
        let va: f64 = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (a.len() - 1) as f64;
        let vb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
        // Var of a sample variance of n Gaussians is 2σ⁴/(n-1).
        let se = ((2.0 * va * va + 2.0 * vb * vb) / 9_999.0).sqrt();
        assert!((va - vb).abs() < 3.0 * se, "{va} {vb}");
    }
}

fn reconstruction_residual(tr: &sotlab::sde::Trajectory, cfg: &SdeConfig) -> f64 {
    let p = cfg.params();
    let (u, mart) = decompose(tr, cfg).unwrap();
    let y0 = tr.y_at(0).unwrap().to_vec();
    let forcing = u.add(&mart).unwrap().add_constant(&y0).unwrap();
    let psi = psi_operator(p, &forcing).unwrap();
    let x = tr.x();
    (0..x.len())
        .map(|k| {
            (0..x.dim())
                .map(|i| (x.at(k)[i] - x.at(0)[i] - psi.at(k)[i] / p.gamma()).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[test]
fn mild_solution_reconstruction_refines() {
    let cfg = SdeConfig::new(params(0.5, 1.0), 1).unwrap();
    let drift = FnDrift(|_t: f64, x: &[f64], _y: Option<&[f64]>, out: &mut [f64]| out[0] = -x[0]);
    let mut res = [0.0; 3];
    for p in 0..50 {
        for (i, steps) in [256, 512, 1024].into_iter().enumerate() {
            let grid = TimeGrid::uniform(steps).unwrap();
            let tr = simulate_underdamped_exact(&cfg, &drift, &[1.0], &[0.0], &grid, PathSeed::new(9, p)).unwrap();
            res[i] += reconstruction_residual(&tr, &cfg) / 50.0;
        }
    }
    let order1 = (res[0] / res[1]).log2();
    let order2 = (res[1] / res[2]).log2();
    assert!(order1 >= 0.5 && order2 >= 0.5, "{res:?}");
}

#[test]
fn momentum_identity_holds_at_every_node() {
    let g = 1.3;
    let cfg = SdeConfig::new(params(0.1, g), 2).unwrap();
    let drift = FnDrift(|t: f64, x: &[f64], _y: Option<&[f64]>, out: &mut [f64]| {
        out[0] = (3.0 * t).sin() - x[1];
        out[1] = x[0];
    });
    let grid = TimeGrid::uniform(300).unwrap();
    let tr = simulate_underdamped_exact(&cfg, &drift, &[0.1, 0.2], &[0.5, -0.5], &grid, 77).unwrap();
    let (u, mart) = decompose(&tr, &cfg).unwrap();
    // Held controls integrate by left sums; the trapezoid U differs by O(Δ).
    let mut left = SampledPath::zeros(grid.clone(), 2);
    for k in 0..300 {
        for i in 0..2 {
            let v = left.at(k)[i] + tr.u_at(k)[i] * grid.step(k);
            left.at_mut(k + 1)[i] = v;
        }
    }
    for k in 0..=300 {
        for i in 0..2 {
            let lhs = tr.y_at(k).unwrap()[i] - tr.y_at(0).unwrap()[i] + g * (tr.x_at(k)[i] - tr.x_at(0)[i]);
            assert!((lhs - left.at(k)[i] - mart.at(k)[i]).abs() < 1e-12);
            assert!((lhs - u.at(k)[i] - mart.at(k)[i]).abs() < 0.05);
        }
    }
}
