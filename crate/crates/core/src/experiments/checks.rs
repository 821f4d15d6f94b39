//! Cheap deterministic or sampled checks: kernels, the bridge solve, the
//! deterministic identity and the cost assumptions.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde_json::json;

use super::config::{ExperimentConfig, Scenario};
use super::report::{Report, Table, Verdict};
use super::zero_mass::solve_bridge;
use crate::bridge::SinkhornPotentials;
use crate::costs::{check_assumptions, deterministic_identity_check, CostFunction, PolynomialPath, SamplingSpec};
use crate::error::Result;
use crate::grid::{SampledPath, TimeGrid};
use crate::kernels::{kernel_phi, psi_operator, KernelParams};
use crate::rng::{stream, PathSeed, Purpose};

fn report(cfg: &ExperimentConfig, scenario: Scenario, table: Table, verdicts: Vec<Verdict>, summary: serde_json::Value, started: Instant) -> Result<Report> {
    Ok(Report {
        scenario,
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        table,
        verdicts,
        summary,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_params<R: Rng>(rng: &mut R) -> Result<KernelParams> {
    let m = log_uniform(rng, 1e-4, 1.0);
    let gamma = log_uniform(rng, 0.1, 10.0);
    KernelParams::new(m, gamma)
}

/// Closed-form kernel identities on random parameters.
pub fn run_kernels_check(cfg: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    let mut rng = stream(PathSeed::new(cfg.seed, 0), Purpose::Aux);
    let grid = TimeGrid::uniform(63)?;
    let mut table = Table::new(&["m", "gamma", "psi_of_one_error", "sandwich_violation", "contraction_excess"]);

    let mut worst_const: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng)?;
        let out = psi_operator(&p, &SampledPath::constant(grid.clone(), &[1.0]))?;
        let err = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &t)| (out.at(k)[0] - p.gamma() * p.k(t)).abs())
            .fold(0.0, f64::max);
        worst_const = worst_const.max(err);
        table.push(vec![p.m(), p.gamma(), err, f64::NAN, f64::NAN]);
    }

    let mut worst_sandwich = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let p = random_params(&mut rng)?;
        let t: f64 = rng.random_range(0.0..=1.0);
        let gap = kernel_phi(&p, t)? - t;
        let v = (-gap).max(gap - 2.0 * p.m() / p.gamma());
        worst_sandwich = worst_sandwich.max(v);
        table.push(vec![p.m(), p.gamma(), f64::NAN, v, f64::NAN]);
    }

    let mut worst_contraction = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let p = random_params(&mut rng)?;
        let d = rng.random_range(1..=3);
        let vals: Vec<f64> = (0..grid.len() * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = SampledPath::new(grid.clone(), d, vals)?;
        let sup = g.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let out = psi_operator(&p, &g)?;
        let sup_out = out.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let excess = sup_out - sup;
        worst_contraction = worst_contraction.max(excess);
        table.push(vec![p.m(), p.gamma(), f64::NAN, f64::NAN, excess]);
    }

    let verdicts = vec![
        Verdict::at_most("PSI-CONSTANT", "max |Psi(1)(t) - gamma K(t)| over 100 random (m, gamma), 64 nodes", worst_const, 1e-12),
        Verdict::at_most("PHI-SANDWICH", "max violation of 0 <= phi(t) - t <= 2m/gamma over 1000 samples", worst_sandwich, 0.0),
        Verdict::at_most("PSI-CONTRACTION", "max (|Psi g|_sup - |g|_sup) over 1000 random paths", worst_contraction, 0.0),
    ];
    let summary = json!({
        "psi_of_one_error": worst_const,
        "sandwich_violation": worst_sandwich,
        "contraction_excess": worst_contraction,
    });
    report(cfg, Scenario::KernelsCheck, table, verdicts, summary, started)
}

/// Solves the smoothed bridge and, with `out`, saves and reloads its potentials.
pub fn run_bridge_solve(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Report> {
    let started = Instant::now();
    let (_, pot) = solve_bridge(cfg)?;
    let d = pot.dim();
    let mut headers: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    headers.extend(["weight", "potential"].map(String::from));
    let mut table = Table { headers, rows: Vec::new() };
    let target = pot.target();
    for (j, v) in pot.target_potentials().iter().enumerate() {
        let mut row = target.point(j).to_vec();
        row.extend([target.weights()[j], *v]);
        table.push(row);
    }
    let plan_residual = pot.coupling()?.marginal_residual();
    let mut verdicts = vec![
        Verdict::at_most("SINKHORN-RESIDUAL", "L1 marginal error of the Sinkhorn plan", pot.residual(), cfg.sinkhorn_tol),
        Verdict::at_most("PLAN-MARGINALS", "marginal residual of the assembled coupling", plan_residual, cfg.sinkhorn_tol),
    ];
    if let Some(dir) = out {
        let dir = dir.join("bridge_potentials");
        pot.save(&dir)?;
        let back = SinkhornPotentials::load(&dir)?;
        let probe = pot.source().point(0).to_vec();
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut diff: f64 = 0.0;
        for t in [0.0, 0.5, 0.9] {
            pot.drift_into(t, &probe, &mut a);
            back.drift_into(t, &probe, &mut b);
            diff = a.iter().zip(&b).fold(diff, |m, (x, y)| m.max((x - y).abs()));
        }
        verdicts.push(Verdict::at_most("SAVE-ROUNDTRIP", "max drift change after saving and reloading the potentials", diff, 0.0));
    }
    let summary = json!({
        "iterations": pot.iterations(),
        "residual": pot.residual(),
        "source_atoms": pot.source().len(),
        "target_atoms": target.len(),
        "bandwidth": pot.bandwidth(),
    });
    report(cfg, Scenario::BridgeSolve, table, verdicts, summary, started)
}

/// The deterministic energy identity on random cubic paths and on a straight line.
pub fn run_deterministic(cfg: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    let params = KernelParams::new(cfg.mass, cfg.gamma)?;
    let d = cfg.dim;
    let mut rng = stream(PathSeed::new(cfg.seed, 0), Purpose::Aux);
    let mut table = Table::new(&["lhs", "velocity_term", "acceleration_term", "boundary_term", "rhs", "relative_discrepancy"]);
    let mut worst: f64 = 0.0;
    let row = |id: &crate::costs::DeterministicIdentity, table: &mut Table| {
        let rel = id.discrepancy() / (1.0 + id.lhs.abs());
        table.push(vec![id.lhs, id.velocity_term, id.acceleration_term, id.boundary_term, id.rhs(), rel]);
        rel
    };
    for _ in 0..cfg.identity_paths {
        let coeffs = (0..4).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let id = deterministic_identity_check(&PolynomialPath::new(coeffs)?, &params);
        worst = worst.max(row(&id, &mut table));
    }
    let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x1: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let line = deterministic_identity_check(&PolynomialPath::line(&x0, &x1)?, &params);
    row(&line, &mut table);
    let dist_sq: f64 = x0.iter().zip(&x1).map(|(a, b)| (b - a) * (b - a)).sum();
    let expected = params.gamma() * params.gamma() * dist_sq;
    let line_err = (line.lhs - expected).abs();

    let verdicts = vec![
        Verdict::at_most(
            "IDENTITY-CUBIC",
            format!("max relative discrepancy over {} random cubics", cfg.identity_paths),
            worst,
            cfg.identity_tol,
        ),
        Verdict::at_most(
            "IDENTITY-LINE",
            "|lhs - gamma^2 |x1 - x0|^2| on a straight line, against 4 ulp",
            line_err,
            4.0 * f64::EPSILON * expected,
        ),
    ];
    let summary = json!({"worst_relative": worst, "line_lhs": line.lhs, "line_expected": expected});
    report(cfg, Scenario::Deterministic, table, verdicts, summary, started)
}

const RADII: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Sampled cost assumptions for the configured cost, with a non-convex negative control.
pub fn run_assumptions(cfg: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    let spec = SamplingSpec::new(cfg.assumption_samples, cfg.dim).with_seed(cfg.seed);
    let eps = [(0.1, Some(0.1)), (cfg.epsilon0, None)];
    let r = check_assumptions(&cfg.cost, &spec, &RADII, &eps)?;
    let control = CostFunction::softened_quadratic(1.0)?;
    let neg = check_assumptions(&control, &spec.clone().with_radii(1.0, 1.0), &RADII, &[])?;

    let mut table = Table::new(&["r", "radius", "value"]);
    for g in &r.growth {
        table.push(vec![g.r, g.radius, g.value]);
    }
    let mut verdicts = Vec::new();
    if cfg.cost.is_quadratic() {
        let worst = RADII
            .iter()
            .map(|&radius| r.growth_at(2.0, radius).map_or(f64::INFINITY, |v| (v - 0.5).abs()))
            .fold(0.0, f64::max);
        verdicts.push(Verdict::at_most("C2-QUADRATIC", "max |C_{2,R} - 1/2| over R", worst, 0.0));
    }
    let c1: Vec<f64> = RADII.iter().map(|&radius| r.growth_at(1.0, radius).unwrap_or(f64::NAN)).collect();
    let c1_drops = c1.windows(2).filter(|w| !(w[1] > w[0])).count();
    verdicts.push(Verdict::at_most("C1-GROWS", "radii at which C_{1,R} fails to increase", c1_drops as f64, 0.0));
    let cr0 = r.growth_at(cfg.cost.r0(), RADII[RADII.len() - 1]).unwrap_or(f64::NAN);
    verdicts.push(Verdict::new("CR0-POSITIVE", format!("C_{{r0,R}} > 0 at R = 100 with r0 = {}", cfg.cost.r0()), cr0, 0.0, cr0 > 0.0));
    verdicts.push(Verdict::at_most(
        "HOMOGENEITY",
        format!("sampled violations of R1(ru) <= r^2 R1(u), worst margin {:.3e}", r.homogeneity.worst),
        r.homogeneity.violations as f64,
        0.0,
    ));
    if let Some(gb) = &r.growth_bound {
        verdicts.push(Verdict::at_most(
            "GROWTH-BOUND",
            format!("sampled violations of the polynomial growth bound, worst margin {:.3e}", gb.worst),
            gb.violations as f64,
            0.0,
        ));
    }
    let modulus = r.modulus.last().map_or(f64::NAN, |m| m.value);
    verdicts.push(Verdict::new(
        "MODULUS-FINITE",
        format!("sampled modulus at eps_t = {}, unbounded eps_z is finite", cfg.epsilon0),
        modulus,
        f64::INFINITY,
        modulus.is_finite(),
    ));
    verdicts.push(Verdict::at_most(
        "CONVEX",
        format!("midpoint convexity violations, worst margin {:.3e}", r.convexity.worst),
        r.convexity.violations as f64,
        0.0,
    ));
    verdicts.push(Verdict::at_least(
        "NONCONVEX-FLAGGED",
        format!("the checker finds convexity violations for {control}"),
        neg.convexity.violations as f64,
        1.0,
    ));
    let summary = json!({
        "cost": r.cost,
        "report": serde_json::to_value(&r)?,
        "negative_control": serde_json::to_value(&neg)?,
    });
    report(cfg, Scenario::Assumptions, table, verdicts, summary, started)
}
