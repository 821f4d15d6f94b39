use sotlab::experiments::{
    emit, run, run_duality, run_marginal_check, run_zero_mass, run_zero_mass_beta, ExperimentConfig, Format, MarginalSpec,
    MomentumLaw, Report, Scenario,
};
use sotlab::measures::EmpiricalMeasure;
use sotlab::Error;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        paths: 128,
        grid: 64,
        epsilon0: 1.0,
        m_grid: vec![0.2, 0.05],
        target_atoms: 16,
        ..Default::default()
    }
}

fn csv_bytes(r: &Report) -> Vec<u8> {
    let mut buf = Vec::new();
    r.table.write_csv(&mut buf).unwrap();
    buf
}

fn rows_are_sane(r: &Report) {
    for row in &r.table.rows {
        assert!(row.iter().all(|v| v.is_finite()), "{row:?}");
    }
    for name in ["cost_stderr", "mean_abs_y0_stderr"] {
        assert!(r.table.column(name).unwrap().iter().all(|&s| s >= 0.0));
    }
}

#[test]
fn zero_mass_is_reproducible_and_sane() {
    let cfg = small();
    let a = run_zero_mass(&cfg).unwrap();
    let b = run_zero_mass(&cfg).unwrap();
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    assert_eq!(
        a.table.headers,
        [
            "m",
            "cost_mean",
            "cost_stderr",
            "sup_dev_x",
            "sup_dev_y",
            "terminal_gap_max",
            "mean_abs_y0",
            "mean_abs_y0_stderr",
            "momentum_bound_c"
        ]
    );
    rows_are_sane(&a);
    assert!(a.verdict("TERMINAL-GAP").unwrap().pass);
    assert!(a.verdict("COST-LIMSUP").unwrap().pass);
    assert!(a.verdict("BOUND-MONOTONE").unwrap().pass);
    let c = run_zero_mass(&ExperimentConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(csv_bytes(&a), csv_bytes(&c));
}

#[test]
fn matched_momentum_reproduces_the_plain_coupling() {
    let cfg = ExperimentConfig { y0_law: MomentumLaw::Matched, ..small() };
    let plain = run_zero_mass(&cfg).unwrap();
    let beta = run_zero_mass_beta(&cfg).unwrap();
    for name in ["cost_mean", "sup_dev_x", "sup_dev_y", "mean_abs_y0"] {
        let (p, b) = (plain.table.column(name).unwrap(), beta.table.column(name).unwrap());
        for (x, y) in p.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{name}: {x} vs {y}");
        }
    }
    assert!(beta.table.column("mean_abs_beta").unwrap().iter().all(|&v| v < 1e-9));
}

#[test]
fn scaled_gaussian_momentum_moments_decrease() {
    let r = run_zero_mass_beta(&small()).unwrap();
    rows_are_sane(&r);
    assert!(r.verdict("Y0-MOMENT").unwrap().pass);
    assert!(r.verdict("TERMINAL-GAP-BETA").unwrap().pass);
    assert!(r.verdict("MONOTONE-X").is_none());
    let m = r.table.column("y0_moment_r0").unwrap();
    // E|√m ξ|² = m in one dimension.
    for (mass, v) in small().m_grid.iter().zip(&m) {
        assert!((v / mass - 1.0).abs() < 0.4, "{mass}: {v}");
    }
}

#[test]
fn degenerate_transport_passes() {
    let cfg = ExperimentConfig {
        p0: MarginalSpec::Gaussian { mean: 0.0, std: 0.01 },
        p1: MarginalSpec::Gaussian { mean: 0.0, std: 0.2 },
        bandwidth: 0.2,
        ..small()
    };
    let r = run_zero_mass(&cfg).unwrap();
    assert!(r.verdict("COST-LIMSUP").unwrap().pass);
    assert!(r.verdict("TERMINAL-GAP").unwrap().pass);
}

#[test]
fn constant_reward_duality_is_exact() {
    let cfg = ExperimentConfig { reward: "constant:0.7".into(), paths: 200, grid: 32, ..Default::default() };
    let r = run_duality(&cfg).unwrap();
    assert!(r.passed(), "{:?}", r.verdicts);
    assert!(r.verdict("SUBOPTIMAL").is_none());
    let payoff = r.table.column("payoff_mean").unwrap()[0];
    assert!((payoff - 0.7).abs() < 1e-12);
    // Only summation rounding remains.
    assert!(r.table.column("payoff_stderr").unwrap()[0] < 1e-15);
}

#[test]
fn point_mass_target_is_hit() {
    let cfg = ExperimentConfig {
        p1: MarginalSpec::Gaussian { mean: 1.0, std: 0.0 },
        bandwidth: 0.0,
        grid: 1024,
        ..small()
    };
    let r = run_marginal_check(&cfg).unwrap();
    assert!(r.passed(), "{:?}", r.verdicts);
    assert!(r.summary_f64("w2_squared").unwrap() < 1e-3);
}

#[test]
fn csv_marginals_drive_the_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let p0 = dir.path().join("p0.csv");
    let p1 = dir.path().join("p1.csv");
    EmpiricalMeasure::uniform(1, vec![-1.0, 0.0, 0.5, 1.0]).unwrap().save(&p0).unwrap();
    EmpiricalMeasure::new(1, vec![0.5, 1.5], vec![0.25, 0.75]).unwrap().save(&p1).unwrap();
    let text = format!(
        "scenario = bridge_solve\np0 = csv:{}\np1 = csv:{}\nbandwidth = 0\n",
        p0.display(),
        p1.display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let out = dir.path().join("out");
    let r = run(Scenario::BridgeSolve, &cfg, Some(&out)).unwrap();
    assert!(r.passed(), "{:?}", r.verdicts);
    assert!(out.join("bridge_potentials/potentials.json").exists());
    assert_eq!(r.table.rows.len(), 2);
}

#[test]
fn dispatcher_rejects_a_foreign_config() {
    let cfg = ExperimentConfig { scenario: Some(Scenario::Duality), ..Default::default() };
    assert!(matches!(run(Scenario::Deterministic, &cfg, None), Err(Error::Config(_))));
    let bad = ExperimentConfig { dim: 2, p0: MarginalSpec::Csv("/nonexistent/p0.csv".into()), ..Default::default() };
    assert!(matches!(run(Scenario::ZeroMass, &bad, None), Err(Error::Io { .. })));
}

#[test]
fn emitted_tables_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    for name in ["a", "b"] {
        let r = run(Scenario::Deterministic, &cfg, None).unwrap();
        emit(&r, Format::Csv, dir.path().join(name).join("t.csv")).unwrap();
        emit(&r, Format::Jsonl, dir.path().join(name).join("t.jsonl")).unwrap();
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/t.csv"), read("b/t.csv"));
    let header: serde_json::Value =
        serde_json::from_str(std::str::from_utf8(&read("a/t.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["type"], "run");
    assert_eq!(header["config"]["grid"], 2048);
    assert!(header["version"].is_string());
}
