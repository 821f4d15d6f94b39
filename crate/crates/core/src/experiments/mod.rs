//! Scenario runners behind the `sotlab` command line.
//!
//! Each runner takes an [`ExperimentConfig`] and returns a [`Report`] holding a
//! numeric table, scalar summary and PASS/FAIL verdicts.

pub mod checks;
pub mod config;
pub mod duality;
pub mod report;
pub mod zero_mass;

pub use checks::{run_assumptions, run_bridge_solve, run_deterministic, run_kernels_check};
pub use config::{ExperimentConfig, MarginalSpec, MomentumLaw, Scenario};
pub use duality::run_duality;
pub use report::{collect_verdicts, emit, emit_all, render_summary, Format, Report, Table, Verdict};
pub use zero_mass::{run_marginal_check, run_zero_mass, run_zero_mass_beta, solve_bridge};

use std::path::Path;

use crate::error::Result;

/// Runs one scenario. `out` receives side files (bridge potentials) when given.
pub fn run(scenario: Scenario, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Report> {
    cfg.expect_scenario(scenario)?;
    match scenario {
        Scenario::KernelsCheck => run_kernels_check(cfg),
        Scenario::BridgeSolve => run_bridge_solve(cfg, out),
        Scenario::ZeroMass => run_zero_mass(cfg),
        Scenario::ZeroMassBeta => run_zero_mass_beta(cfg),
        Scenario::Duality => run_duality(cfg),
        Scenario::Marginal => run_marginal_check(cfg),
        Scenario::Deterministic => run_deterministic(cfg),
        Scenario::Assumptions => run_assumptions(cfg),
    }
}
