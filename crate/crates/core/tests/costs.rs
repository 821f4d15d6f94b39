mod common;

use common::integrate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sotlab::costs::{
    action, check_assumptions, deterministic_identity_check, mc_value, CostFunction, PolynomialPath, Potential,
    SamplingSpec,
};
use sotlab::{KernelParams, SampledPath, TimeGrid};

fn radii() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0]
}

#[test]
fn action_matches_fine_trapezoid_to_second_order() {
    let cost = CostFunction::power_sum(vec![0.5, 0.2], vec![2.0, 3.0])
        .unwrap()
        .with_potential(Potential::Bump { amplitude: 0.4, width: 1.0 })
        .unwrap();
    let u = |t: f64| [(3.0 * t).sin() + 0.2, (5.0 * t).cos()];
    let x = |t: f64| [t * t - 0.5, 1.0 - t];
    let make = |n: usize| {
        let g = TimeGrid::uniform(n).unwrap();
        let up = SampledPath::from_fn(g.clone(), 2, |t, out| out.copy_from_slice(&u(t))).unwrap();
        let xp = SampledPath::from_fn(g, 2, |t, out| out.copy_from_slice(&x(t))).unwrap();
        action(&up, &xp, None, &cost).unwrap()
    };
    let exact = integrate(
        |t| {
            let (uu, xx) = (u(t), x(t));
            cost.evaluate_l0(t, &xx, &uu)
        },
        0.0,
        1.0,
        200,
    );
    let mut last = f64::NAN;
    for n in [32, 64, 128] {
        let coarse = make(n);
        let fine = make(10 * n);
        let err = (coarse - fine).abs();
        assert!(err < 2.0 / (n * n) as f64, "n={n}: {err}");
        if last.is_finite() {
            let ratio = last / (coarse - exact).abs();
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
        last = (coarse - exact).abs();
    }
}

#[test]
fn action_rejects_misaligned_grids() {
    let u = SampledPath::zeros(TimeGrid::uniform(8).unwrap(), 1);
    let x = SampledPath::zeros(TimeGrid::uniform(16).unwrap(), 1);
    assert!(action(&u, &x, None, &CostFunction::quadratic()).is_err());
}

#[test]
fn action_with_momentum_uses_full_state() {
    let g = TimeGrid::uniform(4).unwrap();
    let cost = CostFunction::quadratic().with_potential(Potential::Friction { amplitude: 1.0 }).unwrap();
    let u = SampledPath::zeros(g.clone(), 1);
    let x = SampledPath::zeros(g.clone(), 1);
    let y = SampledPath::constant(g, &[2.0]);
    assert_eq!(action(&u, &x, None, &cost).unwrap(), 0.0);
    let a = action(&u, &x, Some(&y), &cost).unwrap();
    assert!((a - (1.0 - (-4.0f64).exp())).abs() < 1e-15);
}

#[test]
fn mc_value_clt() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let (mean, se) = mc_value(&v).unwrap();
    assert!(mean.abs() < 0.03);
    assert!((se - 0.01).abs() < 0.001);
}

#[test]
fn quadratic_assumption_suite() {
    let spec = SamplingSpec::new(2000, 2).with_seed(3);
    let r = check_assumptions(&CostFunction::quadratic(), &spec, &radii(), &[(0.1, Some(0.1)), (0.1, None)]).unwrap();
    for &radius in &radii() {
        assert_eq!(r.growth_at(2.0, radius), Some(0.5));
    }
    assert_eq!(r.homogeneity.violations, 0);
    assert!(r.homogeneity.worst.abs() < 1e-14);
    let gb = r.growth_bound.as_ref().unwrap();
    assert_eq!(gb.violations, 0);
    assert!(gb.worst >= 0.0);
    assert_eq!(r.growth_bound_constant, Some(1.0));
    assert!(r.modulus.iter().all(|m| m.value == 0.0));
    assert!(r.is_convex());
    assert!(r.to_json().unwrap().contains("\"homogeneity\""));
}

#[test]
fn softened_quadratic_is_flagged_non_convex() {
    for p in [0.5, 1.0, 1.5] {
        for d in [1, 2] {
            let spec = SamplingSpec::new(1000, d).with_seed(5).with_radii(1.0, 1.0);
            let r = check_assumptions(&CostFunction::softened_quadratic(p).unwrap(), &spec, &radii(), &[]).unwrap();
            assert!(!r.is_convex(), "p={p} d={d}");
            assert!(r.convexity.worst < 0.0);
            // Not convex, yet the growth and homogeneity conditions hold.
            assert_eq!(r.homogeneity.violations, 0, "p={p} d={d}");
            assert!(r.growth_at(1.0, 100.0).unwrap() > r.growth_at(1.0, 1.0).unwrap());
        }
    }
}

#[test]
fn pure_power_satisfies_growth_bound() {
    for r0 in [2.0, 2.5, 3.0, 4.0] {
        let cost = CostFunction::power_sum(vec![1.0], vec![r0]).unwrap();
        let spec = SamplingSpec::new(10_000, 3).with_seed(17);
        let r = check_assumptions(&cost, &spec, &[1.0], &[]).unwrap();
        let gb = r.growth_bound.unwrap();
        assert_eq!(gb.violations, 0, "r0={r0}");
        assert!(gb.worst >= 0.0);
        assert_eq!(gb.samples, 10_000);
    }
}

#[test]
fn power_sums_are_midpoint_convex_with_growing_c1() {
    let cost = CostFunction::power_sum(vec![0.5, 0.1, 0.01], vec![2.0, 3.0, 4.5])
        .unwrap()
        .with_potential(Potential::Pulse { amplitude: 1.0 })
        .unwrap();
    let spec = SamplingSpec::new(1000, 2).with_seed(9);
    let r = check_assumptions(&cost, &spec, &radii(), &[(0.0, Some(1e-3)), (0.05, Some(1e-3)), (0.5, None)]).unwrap();
    assert!(r.is_convex());
    assert_eq!(r.homogeneity.violations, 0);
    let c1: Vec<f64> = radii().iter().map(|&radius| r.growth_at(1.0, radius).unwrap()).collect();
    assert!(c1.windows(2).all(|w| w[1] > w[0]), "{c1:?}");
    // The sampled C_{1,R} is never below the analytic lower bound.
    for (&radius, v) in radii().iter().zip(&c1) {
        assert!(*v >= cost.c1_lower(radius) - 1e-12);
    }
    let m: Vec<f64> = r.modulus.iter().map(|m| m.value).collect();
    assert_eq!(m[0], 0.0);
    assert!(m[1] > 0.0 && m[1] < m[2] && m[2] <= 1.0, "{m:?}");
}

#[test]
fn sample_counts_are_enforced() {
    let spec = SamplingSpec::new(999, 1);
    assert!(check_assumptions(&CostFunction::quadratic(), &spec, &[1.0], &[]).is_err());
}

fn random_cubic(rng: &mut ChaCha8Rng, d: usize) -> PolynomialPath {
    PolynomialPath::new(
        (0..4).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
    )
    .unwrap()
}

#[test]
fn deterministic_identity_on_cubics() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let p = KernelParams::new(rng.random_range(0.01..2.0), rng.random_range(0.2..3.0)).unwrap();
        let path = random_cubic(&mut rng, 3);
        let id = deterministic_identity_check(&path, &p);
        assert!(id.discrepancy() < 1e-10 * (1.0 + id.lhs), "{id:?}");
        // Independent oracle: hand-differentiated cubic and Gauss–Legendre quadrature.
        let c = path.coefficients();
        let (g, m) = (p.gamma(), p.m());
        let oracle = integrate(
            |t| {
                (0..3)
                    .map(|i| {
                        let v = c[1][i] + 2.0 * c[2][i] * t + 3.0 * c[3][i] * t * t;
                        let a = 2.0 * c[2][i] + 6.0 * c[3][i] * t;
                        (g * v + m * a).powi(2)
                    })
                    .sum()
            },
            0.0,
            1.0,
            4,
        );
        assert!((id.lhs - oracle).abs() < 1e-10 * (1.0 + oracle));
    }
}

#[test]
fn deterministic_identity_special_paths() {
    let p = KernelParams::new(0.3, 1.7).unwrap();
    let line = PolynomialPath::line(&[1.0, -2.0], &[4.0, 2.0]).unwrap();
    let id = deterministic_identity_check(&line, &p);
    let expected = 1.7 * 1.7 * 25.0;
    assert!((id.lhs - expected).abs() <= 4.0 * f64::EPSILON * expected);
    assert_eq!(id.boundary_term, 0.0);
    assert_eq!(id.acceleration_term, 0.0);
    let zero = PolynomialPath::new(vec![vec![0.0; 2]; 4]).unwrap();
    let id = deterministic_identity_check(&zero, &p);
    assert_eq!((id.lhs, id.rhs()), (0.0, 0.0));
}

proptest! {
    #[test]
    fn evaluate_is_nonnegative_and_reduces_to_potential(
        u in prop::collection::vec(-20.0..20.0f64, 2),
        x in prop::collection::vec(-5.0..5.0f64, 2),
        y in prop::collection::vec(-5.0..5.0f64, 2),
        t in 0.0..1.0f64,
        which in 0usize..4,
    ) {
        let cost = match which {
            0 => CostFunction::quadratic(),
            1 => CostFunction::power_sum(vec![0.0, 1.0], vec![2.0, 3.5]).unwrap(),
            2 => CostFunction::softened_quadratic(1.2).unwrap(),
            _ => CostFunction::quadratic().with_potential(Potential::Bump { amplitude: 2.0, width: 0.7 }).unwrap(),
        };
        prop_assert!(cost.evaluate(t, &x, &y, &u) >= 0.0);
        let pot = cost.potential().eval(t, &x, &y);
        let base = if which == 2 { 1.0 } else { 0.0 };
        prop_assert_eq!(cost.evaluate(t, &x, &y, &[0.0, 0.0]), pot + base);
    }

    #[test]
    fn action_is_monotone_under_domination(
        vals in prop::collection::vec((-3.0..3.0f64, 1.0..2.0f64), 9),
        power in 2.0..5.0f64,
    ) {
        let g = TimeGrid::uniform(8).unwrap();
        let small: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let large: Vec<f64> = vals.iter().map(|v| v.0 * v.1).collect();
        let u1 = SampledPath::new(g.clone(), 1, small).unwrap();
        let u2 = SampledPath::new(g.clone(), 1, large).unwrap();
        let x = SampledPath::zeros(g, 1);
        let cost = CostFunction::power_sum(vec![1.0], vec![power]).unwrap();
        prop_assert!(action(&u1, &x, None, &cost).unwrap() <= action(&u2, &x, None, &cost).unwrap());
    }
}
