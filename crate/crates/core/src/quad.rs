//! Small quadrature and one-dimensional search helpers.

use crate::error::{ensure, Error, Result};

/// Gauss–Hermite rule for the standard normal law: `E[F(Z)] ≈ Σ w_i F(z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Result<Self> {
        ensure((1..=200).contains(&n), || format!("Gauss-Hermite order {n} outside 1..=200"))?;
        let (x, w) = hermite_physicists(n)?;
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes = x.iter().map(|xi| xi * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|wi| wi / sqrt_pi).collect();
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

// Newton iteration on orthonormal Hermite polynomials, weight exp(-x^2).
fn hermite_physicists(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!("Gauss-Hermite root {i} of order {n} did not converge")));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// `log Σ exp(v_i)`, with `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(v: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + v.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for n in [1usize, 2, 5, 16, 64, 100] {
            let gh = GaussHermite::new(n).unwrap();
            let m0: f64 = gh.weights().iter().sum();
            assert!((m0 - 1.0).abs() < 1e-13, "n={n} m0={m0}");
            if n >= 3 {
                let m2: f64 = gh.nodes().iter().zip(gh.weights()).map(|(z, w)| w * z * z).sum();
                let m4: f64 = gh.nodes().iter().zip(gh.weights()).map(|(z, w)| w * z.powi(4)).sum();
                assert!((m2 - 1.0).abs() < 1e-12, "n={n} m2={m2}");
                assert!((m4 - 3.0).abs() < 1e-11, "n={n} m4={m4}");
            }
        }
    }

    #[test]
    fn hermite_cosine_expectation() {
        // E[cos(aZ)] = exp(-a^2/2)
        let gh = GaussHermite::new(64).unwrap();
        for a in [0.3, 1.0, 2.5] {
            let est: f64 = gh.nodes().iter().zip(gh.weights()).map(|(z, w)| w * (a * z).cos()).sum();
            assert!((est - (-a * a / 2.0f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = [0.1_f64, -2.0, 3.0];
        let direct: f64 = w.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(w) - direct).abs() < 1e-14);
    }

    #[test]
    fn golden_section_quadratic() {
        let (x, fx) = golden_section(|x| (x - 0.3) * (x - 0.3) + 2.0, -4.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }
}
