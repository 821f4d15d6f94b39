//! Weighted empirical measures, couplings between them, and the distances used
//! to check marginal constraints.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{ensure, ensure_domain, Error, Result};
use crate::grid::dist;

const WEIGHT_TOL: f64 = 1e-12;
const MARGINAL_TOL: f64 = 1e-10;

/// Finitely supported probability measure on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Points are stored row-major, `dim` coordinates each.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        ensure(dim >= 1, || "measure dimension must be at least 1".into())?;
        ensure(!weights.is_empty(), || "measure needs at least one atom".into())?;
        if points.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: points.len(),
            });
        }
        ensure(points.iter().all(|p| p.is_finite()), || "atoms must be finite".into())?;
        ensure(weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "weights must be finite and nonnegative".into()
        })?;
        let total: f64 = weights.iter().sum();
        ensure((total - 1.0).abs() <= WEIGHT_TOL, || {
            format!("weights sum to {total}, expected 1")
        })?;
        Ok(Self { dim, points, weights })
    }

    /// Equal weights on the given atoms.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        ensure(dim >= 1 && !points.is_empty() && points.len() % dim == 0, || {
            "point buffer does not split into whole atoms".into()
        })?;
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    /// Uniform one-dimensional measure on `values`.
    pub fn from_samples_1d(values: &[f64]) -> Result<Self> {
        Self::uniform(1, values.to_vec())
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            m.iter_mut().zip(self.point(i)).for_each(|(a, x)| *a += w * x);
        }
        m
    }

    /// CSV with header `x_1,..,x_d,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x_{k}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| v.to_string()).collect();
            row.push(self.weights[i].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = r.headers()?.clone();
        let cols = header.len();
        ensure_domain(cols >= 2 && &header[cols - 1] == "weight", || {
            "measure CSV header must be x_1,..,x_d,weight".into()
        })?;
        for (k, name) in header.iter().take(cols - 1).enumerate() {
            ensure_domain(name == format!("x_{}", k + 1), || {
                format!("unexpected column `{name}` in measure CSV header")
            })?;
        }
        let dim = cols - 1;
        let (mut points, mut weights) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad number `{field}` in measure CSV")))?;
                if k < dim {
                    points.push(v);
                } else {
                    weights.push(v);
                }
            }
        }
        Self::new(dim, points, weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// A transport plan with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCoupling {
    source: EmpiricalMeasure,
    target: EmpiricalMeasure,
    plan: Vec<f64>,
}

impl DiscreteCoupling {
    /// `plan` is row-major, rows indexed by source atoms.
    pub fn new(source: EmpiricalMeasure, target: EmpiricalMeasure, plan: Vec<f64>) -> Result<Self> {
        let (n, m) = (source.len(), target.len());
        if plan.len() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, got: plan.len() });
        }
        ensure(plan.iter().all(|p| p.is_finite() && *p >= 0.0), || {
            "plan entries must be finite and nonnegative".into()
        })?;
        let c = Self { source, target, plan };
        let r = c.marginal_residual();
        ensure(r <= MARGINAL_TOL, || format!("plan marginals off by {r:e}"))?;
        Ok(c)
    }

    pub fn product(source: EmpiricalMeasure, target: EmpiricalMeasure) -> Self {
        let plan = source
            .weights()
            .iter()
            .flat_map(|a| target.weights().iter().map(move |b| a * b))
            .collect();
        Self { source, target, plan }
    }

    pub fn source(&self) -> &EmpiricalMeasure {
        &self.source
    }

    pub fn target(&self) -> &EmpiricalMeasure {
        &self.target
    }

    pub fn plan(&self) -> &[f64] {
        &self.plan
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.target.len() + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks_exact(self.target.len()).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let m = self.target.len();
        let mut out = vec![0.0; m];
        for row in self.plan.chunks_exact(m) {
            out.iter_mut().zip(row).for_each(|(c, v)| *c += v);
        }
        out
    }

    /// Largest absolute deviation of either marginal.
    pub fn marginal_residual(&self) -> f64 {
        let r = self.row_sums().into_iter().zip(self.source.weights()).map(|(a, b)| (a - b).abs());
        let c = self.col_sums().into_iter().zip(self.target.weights()).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }
}

/// `Σ μ_ij log(μ_ij/ν_ij)` over the support of `μ`; `+∞` when `μ` charges a `ν`-null cell.
pub fn relative_entropy(mu: &DiscreteCoupling, nu: &DiscreteCoupling) -> Result<f64> {
    ensure_domain(
        mu.source.points == nu.source.points && mu.target.points == nu.target.points,
        || "couplings live on different supports".into(),
    )?;
    Ok(relative_entropy_dense(&mu.plan, &nu.plan))
}

/// Entry-wise relative entropy of two nonnegative arrays of the same shape.
pub(crate) fn relative_entropy_dense(mu: &[f64], nu: &[f64]) -> f64 {
    let mut h = 0.0;
    for (&p, &q) in mu.iter().zip(nu) {
        if p > 0.0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            h += p * (p / q).ln();
        }
    }
    h
}

/// Squared 2-Wasserstein distance on the line, by merging cumulative weights.
pub fn wasserstein2_squared_1d(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    for d in [p.dim, q.dim] {
        if d != 1 {
            return Err(Error::UnsupportedDimension(d));
        }
    }
    let sorted = |m: &EmpiricalMeasure| {
        let mut v: Vec<(f64, f64)> = m.points.iter().copied().zip(m.weights.iter().copied()).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (a, b) = (sorted(p), sorted(q));
    let (mut i, mut j) = (0, 0);
    let (mut wa, mut wb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    loop {
        let diff = a[i].0 - b[j].0;
        total += wa.min(wb) * diff * diff;
        if wa < wb {
            wb -= wa;
            i += 1;
            if i == a.len() {
                break;
            }
            wa = a[i].1;
        } else if wb < wa {
            wa -= wb;
            j += 1;
            if j == b.len() {
                break;
            }
            wb = b[j].1;
        } else {
            i += 1;
            j += 1;
            if i == a.len() || j == b.len() {
                break;
            }
            wa = a[i].1;
            wb = b[j].1;
        }
    }
    Ok(total)
}

/// Exact optimal transport for small instances (`|p|·|q| ≤ 64`).
///
/// Walks the vertices of the transportation polytope from the northwest-corner
/// vertex with Bland's pivoting rule, so the returned plan is an optimal vertex.
pub fn discrete_ot_exact(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    cost: &[f64],
) -> Result<(f64, DiscreteCoupling)> {
    let (n, m) = (p.len(), q.len());
    if n * m > 64 {
        return Err(Error::TooLarge(format!("{n}x{m} transport instance exceeds 64 cells")));
    }
    if cost.len() != n * m {
        return Err(Error::DimensionMismatch { expected: n * m, got: cost.len() });
    }
    ensure(cost.iter().all(|c| c.is_finite()), || "cost entries must be finite".into())?;
    let plan = transport_simplex(p.weights(), q.weights(), cost, n, m)?;
    let value = plan.iter().zip(cost).map(|(x, c)| x * c).sum();
    let coupling = DiscreteCoupling::new(p.clone(), q.clone(), plan)?;
    Ok((value, coupling))
}

fn transport_simplex(a: &[f64], b: &[f64], c: &[f64], n: usize, m: usize) -> Result<Vec<f64>> {
    // Northwest-corner basis: a staircase of n + m - 1 cells.
    let mut basis: Vec<usize> = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    loop {
        basis.push(i * m + j);
        if i == n - 1 && j == m - 1 {
            break;
        }
        if (ra <= rb && i < n - 1) || j == m - 1 {
            rb -= ra;
            i += 1;
            ra = a[i];
        } else {
            ra -= rb;
            j += 1;
            rb = b[j];
        }
    }
    let scale = c.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
    for _ in 0..10_000 {
        let (u, v) = potentials(&basis, c, n, m);
        let entering = (0..n * m).find(|&e| {
            !basis.contains(&e) && c[e] - u[e / m] - v[e % m] < -1e-12 * scale
        });
        let Some(e) = entering else {
            return Ok(basic_values(&basis, a, b, n, m));
        };
        let x = basic_values(&basis, a, b, n, m);
        let path = tree_path(&basis, n, m, e / m, e % m);
        // Cells on the path alternate -, +, -, ... starting next to the entering row.
        let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
        let theta = minus.iter().map(|&k| x[k]).fold(f64::INFINITY, f64::min);
        let leaving = *minus
            .iter()
            .filter(|&&k| x[k] <= theta)
            .min()
            .expect("cycle has a decreasing cell");
        basis.retain(|&k| k != leaving);
        basis.push(e);
    }
    Err(Error::Numerical("transportation simplex did not terminate".into()))
}

// Row/column duals with u_0 = 0 and u_i + v_j = c_ij on basic cells.
fn potentials(basis: &[usize], c: &[f64], n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; m];
    u[0] = 0.0;
    let mut changed = true;
    while changed {
        changed = false;
        for &k in basis {
            let (i, j) = (k / m, k % m);
            if !u[i].is_nan() && v[j].is_nan() {
                v[j] = c[k] - u[i];
                changed = true;
            } else if u[i].is_nan() && !v[j].is_nan() {
                u[i] = c[k] - v[j];
                changed = true;
            }
        }
    }
    (u, v)
}

// Solves the basic variables on the spanning tree by peeling leaves.
fn basic_values(basis: &[usize], a: &[f64], b: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut x = vec![0.0; n * m];
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut live: Vec<usize> = basis.to_vec();
    while !live.is_empty() {
        let mut row_deg = vec![0usize; n];
        let mut col_deg = vec![0usize; m];
        for &k in &live {
            row_deg[k / m] += 1;
            col_deg[k % m] += 1;
        }
        let pos = live
            .iter()
            .position(|&k| row_deg[k / m] == 1 || col_deg[k % m] == 1)
            .expect("a spanning tree always has a leaf");
        let k = live.swap_remove(pos);
        let (i, j) = (k / m, k % m);
        let val = if row_deg[i] == 1 { ra[i] } else { rb[j] };
        x[k] = val.max(0.0);
        ra[i] -= val;
        rb[j] -= val;
    }
    x
}

// Basic cells on the tree path from row `r` to column `col`, in order.
fn tree_path(basis: &[usize], n: usize, m: usize, r: usize, col: usize) -> Vec<usize> {
    // Graph nodes: rows 0..n, columns n..n+m.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + m];
    for &k in basis {
        let (i, j) = (k / m, n + k % m);
        adj[i].push((j, k));
        adj[j].push((i, k));
    }
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n + m];
    let mut seen = vec![false; n + m];
    let mut stack = vec![r];
    seen[r] = true;
    while let Some(node) = stack.pop() {
        for &(next, cell) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                prev[next] = Some((node, cell));
                stack.push(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = n + col;
    while node != r {
        let (p, cell) = prev[node].expect("basis is a spanning tree");
        path.push(cell);
        node = p;
    }
    path.reverse();
    path
}

/// `2E|X-Y| - E|X-X'| - E|Y-Y'|` by weighted double sums.
pub fn energy_distance(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    if p.dim != q.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: q.dim });
    }
    let cross = mean_pair_distance(p, q);
    let within_p = mean_pair_distance(p, p);
    let within_q = mean_pair_distance(q, q);
    Ok((2.0 * cross - within_p - within_q).max(0.0))
}

fn mean_pair_distance(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> f64 {
    (0..p.len())
        .map(|i| {
            let xi = p.point(i);
            p.weights[i] * (0..q.len()).map(|j| q.weights[j] * dist(xi, q.point(j))).sum::<f64>()
        })
        .sum()
}
