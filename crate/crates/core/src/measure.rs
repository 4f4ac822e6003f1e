//! Empirical measures: moments, generalized-inverse quantiles, expected
//! shortfall, Wasserstein distances and the semi-Wasserstein `W_v̄`.
//!
//! Distances compare measures with the same number of atoms, so couplings
//! reduce to permutations. In one dimension with a convex cost the sorted
//! (monotone) coupling is optimal; otherwise an exact assignment solve is
//! used up to [`EXACT_CAP`] atoms.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::expr::{Args, Expr};
use crate::reduce;

/// Largest sample size accepted by the exact assignment solver.
pub const EXACT_CAP: usize = 256;

/// Uniform empirical measure on `N` points of `ℝ^d`.
#[derive(Debug)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    dim: usize,
    sorted: Vec<OnceLock<Vec<f64>>>,
}

impl Clone for EmpiricalMeasure {
    fn clone(&self) -> Self {
        EmpiricalMeasure::from_parts(self.samples.clone(), self.dim)
    }
}

impl EmpiricalMeasure {
    /// Builds a measure from row-major `N × d` samples.
    pub fn new(samples: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if samples.is_empty() || samples.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "need a non-empty multiple of {dim} sample values, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample value {} is not finite ({})",
                bad, samples[bad]
            )));
        }
        Ok(Self::from_parts(samples, dim))
    }

    pub fn from_scalars(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, 1)
    }

    fn from_parts(samples: Vec<f64>, dim: usize) -> Self {
        let sorted = (0..dim).map(|_| OnceLock::new()).collect();
        EmpiricalMeasure { samples, dim, sorted }
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Sorted values along `axis` (computed once).
    pub fn sorted(&self, axis: usize) -> &[f64] {
        self.sorted[axis].get_or_init(|| {
            let mut v: Vec<f64> =
                (0..self.len()).map(|i| self.samples[i * self.dim + axis]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
    }

    fn require_scalar(&self, what: &str) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::InvalidArgument(format!("{what} needs d = 1, got d = {}", self.dim)));
        }
        Ok(())
    }

    /// `(1/N) Σ x_i^p` for scalar samples.
    pub fn moment(&self, p: i32) -> Result<f64> {
        self.require_scalar("moment")?;
        if p < 1 {
            return Err(Error::InvalidArgument(format!("moment order must be >= 1, got {p}")));
        }
        Ok(raw_moment(&self.samples, 1, 0, p))
    }

    pub fn mean(&self, axis: usize) -> f64 {
        raw_moment(&self.samples, self.dim, axis, 1)
    }

    /// Left-continuous generalized inverse CDF: `x_(⌈sN⌉)`.
    pub fn quantile(&self, s: f64) -> Result<f64> {
        self.require_scalar("quantile")?;
        check_level(s, "quantile level")?;
        Ok(quantile_sorted(self.sorted(0), s))
    }

    /// `(1/α) ∫_0^α F⁻¹(s) ds` of the empirical inverse CDF, computed exactly.
    pub fn expected_shortfall(&self, alpha: f64) -> Result<f64> {
        self.require_scalar("expected shortfall")?;
        check_level(alpha, "expected-shortfall level")?;
        Ok(expected_shortfall_sorted(self.sorted(0), alpha))
    }
}

pub(crate) fn raw_moment(samples: &[f64], dim: usize, axis: usize, p: i32) -> f64 {
    let n = samples.len() / dim;
    reduce::mean_by(n, &|i| samples[i * dim + axis].powi(p))
}

fn check_level(s: f64, what: &str) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must lie in (0, 1], got {s}")))
    }
}

/// `s·N` snapped to the nearest integer when it is one up to rounding.
fn scaled_rank(s: f64, n: usize) -> (f64, bool) {
    let prod = s * n as f64;
    let r = prod.round();
    if (prod - r).abs() <= 1e-9 * prod.max(1.0) {
        (r, true)
    } else {
        (prod, false)
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], s: f64) -> f64 {
    let (rank, integral) = scaled_rank(s, sorted.len());
    let k = if integral { rank as usize } else { rank.ceil() as usize };
    sorted[k.clamp(1, sorted.len()) - 1]
}

pub(crate) fn expected_shortfall_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let (rank, integral) = scaled_rank(alpha, n);
    let m = if integral { rank as usize } else { rank.floor() as usize }.min(n);
    // (1/αN)[Σ_{i≤m} x_(i) + (αN − m) x_(m+1)], written around a pivot so
    // that a constant sample returns its value exactly
    let (pivot, weight) = if integral || m == n { (sorted[m - 1], m as f64) } else { (sorted[m], rank) };
    let excess = reduce::sum_by(0..m, &|i| sorted[i] - pivot);
    pivot + excess / weight
}

/// Symmetric non-negative kernel `v̄` with `v̄(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `|z|^p` with the Euclidean norm.
    AbsPower(f64),
    /// Custom kernel written over `X(a)` for the coordinates of `z`.
    Custom { expr: Expr, convex: bool },
}

impl Kernel {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Kernel::AbsPower(p) => {
                let norm2: f64 = z.iter().map(|v| v * v).sum();
                if *p == 2.0 {
                    norm2
                } else {
                    norm2.sqrt().powf(*p)
                }
            }
            Kernel::Custom { expr, .. } => expr.eval(&Args::new(0.0, z, &[])),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Kernel::AbsPower(p) => *p >= 1.0,
            Kernel::Custom { convex, .. } => *convex,
        }
    }

    /// Checks `v̄(0) = 0`, `v̄ ≥ 0` and evenness at the given probe points.
    pub fn validate(&self, dim: usize, probes: &[f64]) -> Result<()> {
        let origin = vec![0.0; dim];
        if self.eval(&origin) != 0.0 {
            return Err(Error::InvalidKernel(format!("v̄(0) = {} ≠ 0", self.eval(&origin))));
        }
        for z in probes.chunks(dim) {
            let plus = self.eval(z);
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            let minus = self.eval(&neg);
            if !(plus >= 0.0) {
                return Err(Error::InvalidKernel(format!("v̄({z:?}) = {plus} < 0")));
            }
            if (plus - minus).abs() > 1e-12 * plus.abs().max(1.0) {
                return Err(Error::InvalidKernel(format!("v̄ is not even at {z:?}")));
            }
        }
        Ok(())
    }
}

/// Transport cost `c(x − y)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Cost {
    /// `|x − y|^p`.
    Power(f64),
    Kernel(Kernel),
}

impl Cost {
    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Cost::Power(p) => Kernel::AbsPower(*p).eval(z),
            Cost::Kernel(k) => k.eval(z),
        }
    }
}

fn check_same_size(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::SizeMismatch(mu.len(), nu.len()));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimensions differ: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    Ok(())
}

/// `W_p` between scalar measures via the monotone coupling.
pub fn wasserstein_p_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    mu.require_scalar("wasserstein_p_1d")?;
    check_same_size(mu, nu)?;
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let (a, b) = (mu.sorted(0), nu.sorted(0));
    let mean = reduce::mean_by(a.len(), &|i| (a[i] - b[i]).abs().powf(p));
    Ok(mean.powf(1.0 / p))
}

/// Minimum over permutations `π` of `(1/N) Σ c(x_i − y_π(i))`.
///
/// No `p`-th root is taken; for `Cost::Power(p)` this is `W_p^p`.
pub fn wasserstein_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &Cost) -> Result<f64> {
    check_same_size(mu, nu)?;
    let n = mu.len();
    if n > EXACT_CAP {
        return Err(Error::TooManySamples { limit: n, cap: EXACT_CAP });
    }
    let d = mu.dim();
    let mut z = vec![0.0; d];
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                z[a] = mu.point(i)[a] - nu.point(j)[a];
            }
            matrix[i * n + j] = cost.eval(&z);
        }
    }
    let perm = min_cost_assignment(n, &matrix);
    let total = reduce::sum_by(0..n, &|i| matrix[i * n + perm[i]]);
    Ok(total / n as f64)
}

/// Hungarian method (shortest augmenting paths with potentials) on a dense
/// `n × n` cost matrix. Returns the column assigned to each row.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    // 1-based bookkeeping; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    perm
}

/// Value of `W_v̄` and whether it is the exact infimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiWasserstein {
    pub value: f64,
    /// `false` when only an admissible coupling was evaluated, so `value`
    /// is an upper bound.
    pub exact: bool,
}

/// `W_v̄(μ, ν) = inf_π (1/N) Σ v̄(x_i − y_π(i))`, without any root.
pub fn semi_wasserstein_vbar(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    kernel: &Kernel,
) -> Result<SemiWasserstein> {
    check_same_size(mu, nu)?;
    let d = mu.dim();
    if d == 1 {
        let (a, b) = (mu.sorted(0), nu.sorted(0));
        let diffs: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
        kernel.validate(1, &diffs)?;
        let sorted_value = reduce::mean_by(diffs.len(), &|i| kernel.eval(&diffs[i..i + 1]));
        if kernel.is_convex() {
            return Ok(SemiWasserstein { value: sorted_value, exact: true });
        }
        if mu.len() <= EXACT_CAP {
            let value = wasserstein_exact(mu, nu, &Cost::Kernel(kernel.clone()))?;
            return Ok(SemiWasserstein { value, exact: true });
        }
        return Ok(SemiWasserstein { value: sorted_value, exact: false });
    }
    let n = mu.len();
    let diffs: Vec<f64> = (0..n)
        .flat_map(|i| (0..d).map(move |a| (i, a)))
        .map(|(i, a)| mu.point(i)[a] - nu.point(i)[a])
        .collect();
    kernel.validate(d, &diffs)?;
    if n <= EXACT_CAP {
        let value = wasserstein_exact(mu, nu, &Cost::Kernel(kernel.clone()))?;
        Ok(SemiWasserstein { value, exact: true })
    } else {
        let value = reduce::mean_by(n, &|i| kernel.eval(&diffs[i * d..(i + 1) * d]));
        Ok(SemiWasserstein { value, exact: false })
    }
}

/// `W_1` between two sorted scalar samples, as `∫ |F_a − F_b| dx`.
pub(crate) fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return reduce::mean_by(a.len(), &|i| (a[i] - b[i]).abs());
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}
