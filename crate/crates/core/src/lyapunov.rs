//! Generator evaluation, Lyapunov checks, envelopes and exit bounds.
//!
//! The generator acting on `v(t, x, μ)` is
//!
//! ```text
//! L^μ v = ∂_t v + b·∂_x v + ½ tr(σσ* ∂²_x v)
//!       + ∫ [ b(y)·∂_μ v(x)(y) + ½ tr(σσ*(y) ∂_y∂_μ v(x)(y)) ] μ(dy)
//! ```
//!
//! with the measure derivative supplied in separable form
//! `∂_μ v(x)(y) = Σ_r f_r(x) g_r(y)`, so the inner integral collapses to one
//! average per term.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Args, Expr};
use crate::measure::EmpiricalMeasure;
use crate::model::{ModelSpec, MAX_DIM};
use crate::reduce;
use crate::rng::{derive_seed, StreamRng};

const PROBE_STREAM: u64 = 0x9_0BE5;

/// Largest cloud accepted by the `O(N²)` reference path.
pub const REFERENCE_CAP: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LyapunovMode {
    /// `L^μ v ≤ m1 v + m2` at every point.
    Pointwise,
    /// `∫ L^μ v dμ ≤ m1 ∫ v dμ + m2`.
    Integrated,
}

impl LyapunovMode {
    pub fn name(self) -> &'static str {
        match self {
            LyapunovMode::Pointwise => "pointwise",
            LyapunovMode::Integrated => "integrated",
        }
    }
}

/// A scalar rate `m(t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Rate {
    Constant(f64),
    /// `a + b t`.
    Affine { a: f64, b: f64 },
    /// Expression in `t` only.
    General(Expr),
}

impl Rate {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Rate::Constant(c) => *c,
            Rate::Affine { a, b } => a + b * t,
            Rate::General(e) => e.eval(&Args::new(t, &[], &[])),
        }
    }

    fn constant(&self) -> Option<f64> {
        match *self {
            Rate::Constant(c) => Some(c),
            Rate::Affine { a, b } if b == 0.0 => Some(a),
            _ => None,
        }
    }

    /// `∫_s^t m(r) dr`; exact unless the rate is general.
    pub fn integral(&self, s: f64, t: f64, quad_step: f64) -> f64 {
        match *self {
            Rate::Constant(c) => c * (t - s),
            Rate::Affine { a, b } => a * (t - s) + 0.5 * b * (t * t - s * s),
            Rate::General(_) => trapezoid(|r| self.eval(r), s, t, quad_step),
        }
    }

    /// `∫_s^t m(r)⁺ dr`.
    pub fn positive_integral(&self, s: f64, t: f64, quad_step: f64) -> f64 {
        match *self {
            Rate::Constant(c) => c.max(0.0) * (t - s),
            Rate::Affine { a, b } => {
                if b == 0.0 {
                    return a.max(0.0) * (t - s);
                }
                // split at the root of a + b r
                let root = (-a / b).clamp(s, t);
                let part = |lo: f64, hi: f64| {
                    let v = a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo);
                    v.max(0.0)
                };
                part(s, root) + part(root, t)
            }
            Rate::General(_) => trapezoid(|r| self.eval(r).max(0.0), s, t, quad_step),
        }
    }
}

pub(crate) fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, step: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for j in 1..n {
        acc += f(a + j as f64 * h);
    }
    acc * h
}

/// Closed-form boundary infimum `V_k = inf_{x ∉ D_k} V(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelInfimum {
    /// `coeff · k^p`.
    Power { coeff: f64, p: i32 },
    /// `k² + k⁻²`.
    SquarePlusInverseSquare,
}

impl LevelInfimum {
    pub fn value(&self, k: u32) -> f64 {
        let k = f64::from(k);
        match *self {
            LevelInfimum::Power { coeff, p } => coeff * k.powi(p),
            LevelInfimum::SquarePlusInverseSquare => k * k + 1.0 / (k * k),
        }
    }
}

/// One separable term `x_factor(t, x, F) · g(t, y, F)` of `∂_μ v(x)(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureTerm {
    pub x_factor: Expr,
    /// `g` per axis, in the `y` variables.
    pub y_grad: Vec<Expr>,
    /// `∂_y g`, row-major `d × d`.
    pub y_hess: Vec<Expr>,
}

/// A Lyapunov function with its derivatives in closed form. Functional
/// indices `F_j` refer to the paired model's declared functionals.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSpec {
    pub v: Expr,
    pub dt_v: Expr,
    pub dx_v: Vec<Expr>,
    /// Row-major `d × d`.
    pub dxx_v: Vec<Expr>,
    pub measure_terms: Vec<MeasureTerm>,
    /// `V(t, x)`.
    pub floor: Expr,
    pub m1: Rate,
    pub m2: Rate,
    pub level_infimum: LevelInfimum,
    pub mode: LyapunovMode,
}

impl LyapunovSpec {
    /// Checks shapes and variable use against the model.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let d = model.dim();
        let nf = model.functionals().len();
        let bad = |msg: String| Err(Error::InvalidArgument(format!("Lyapunov package: {msg}")));
        if self.dx_v.len() != d {
            return bad(format!("∂_x v has {} entries, need {d}", self.dx_v.len()));
        }
        if self.dxx_v.len() != d * d {
            return bad(format!("∂²_x v has {} entries, need {}", self.dxx_v.len(), d * d));
        }
        let x_side = std::iter::once(&self.v)
            .chain([&self.dt_v, &self.floor])
            .chain(&self.dx_v)
            .chain(&self.dxx_v)
            .chain(self.measure_terms.iter().map(|m| &m.x_factor));
        for e in x_side {
            if e.max_y_axis().is_some() {
                return bad(format!("`{e}` uses y outside a measure derivative"));
            }
            if e.max_state_axis().is_some_and(|a| a >= d) {
                return bad(format!("`{e}` references an axis beyond {d}"));
            }
            if e.max_functional().is_some_and(|j| j >= nf) {
                return bad(format!("`{e}` references an undeclared functional"));
            }
        }
        for m in &self.measure_terms {
            if m.y_grad.len() != d || m.y_hess.len() != d * d {
                return bad("measure term has wrong derivative shape".into());
            }
            for e in m.y_grad.iter().chain(&m.y_hess) {
                if e.max_state_axis().is_some() {
                    return bad(format!("`{e}` must be written in y only"));
                }
                if e.max_y_axis().is_some_and(|a| a >= d) || e.max_functional().is_some_and(|j| j >= nf) {
                    return bad(format!("`{e}` references unknown variables"));
                }
            }
        }
        for r in [&self.m1, &self.m2] {
            if let Rate::General(e) = r {
                if e.max_state_axis().is_some() || e.max_y_axis().is_some() || e.max_functional().is_some() {
                    return bad("rates may depend on t only".into());
                }
            }
        }
        Ok(())
    }

    pub fn eval_v(&self, t: f64, x: &[f64], fv: &[f64]) -> f64 {
        self.v.eval(&Args::new(t, x, fv))
    }

    pub fn eval_floor(&self, t: f64, x: &[f64], fv: &[f64]) -> f64 {
        self.floor.eval(&Args::new(t, x, fv))
    }

    pub fn has_measure_dependence(&self) -> bool {
        !self.measure_terms.is_empty()
    }
}

/// Coefficients at `x`, zero outside `D_cut` when a cut level is given.
pub(crate) fn cut_coefficients(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    fv: &[f64],
    cut: Option<u32>,
    b: &mut [f64],
    s: &mut [f64],
) -> Result<()> {
    if cut.is_some_and(|k| !model.ladder().level_contains(k, x)) {
        b.iter_mut().for_each(|v| *v = 0.0);
        s.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    model.coefficients_into(t, x, fv, b, s);
    check_finite(b, s, t, x)
}

/// Local part `∂_t v + b·∂_x v + ½ tr(σσ* ∂²_x v)` at one point.
pub(crate) fn local_part(
    model: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    x: &[f64],
    fv: &[f64],
    cut: Option<u32>,
) -> Result<f64> {
    let d = model.dim();
    let dn = model.noise_dim();
    let mut b = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM * MAX_DIM];
    cut_coefficients(model, t, x, fv, cut, &mut b[..d], &mut s[..d * dn])?;
    let args = Args::new(t, x, fv);
    let mut acc = lyap.dt_v.eval(&args);
    for a in 0..d {
        acc += b[a] * lyap.dx_v[a].eval(&args);
    }
    acc += 0.5 * trace_term(&s[..d * dn], d, dn, |a, c| lyap.dxx_v[a * d + c].eval(&args));
    Ok(acc)
}

fn check_finite(b: &[f64], s: &[f64], t: f64, x: &[f64]) -> Result<()> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient { what: "drift", t, x: x.to_vec() });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient { what: "diffusion", t, x: x.to_vec() });
    }
    Ok(())
}

/// `tr(σσ* H) = Σ_{a,c} (σσ*)_{ac} H_{ac}`.
#[inline]
pub(crate) fn trace_term(s: &[f64], d: usize, dn: usize, h: impl Fn(usize, usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for a in 0..d {
        for c in 0..d {
            let mut aa = 0.0;
            for j in 0..dn {
                aa += s[a * dn + j] * s[c * dn + j];
            }
            if aa != 0.0 {
                acc += aa * h(a, c);
            }
        }
    }
    acc
}

/// `b(y)·g_r(y) + ½ tr(σσ*(y) ∂_y g_r(y))` for every term `r`, at one `y`.
fn measure_integrands(
    model: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    y: &[f64],
    fv: &[f64],
    cut: Option<u32>,
    out: &mut [f64],
) -> Result<()> {
    let d = model.dim();
    let dn = model.noise_dim();
    let mut b = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM * MAX_DIM];
    cut_coefficients(model, t, y, fv, cut, &mut b[..d], &mut s[..d * dn])?;
    let args = Args::new(t, &[], fv).with_y(y);
    for (o, term) in out.iter_mut().zip(&lyap.measure_terms) {
        let mut acc = 0.0;
        for a in 0..d {
            if b[a] != 0.0 {
                acc += b[a] * term.y_grad[a].eval(&args);
            }
        }
        acc += 0.5 * trace_term(&s[..d * dn], d, dn, |a, c| term.y_hess[a * d + c].eval(&args));
        *o = acc;
    }
    Ok(())
}

fn first_error(values: Vec<Result<f64>>) -> Result<Vec<f64>> {
    values.into_iter().collect()
}

/// Per-term averages `A_r = (1/N) Σ_j [b·g_r + ½ tr(σσ* ∂_y g_r)](y_j)`.
pub(crate) fn measure_averages(
    model: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    samples: &[f64],
    fv: &[f64],
    cut: Option<u32>,
) -> Result<Vec<f64>> {
    let nt = lyap.measure_terms.len();
    if nt == 0 {
        return Ok(Vec::new());
    }
    let d = model.dim();
    let n = samples.len() / d;
    let per_point: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|j| {
            let mut out = vec![0.0; nt];
            measure_integrands(model, lyap, t, &samples[j * d..(j + 1) * d], fv, cut, &mut out).map(|_| out)
        })
        .collect();
    let per_point: Vec<Vec<f64>> = per_point.into_iter().collect::<Result<_>>()?;
    Ok((0..nt).map(|r| reduce::mean_by(n, &|j| per_point[j][r])).collect())
}

/// Generator values at `points` (row-major) with `μ̂ = mu`.
pub fn generator_values(
    model: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    points: &[f64],
    mu: &EmpiricalMeasure,
) -> Result<Vec<f64>> {
    let d = model.dim();
    if mu.dim() != d || points.len() % d != 0 {
        return Err(Error::InvalidArgument("dimension mismatch in generator".into()));
    }
    let fv = model.functional_values(mu.samples());
    let averages = measure_averages(model, lyap, t, mu.samples(), &fv, None)?;
    let values: Vec<Result<f64>> = points
        .par_chunks(d)
        .with_min_len(256)
        .map(|x| {
            let mut acc = local_part(model, lyap, t, x, &fv, None)?;
            let args = Args::new(t, x, &fv);
            for (term, avg) in lyap.measure_terms.iter().zip(&averages) {
                acc += term.x_factor.eval(&args) * avg;
            }
            Ok(acc)
        })
        .collect();
    first_error(values)
}

/// `L^μ v(t, x)` with `μ = mu`.
pub fn generator(model: &ModelSpec, lyap: &LyapunovSpec, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Result<f64> {
    Ok(generator_values(model, lyap, t, x, mu)?[0])
}

/// `∫ L^μ v dμ` through the per-term averages.
pub fn integrated_generator(model: &ModelSpec, lyap: &LyapunovSpec, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
    let vals = generator_values(model, lyap, t, mu.samples(), mu)?;
    Ok(reduce::sum(&vals) / vals.len() as f64)
}

/// `∫ L^μ v dμ` evaluating the double integral pair by pair.
pub fn integrated_generator_reference(
    model: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    mu: &EmpiricalMeasure,
) -> Result<f64> {
    let n = mu.len();
    if n > REFERENCE_CAP {
        return Err(Error::TooManySamples { limit: n, cap: REFERENCE_CAP });
    }
    let fv = model.functional_values(mu.samples());
    let nt = lyap.measure_terms.len();
    let mut total = 0.0;
    let mut buf = vec![0.0; nt];
    for i in 0..n {
        let x = mu.point(i);
        let mut acc = local_part(model, lyap, t, x, &fv, None)?;
        let args = Args::new(t, x, &fv);
        let mut inner = 0.0;
        for j in 0..n {
            measure_integrands(model, lyap, t, mu.point(j), &fv, None, &mut buf)?;
            for (term, w) in lyap.measure_terms.iter().zip(&buf) {
                inner += term.x_factor.eval(&args) * w;
            }
        }
        acc += inner / n as f64;
        total += acc;
    }
    Ok(total / n as f64)
}

/// Envelope data: rates, `E v(0, x_0, μ_0)` and the quadrature step used for
/// non-constant rates.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub m1: Rate,
    pub m2: Rate,
    pub ev0: f64,
    pub quad_step: f64,
}

impl Envelope {
    pub fn new(lyap: &LyapunovSpec, ev0: f64, quad_step: f64) -> Self {
        Envelope { m1: lyap.m1.clone(), m2: lyap.m2.clone(), ev0, quad_step }
    }

    /// `γ(t) = exp(−∫_0^t m1)`.
    pub fn gamma(&self, t: f64) -> f64 {
        (-self.m1.integral(0.0, t, self.quad_step)).exp()
    }

    /// `M(t) = Ev0/γ(t) + ∫_0^t γ(s)/γ(t) m2(s) ds`.
    pub fn m(&self, t: f64) -> f64 {
        if let (Some(a), Some(b)) = (self.m1.constant(), self.m2.constant()) {
            let growth = if a == 0.0 { t } else { (a * t).exp_m1() / a };
            return self.ev0 * (a * t).exp() + b * growth;
        }
        let total = self.m1.integral(0.0, t, self.quad_step);
        let integral = trapezoid(
            |s| (total - self.m1.integral(0.0, s, self.quad_step)).exp() * self.m2.eval(s),
            0.0,
            t,
            self.quad_step,
        );
        self.ev0 * total.exp() + integral
    }

    /// `M⁺(t) = e^{∫_0^t m1⁺} (Ev0 + ∫_0^t γ(s) m2⁺(s) ds)`.
    pub fn m_plus(&self, t: f64) -> f64 {
        let lead = self.m1.positive_integral(0.0, t, self.quad_step).exp();
        let integral = if let (Some(a), Some(b)) = (self.m1.constant(), self.m2.constant()) {
            let decay = if a == 0.0 { t } else { -(-a * t).exp_m1() / a };
            b.max(0.0) * decay
        } else {
            trapezoid(|s| self.gamma(s) * self.m2.eval(s).max(0.0), 0.0, t, self.quad_step)
        };
        lead * (self.ev0 + integral)
    }
}

/// `γ(t)` for the package's rates.
pub fn gamma(lyap: &LyapunovSpec, t: f64, quad_step: f64) -> f64 {
    Envelope::new(lyap, 0.0, quad_step).gamma(t)
}

pub fn envelope_m(lyap: &LyapunovSpec, ev0: f64, t: f64, quad_step: f64) -> f64 {
    Envelope::new(lyap, ev0, quad_step).m(t)
}

pub fn envelope_m_plus(lyap: &LyapunovSpec, ev0: f64, t: f64, quad_step: f64) -> f64 {
    Envelope::new(lyap, ev0, quad_step).m_plus(t)
}

/// Which envelope backs an exit bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitBoundKind {
    /// `P(x_0 ∉ D_k) + M(t)/V_k`, for the cut level.
    CutLevel,
    /// `P(x_0 ∉ D_m) + M⁺(t)/V_m`, for sub-levels under the pointwise condition.
    SubLevel,
}

pub fn exit_probability_bound(
    lyap: &LyapunovSpec,
    envelope: &Envelope,
    t: f64,
    level: u32,
    p0_out: f64,
    kind: ExitBoundKind,
) -> Result<f64> {
    let vm = lyap.level_infimum.value(level);
    if !(vm > 0.0) {
        return Err(Error::InvalidArgument(format!("V_{level} = {vm} must be positive")));
    }
    let env = match kind {
        ExitBoundKind::CutLevel => envelope.m(t),
        ExitBoundKind::SubLevel => envelope.m_plus(t),
    };
    Ok(p0_out + env / vm)
}

/// Margin of one probe measure at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeMargin {
    pub probe: usize,
    pub t: f64,
    /// `∫ L v dμ` (integrated) or `L v` at the worst particle (pointwise).
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// `∫ V dμ ≤ ∫ v dμ` and `v ≥ 0` on the probe.
    pub floor_ok: bool,
    /// `(∫ |b| + |σ|²) / (1 + ∫ v)` on the probe.
    pub growth_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct LyapunovReport {
    pub mode: LyapunovMode,
    pub rows: Vec<ProbeMargin>,
    pub min_margin: f64,
    /// Smallest `c` with `∫ |b| + |σ|² ≤ c (1 + ∫ v)` over the probes.
    pub growth_constant: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl LyapunovReport {
    pub fn to_table(&self) -> crate::report::Table {
        let mut table = crate::report::Table::new(["probe", "t", "lhs", "rhs", "margin"]);
        for r in &self.rows {
            table.push(vec![r.probe as f64, r.t, r.lhs, r.rhs, r.margin]);
        }
        table
    }
}

/// Evaluates the drift inequality on every `(probe, t)` pair. Negative
/// margins beyond `tolerance` are reported, not raised.
pub fn check_lyapunov_condition(
    model: &ModelSpec,
    lyap: &LyapunovSpec,
    times: &[f64],
    probes: &[EmpiricalMeasure],
    tolerance: f64,
) -> Result<LyapunovReport> {
    lyap.validate(model)?;
    let d = model.dim();
    let dn = model.noise_dim();
    let mut rows = Vec::with_capacity(times.len() * probes.len());
    for (pi, mu) in probes.iter().enumerate() {
        let fv = model.functional_values(mu.samples());
        let n = mu.len();
        for &t in times {
            let lv = generator_values(model, lyap, t, mu.samples(), mu)?;
            let v: Vec<f64> = (0..n).map(|i| lyap.eval_v(t, mu.point(i), &fv)).collect();
            let (m1, m2) = (lyap.m1.eval(t), lyap.m2.eval(t));
            let (lhs, rhs) = match lyap.mode {
                LyapunovMode::Integrated => {
                    (reduce::sum(&lv) / n as f64, m1 * reduce::sum(&v) / n as f64 + m2)
                }
                LyapunovMode::Pointwise => {
                    let worst = (0..n)
                        .min_by(|&i, &j| (m1 * v[i] + m2 - lv[i]).total_cmp(&(m1 * v[j] + m2 - lv[j])))
                        .unwrap_or(0);
                    (lv[worst], m1 * v[worst] + m2)
                }
            };
            let floor_mean = reduce::mean_by(n, &|i| lyap.eval_floor(t, mu.point(i), &fv));
            let v_mean = reduce::sum(&v) / n as f64;
            let floor_ok =
                v.iter().all(|&x| x >= 0.0) && floor_mean <= v_mean + 1e-12 * v_mean.abs().max(1.0);
            let growth = reduce::mean_by(n, &|i| {
                let mut b = [0.0; MAX_DIM];
                let mut s = [0.0; MAX_DIM * MAX_DIM];
                model.coefficients_into(t, mu.point(i), &fv, &mut b[..d], &mut s[..d * dn]);
                let nb: f64 = b[..d].iter().map(|z| z * z).sum::<f64>().sqrt();
                let ns: f64 = s[..d * dn].iter().map(|z| z * z).sum();
                nb + ns
            });
            rows.push(ProbeMargin {
                probe: pi,
                t,
                lhs,
                rhs,
                margin: rhs - lhs,
                floor_ok,
                growth_ratio: growth / (1.0 + v_mean),
            });
        }
    }
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let growth_constant = rows.iter().map(|r| r.growth_ratio).fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r.margin >= -tolerance && r.floor_ok);
    Ok(LyapunovReport { mode: lyap.mode, rows, min_margin, growth_constant, tolerance, passed })
}

/// `count` probe clouds of `size` atoms. Probe `j` is uniform on the level
/// box `D_k` with `k = 1 + j mod 5`, so every atom lies in the domain.
pub fn random_probes(model: &ModelSpec, count: usize, size: usize, seed: u64) -> Result<Vec<EmpiricalMeasure>> {
    let d = model.dim();
    let key = derive_seed(seed, PROBE_STREAM);
    (0..count)
        .map(|j| {
            let level = 1 + (j % 5) as u32;
            let bx = model.ladder().level_box(level);
            let mut samples = Vec::with_capacity(size * d);
            for i in 0..size {
                let mut rng = StreamRng::new(key, i as u64, j as u64);
                for iv in &bx {
                    samples.push(iv.lo + (iv.hi - iv.lo) * rng.uniform());
                }
            }
            EmpiricalMeasure::new(samples, d)
        })
        .collect()
}
