//! McKean–Vlasov model declarations.
//!
//! A [`ModelSpec`] holds drift and diffusion expressions over time, state and a
//! declared list of measure functionals, together with a [`DomainLadder`] of
//! nested bounded boxes `D_k` exhausting the state domain `D`. Coefficients are
//! extended by zero outside `D`; the cut coefficients at level `k` vanish
//! outside `D_k`.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{c, f, x, Args, Expr, Interval, IntervalArgs};
use crate::lyapunov::{LevelInfimum, LyapunovMode, LyapunovSpec, MeasureTerm, Rate};
use crate::measure;
use crate::reduce;

/// Largest supported state or noise dimension.
pub const MAX_DIM: usize = 8;

/// One axis of the state domain: the open interval `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisDomain {
    pub lo: f64,
    pub hi: f64,
}

impl AxisDomain {
    pub const REAL_LINE: AxisDomain = AxisDomain { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
    pub const POSITIVE: AxisDomain = AxisDomain { lo: 0.0, hi: f64::INFINITY };

    /// Closed interval `D_k` restricted to this axis.
    pub fn level(&self, k: u32) -> (f64, f64) {
        let k = f64::from(k.max(1));
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => (-k, k),
            (true, false) => (self.lo + 1.0 / k, self.lo + k),
            (false, true) => (self.hi - k, self.hi - 1.0 / k),
            (true, true) => {
                let inset = (self.hi - self.lo) / (2.0 * (k + 1.0));
                (self.lo + inset, self.hi - inset)
            }
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionKind {
    FullSpace,
    PositiveOrthant,
    OpenBox,
}

/// Axis-aligned domain `D` with its ladder `D_1 ⊂ D_2 ⊂ … ⊂ D`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainLadder {
    axes: Vec<AxisDomain>,
}

impl DomainLadder {
    pub fn new(axes: Vec<AxisDomain>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "domain dimension must be in 1..={MAX_DIM}, got {}",
                axes.len()
            )));
        }
        for a in &axes {
            if !(a.lo < a.hi) || a.lo == f64::INFINITY || a.hi == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!("empty axis domain ({}, {})", a.lo, a.hi)));
            }
        }
        Ok(DomainLadder { axes })
    }

    pub fn full_space(dim: usize) -> Self {
        DomainLadder { axes: vec![AxisDomain::REAL_LINE; dim] }
    }

    pub fn positive_orthant(dim: usize) -> Self {
        DomainLadder { axes: vec![AxisDomain::POSITIVE; dim] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisDomain] {
        &self.axes
    }

    pub fn kind(&self) -> RegionKind {
        if self.axes.iter().all(|a| *a == AxisDomain::REAL_LINE) {
            RegionKind::FullSpace
        } else if self.axes.iter().all(|a| *a == AxisDomain::POSITIVE) {
            RegionKind::PositiveOrthant
        } else {
            RegionKind::OpenBox
        }
    }

    /// `x ∈ D`.
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, v)| a.contains(*v))
    }

    /// `x ∈ D_k`.
    #[inline]
    pub fn level_contains(&self, k: u32, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, v)| {
            let (lo, hi) = a.level(k);
            lo <= *v && *v <= hi
        })
    }

    pub fn level_box(&self, k: u32) -> Vec<Interval> {
        self.axes
            .iter()
            .map(|a| {
                let (lo, hi) = a.level(k);
                Interval::new(lo, hi)
            })
            .collect()
    }

    /// Checks `D_k ⊂ D_{k+1}` and `closure(D_k) ⊂ D` for `k` in `1..=k_max`.
    pub fn check_nesting(&self, k_max: u32) -> Result<()> {
        for k in 1..=k_max {
            for (i, a) in self.axes.iter().enumerate() {
                let (lo, hi) = a.level(k);
                let (lo2, hi2) = a.level(k + 1);
                if !(lo2 <= lo && hi <= hi2) {
                    return Err(Error::InvalidArgument(format!("D_{k} ⊄ D_{} on axis {i}", k + 1)));
                }
                if !(a.contains(lo) && a.contains(hi)) {
                    return Err(Error::InvalidArgument(format!("closure of D_{k} leaves D on axis {i}")));
                }
            }
        }
        Ok(())
    }
}

/// A functional of the empirical law on which coefficients may depend.
#[derive(Clone, Debug, PartialEq)]
pub enum FunctionalTag {
    /// `∫ y_axis^p μ(dy)`.
    RawMoment { p: i32, axis: usize },
    /// `∫ y_axis μ(dy)`.
    Mean { axis: usize },
    /// State-free part `α ∫ y μ(dy)` of `∫ (x − α y) μ(dy) = x − α·mean`.
    LinearCombination { alpha: f64 },
    /// `F⁻¹_μ(level)`.
    Quantile { level: f64 },
    /// `ES_μ(level)`.
    ExpectedShortfall { level: f64 },
    /// `∫ clamp(y, lo, hi) μ(dy)`.
    ClampedMean { lo: f64, hi: f64 },
}

impl FunctionalTag {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            FunctionalTag::RawMoment { p, axis } => {
                if p < 1 {
                    return bad(format!("moment order must be >= 1, got {p}"));
                }
                if axis >= dim {
                    return bad(format!("moment axis {axis} out of range"));
                }
            }
            FunctionalTag::Mean { axis } if axis >= dim => {
                return bad(format!("mean axis {axis} out of range"));
            }
            FunctionalTag::Quantile { level } | FunctionalTag::ExpectedShortfall { level } => {
                if !(level > 0.0 && level <= 1.0) {
                    return bad(format!("level must lie in (0, 1], got {level}"));
                }
            }
            FunctionalTag::ClampedMean { lo, hi } if !(lo <= hi) => {
                return bad(format!("clamp bounds reversed: {lo} > {hi}"));
            }
            _ => {}
        }
        Ok(())
    }

    fn needs_sort(&self) -> bool {
        matches!(self, FunctionalTag::Quantile { .. } | FunctionalTag::ExpectedShortfall { .. })
    }

    /// Column name used in reports.
    pub fn name(&self) -> String {
        match self {
            FunctionalTag::RawMoment { p, axis: 0 } => format!("m{p}"),
            FunctionalTag::RawMoment { p, axis } => format!("m{p}_x{axis}"),
            FunctionalTag::Mean { axis: 0 } => "mean".into(),
            FunctionalTag::Mean { axis } => format!("mean_x{axis}"),
            FunctionalTag::LinearCombination { alpha } => format!("alpha_mean_{alpha}"),
            FunctionalTag::Quantile { level } => format!("q_{level}"),
            FunctionalTag::ExpectedShortfall { level } => format!("es_{level}"),
            FunctionalTag::ClampedMean { .. } => "clamped_mean".into(),
        }
    }
}

impl fmt::Display for FunctionalTag {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "{}", self.name())
    }
}

/// Evaluates every tag on row-major `N × d` samples. Quantile-type tags read
/// axis 0 and share one sort.
pub fn functional_values(tags: &[FunctionalTag], samples: &[f64], dim: usize) -> Vec<f64> {
    let n = samples.len() / dim;
    let sorted = if tags.iter().any(FunctionalTag::needs_sort) {
        let mut v: Vec<f64> = (0..n).map(|i| samples[i * dim]).collect();
        v.sort_by(f64::total_cmp);
        v
    } else {
        Vec::new()
    };
    tags.iter()
        .map(|tag| match *tag {
            FunctionalTag::RawMoment { p, axis } => measure::raw_moment(samples, dim, axis, p),
            FunctionalTag::Mean { axis } => measure::raw_moment(samples, dim, axis, 1),
            FunctionalTag::LinearCombination { alpha } => {
                alpha * measure::raw_moment(samples, dim, 0, 1)
            }
            FunctionalTag::Quantile { level } => measure::quantile_sorted(&sorted, level),
            FunctionalTag::ExpectedShortfall { level } => {
                measure::expected_shortfall_sorted(&sorted, level)
            }
            FunctionalTag::ClampedMean { lo, hi } => {
                reduce::mean_by(n, &|i| samples[i * dim].clamp(lo, hi))
            }
        })
        .collect()
}

/// Coefficients `b`, `σ` of `dx = b(t, x, μ) dt + σ(t, x, μ) dw`.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    dim: usize,
    noise_dim: usize,
    drift: Vec<Expr>,
    /// Row-major `d × d'`.
    diffusion: Vec<Expr>,
    functionals: Vec<FunctionalTag>,
    ladder: DomainLadder,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        drift: Vec<Expr>,
        diffusion: Vec<Expr>,
        noise_dim: usize,
        functionals: Vec<FunctionalTag>,
        ladder: DomainLadder,
    ) -> Result<Self> {
        let dim = ladder.dim();
        let name = name.into();
        let bad = |msg: String| Err(Error::InvalidArgument(format!("model {name}: {msg}")));
        if drift.len() != dim {
            return bad(format!("drift has {} components, domain has {dim}", drift.len()));
        }
        if noise_dim == 0 || noise_dim > MAX_DIM {
            return bad(format!("noise dimension must be in 1..={MAX_DIM}"));
        }
        if diffusion.len() != dim * noise_dim {
            return bad(format!("diffusion needs {} entries, got {}", dim * noise_dim, diffusion.len()));
        }
        for tag in &functionals {
            tag.validate(dim)?;
        }
        for e in drift.iter().chain(&diffusion) {
            if let Some(j) = e.max_functional() {
                if j >= functionals.len() {
                    return bad(format!("coefficient references undeclared functional F{j}"));
                }
            }
            if let Some(a) = e.max_state_axis() {
                if a >= dim {
                    return bad(format!("coefficient references axis x{a}"));
                }
            }
            if e.max_y_axis().is_some() {
                return bad("coefficients cannot use the measure-derivative variable y".into());
            }
        }
        Ok(ModelSpec { name, dim, noise_dim, drift, diffusion, functionals, ladder })
    }

    /// Model with identically zero coefficients on `ℝ^d`.
    pub fn zero(dim: usize) -> Self {
        ModelSpec {
            name: "zero".into(),
            dim,
            noise_dim: dim,
            drift: vec![Expr::zero(); dim],
            diffusion: vec![Expr::zero(); dim * dim],
            functionals: Vec::new(),
            ladder: DomainLadder::full_space(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn functionals(&self) -> &[FunctionalTag] {
        &self.functionals
    }

    pub fn ladder(&self) -> &DomainLadder {
        &self.ladder
    }

    pub fn drift_exprs(&self) -> &[Expr] {
        &self.drift
    }

    pub fn diffusion_exprs(&self) -> &[Expr] {
        &self.diffusion
    }

    pub fn functional_values(&self, samples: &[f64]) -> Vec<f64> {
        functional_values(&self.functionals, samples, self.dim)
    }

    /// Writes `b` and `σ` (uncut but zero outside `D`) into the buffers and
    /// reports whether `x ∈ D`.
    #[inline]
    pub fn coefficients_into(
        &self,
        t: f64,
        x: &[f64],
        fv: &[f64],
        drift: &mut [f64],
        diffusion: &mut [f64],
    ) -> bool {
        if !self.ladder.contains(x) {
            drift.iter_mut().for_each(|v| *v = 0.0);
            diffusion.iter_mut().for_each(|v| *v = 0.0);
            return false;
        }
        let args = Args::new(t, x, fv);
        for (out, e) in drift.iter_mut().zip(&self.drift) {
            *out = e.eval(&args);
        }
        for (out, e) in diffusion.iter_mut().zip(&self.diffusion) {
            *out = e.eval(&args);
        }
        true
    }

    /// `(b^k, σ^k)` at `(t, x, fv)`; with `cut_level = None` only the
    /// extension by zero outside `D` applies.
    pub fn evaluate_coefficients(
        &self,
        t: f64,
        x: &[f64],
        fv: &[f64],
        cut_level: Option<u32>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!("point has dimension {}", x.len())));
        }
        if fv.len() != self.functionals.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} functional values, got {}",
                self.functionals.len(),
                fv.len()
            )));
        }
        let mut drift = vec![0.0; self.dim];
        let mut diffusion = vec![0.0; self.dim * self.noise_dim];
        if let Some(k) = cut_level {
            if !self.ladder.level_contains(k, x) {
                return Ok((drift, diffusion));
            }
        }
        if self.coefficients_into(t, x, fv, &mut drift, &mut diffusion) {
            if drift.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCoefficient { what: "drift", t, x: x.to_vec() });
            }
            if diffusion.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCoefficient { what: "diffusion", t, x: x.to_vec() });
            }
        }
        Ok((drift, diffusion))
    }

    /// Interval-arithmetic bounds `(sup |b|, sup |σ|)` over `x ∈ D_k` with the
    /// functional values held fixed.
    pub fn local_bound(&self, k: u32, t: f64, fv: &[f64]) -> (f64, f64) {
        let bx = self.ladder.level_box(k);
        let args = IntervalArgs { t, x: &bx, y: &[], fv };
        let sup = |es: &[Expr]| es.iter().map(|e| e.enclose(&args).magnitude()).fold(0.0, f64::max);
        (sup(&self.drift), sup(&self.diffusion))
    }
}

/// Built-in scenarios and their parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    /// `dx = −x ∫y⁴μ(dy) dt + x/√2 dw`.
    Example1Quartic,
    /// `dx = −(∫(x−αy)μ(dy))³ dt + (∫(x−αy)μ(dy))² σ dw`.
    Example2Nonlinear { alpha: f64, sigma: f64 },
    /// Transformed CIR with expected-shortfall feedback on `(0, ∞)`.
    Example3Cir { kappa: f64, theta: f64, sigma: f64, alpha: f64 },
    /// `dx = (a x + b·mean) dt + σ dw`.
    LinearMeanField { a: f64, b: f64, sigma: f64 },
    /// `dx = (−x + E clamp(x, −c, c)) dt + σ dw`.
    Scheutzow { sigma: f64, clamp: f64 },
}

/// Contraction rates `(g, h)` for `v̄(z) = z²` certified for a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionCertificate {
    pub g: f64,
    pub h: f64,
    pub mode: LyapunovMode,
}

impl Scenario {
    pub const NAMES: [&'static str; 5] =
        ["example1-quartic", "example2-nonlinear", "example3-cir", "linear-meanfield", "scheutzow"];

    pub fn id(&self) -> &'static str {
        match self {
            Scenario::Example1Quartic => "example1-quartic",
            Scenario::Example2Nonlinear { .. } => "example2-nonlinear",
            Scenario::Example3Cir { .. } => "example3-cir",
            Scenario::LinearMeanField { .. } => "linear-meanfield",
            Scenario::Scheutzow { .. } => "scheutzow",
        }
    }

    /// Scenario with default parameters.
    pub fn default_for(name: &str) -> Result<Scenario> {
        Ok(match name {
            "example1-quartic" => Scenario::Example1Quartic,
            "example2-nonlinear" => Scenario::Example2Nonlinear { alpha: -0.5, sigma: 0.5 },
            "example3-cir" => Scenario::Example3Cir { kappa: 1.0, theta: 1.5, sigma: 1.0, alpha: 0.05 },
            "linear-meanfield" => Scenario::LinearMeanField { a: -1.0, b: 0.0, sigma: 1.0 },
            "scheutzow" => Scenario::Scheutzow { sigma: 0.5, clamp: 1.0 },
            other => return Err(Error::UnknownScenario(other.to_string())),
        })
    }

    /// Parameter names and values, in declaration order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Scenario::Example1Quartic => vec![],
            Scenario::Example2Nonlinear { alpha, sigma } => vec![("alpha", alpha), ("sigma", sigma)],
            Scenario::Example3Cir { kappa, theta, sigma, alpha } => {
                vec![("kappa", kappa), ("theta", theta), ("sigma", sigma), ("alpha", alpha)]
            }
            Scenario::LinearMeanField { a, b, sigma } => vec![("a", a), ("b", b), ("sigma", sigma)],
            Scenario::Scheutzow { sigma, clamp } => vec![("sigma", sigma), ("clamp", clamp)],
        }
    }

    /// Replaces the named parameter.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match (self, key) {
            (Scenario::Example2Nonlinear { alpha, .. }, "alpha") => alpha,
            (Scenario::Example2Nonlinear { sigma, .. }, "sigma") => sigma,
            (Scenario::Example3Cir { kappa, .. }, "kappa") => kappa,
            (Scenario::Example3Cir { theta, .. }, "theta") => theta,
            (Scenario::Example3Cir { sigma, .. }, "sigma") => sigma,
            (Scenario::Example3Cir { alpha, .. }, "alpha") => alpha,
            (Scenario::LinearMeanField { a, .. }, "a") => a,
            (Scenario::LinearMeanField { b, .. }, "b") => b,
            (Scenario::LinearMeanField { sigma, .. }, "sigma") => sigma,
            (Scenario::Scheutzow { sigma, .. }, "sigma") => sigma,
            (Scenario::Scheutzow { clamp, .. }, "clamp") => clamp,
            (s, k) => {
                return Err(Error::InvalidParameters {
                    scenario: s.id().to_string(),
                    reason: format!("unknown parameter `{k}`"),
                })
            }
        };
        *slot = value;
        Ok(())
    }

    /// `m = −(6σ² − 4 + 4α)` for example 2.
    pub fn example2_rate(alpha: f64, sigma: f64) -> f64 {
        -(6.0 * sigma * sigma - 4.0 + 4.0 * alpha)
    }

    pub fn certificate(&self) -> Option<ContractionCertificate> {
        match *self {
            Scenario::LinearMeanField { a, b, .. } => Some(ContractionCertificate {
                g: 2.0 * a + b.abs(),
                h: b.abs(),
                mode: LyapunovMode::Pointwise,
            }),
            Scenario::Scheutzow { .. } => {
                Some(ContractionCertificate { g: -1.0, h: 1.0, mode: LyapunovMode::Pointwise })
            }
            _ => None,
        }
    }

    /// Builds the model and its Lyapunov package.
    pub fn build(&self) -> Result<(ModelSpec, LyapunovSpec)> {
        let invalid = |reason: String| {
            Err(Error::InvalidParameters { scenario: self.id().to_string(), reason })
        };
        for (k, v) in self.params() {
            if !v.is_finite() {
                return invalid(format!("{k} = {v} is not finite"));
            }
        }
        match *self {
            Scenario::Example1Quartic => {
                let model = ModelSpec::new(
                    self.id(),
                    vec![-(x(0) * f(0))],
                    vec![std::f64::consts::FRAC_1_SQRT_2 * x(0)],
                    1,
                    vec![FunctionalTag::RawMoment { p: 4, axis: 0 }],
                    DomainLadder::full_space(1),
                )?;
                let lyap = LyapunovSpec {
                    v: x(0).powi(4),
                    dt_v: Expr::zero(),
                    dx_v: vec![4.0 * x(0).powi(3)],
                    dxx_v: vec![12.0 * x(0).powi(2)],
                    measure_terms: Vec::new(),
                    floor: x(0).powi(4),
                    m1: Rate::Constant(-1.0),
                    m2: Rate::Constant(4.0),
                    level_infimum: LevelInfimum::Power { coeff: 1.0, p: 4 },
                    mode: LyapunovMode::Integrated,
                };
                Ok((model, lyap))
            }
            Scenario::Example2Nonlinear { alpha, sigma } => {
                let m = Self::example2_rate(alpha, sigma);
                if m <= 0.0 {
                    return invalid(format!("m = −(6σ² − 4 + 4α) = {m} must be > 0"));
                }
                // u = x − α·mean, carried by the LinearCombination functional
                let u = || x(0) - f(0);
                let model = ModelSpec::new(
                    self.id(),
                    vec![-u().powi(3)],
                    vec![sigma * u().powi(2)],
                    1,
                    vec![FunctionalTag::LinearCombination { alpha }],
                    DomainLadder::full_space(1),
                )?;
                // ‖x‖₄ ≤ (1 + |α|/(1−α)) ‖x − α·mean‖₄ gives the floor V = c x⁴
                let floor_coeff = (1.0 + alpha.abs() / (1.0 - alpha)).powi(-4);
                let lyap = LyapunovSpec {
                    v: u().powi(4),
                    dt_v: Expr::zero(),
                    dx_v: vec![4.0 * u().powi(3)],
                    dxx_v: vec![12.0 * u().powi(2)],
                    measure_terms: vec![MeasureTerm {
                        x_factor: (-4.0 * alpha) * u().powi(3),
                        y_grad: vec![c(1.0)],
                        y_hess: vec![Expr::zero()],
                    }],
                    floor: floor_coeff * x(0).powi(4),
                    m1: Rate::Constant(-m),
                    m2: Rate::Constant(m),
                    level_infimum: LevelInfimum::Power { coeff: floor_coeff, p: 4 },
                    mode: LyapunovMode::Integrated,
                };
                Ok((model, lyap))
            }
            Scenario::Example3Cir { kappa, theta, sigma, alpha } => {
                if !(kappa > 0.0) || sigma < 0.0 {
                    return invalid(format!("need κ > 0 and σ ≥ 0, got κ = {kappa}, σ = {sigma}"));
                }
                if kappa * theta < sigma * sigma {
                    return invalid(format!("κθ = {} < σ² = {}", kappa * theta, sigma * sigma));
                }
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return invalid(format!("ES level α = {alpha} must lie in (0, 1]"));
                }
                let level = f(0).max_const(theta) - c(sigma * sigma / (4.0 * kappa));
                let drift = (kappa / 2.0) * (level * x(0).recip() - x(0));
                let model = ModelSpec::new(
                    self.id(),
                    vec![drift],
                    vec![c(sigma / 2.0)],
                    1,
                    vec![FunctionalTag::ExpectedShortfall { level: alpha }],
                    DomainLadder::positive_orthant(1),
                )?;
                let v = x(0).powi(2) + x(0).powi(-2);
                let lyap = LyapunovSpec {
                    v: v.clone(),
                    dt_v: Expr::zero(),
                    dx_v: vec![2.0 * x(0) - 2.0 * x(0).powi(-3)],
                    dxx_v: vec![c(2.0) + 6.0 * x(0).powi(-4)],
                    measure_terms: Vec::new(),
                    floor: v,
                    m1: Rate::Constant(kappa.max(0.5)),
                    m2: Rate::Constant(0.5 * kappa * kappa + kappa * theta),
                    level_infimum: LevelInfimum::SquarePlusInverseSquare,
                    mode: LyapunovMode::Integrated,
                };
                Ok((model, lyap))
            }
            Scenario::LinearMeanField { a, b, sigma } => {
                let model = ModelSpec::new(
                    self.id(),
                    vec![a * x(0) + b * f(0)],
                    vec![c(sigma)],
                    1,
                    vec![FunctionalTag::Mean { axis: 0 }],
                    DomainLadder::full_space(1),
                )?;
                Ok((model, quadratic_package(2.0 * a + 2.0 * b.abs(), sigma * sigma, LyapunovMode::Integrated)))
            }
            Scenario::Scheutzow { sigma, clamp } => {
                if !(clamp >= 0.0) {
                    return invalid(format!("clamp = {clamp} must be >= 0"));
                }
                let model = ModelSpec::new(
                    self.id(),
                    vec![-x(0) + f(0)],
                    vec![c(sigma)],
                    1,
                    vec![FunctionalTag::ClampedMean { lo: -clamp, hi: clamp }],
                    DomainLadder::full_space(1),
                )?;
                Ok((model, quadratic_package(-1.0, clamp * clamp + sigma * sigma, LyapunovMode::Pointwise)))
            }
        }
    }
}

/// `v = x²` on the real line with the given rates.
fn quadratic_package(m1: f64, m2: f64, mode: LyapunovMode) -> LyapunovSpec {
    LyapunovSpec {
        v: x(0).powi(2),
        dt_v: Expr::zero(),
        dx_v: vec![2.0 * x(0)],
        dxx_v: vec![c(2.0)],
        measure_terms: Vec::new(),
        floor: x(0).powi(2),
        m1: Rate::Constant(m1),
        m2: Rate::Constant(m2),
        level_infimum: LevelInfimum::Power { coeff: 1.0, p: 2 },
        mode,
    }
}

/// Returns the named built-in with default parameters.
pub fn builtin_scenario(name: &str) -> Result<(ModelSpec, LyapunovSpec)> {
    Scenario::default_for(name)?.build()
}
