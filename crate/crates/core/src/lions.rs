//! Measure derivatives through the empirical lift, and Itô residuals.
//!
//! For a function `u` of an `N`-atom uniform measure, moving atom `i` by `h`
//! and scaling the change by `N` gives the lifted partial derivative, which
//! approximates `∂_μ u(μ̂)(x_i)`. Perturbed values are evaluated in
//! double-double arithmetic so the central difference is limited by its
//! truncation error rather than by cancellation.

use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::expr::Args;
use crate::lyapunov::{cut_coefficients, local_part, measure_averages, LyapunovSpec};
use crate::measure::EmpiricalMeasure;
use crate::model::{DomainLadder, ModelSpec, MAX_DIM};
use crate::reduce;
use crate::report::Table;
use crate::rng::{derive_seed, gaussian_increments};
use crate::simulate::{InitialLaw, SimConfig, Simulation};

const TILDE_STREAM: u64 = 0x0071_17DE;

/// Permutation-symmetric functions of a scalar empirical measure.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureFunctionKind {
    /// `∫ x^p μ(dx)`.
    Moment { p: i32 },
    /// `(∫ x μ(dx))²`.
    MeanSquared,
    /// `∫ x² μ(dx) − (∫ x μ(dx))²`.
    Variance,
    /// `(x̄ − α ∫ y μ(dy))⁴` at a fixed state `x̄`.
    CenteredQuartic { xbar: f64, alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureFunction {
    pub id: String,
    pub kind: MeasureFunctionKind,
}

/// Aggregates of a cloud needed by the analytic derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Prepared<'a> {
    f: &'a MeasureFunction,
    mean: f64,
}

impl Prepared<'_> {
    /// `∂_μ u(μ)(y)` along axis 0.
    pub fn gradient(&self, y: f64) -> f64 {
        match self.f.kind {
            MeasureFunctionKind::Moment { p } => f64::from(p) * y.powi(p - 1),
            MeasureFunctionKind::MeanSquared => 2.0 * self.mean,
            MeasureFunctionKind::Variance => 2.0 * (y - self.mean),
            MeasureFunctionKind::CenteredQuartic { xbar, alpha } => {
                -4.0 * alpha * (xbar - alpha * self.mean).powi(3)
            }
        }
    }

    /// `∂_y ∂_μ u(μ)(y)` along axis 0.
    pub fn hessian(&self, y: f64) -> f64 {
        match self.f.kind {
            MeasureFunctionKind::Moment { p } => f64::from(p * (p - 1)) * y.powi(p - 2),
            MeasureFunctionKind::MeanSquared | MeasureFunctionKind::CenteredQuartic { .. } => 0.0,
            MeasureFunctionKind::Variance => 2.0,
        }
    }
}

impl MeasureFunction {
    pub fn new(id: impl Into<String>, kind: MeasureFunctionKind) -> Self {
        MeasureFunction { id: id.into(), kind }
    }

    /// The built-in registry.
    pub fn registry() -> Vec<MeasureFunction> {
        vec![
            MeasureFunction::new("moment4", MeasureFunctionKind::Moment { p: 4 }),
            MeasureFunction::new("moment3", MeasureFunctionKind::Moment { p: 3 }),
            MeasureFunction::new("mean-squared", MeasureFunctionKind::MeanSquared),
            MeasureFunction::new("variance", MeasureFunctionKind::Variance),
            MeasureFunction::new(
                "centered-quartic",
                MeasureFunctionKind::CenteredQuartic { xbar: 0.7, alpha: -0.5 },
            ),
        ]
    }

    pub fn lookup(id: &str) -> Result<MeasureFunction> {
        Self::registry()
            .into_iter()
            .find(|f| f.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no measure function `{id}`")))
    }

    fn scalar(samples: &[f64], dim: usize) -> impl Iterator<Item = f64> + '_ {
        samples.iter().step_by(dim).copied()
    }

    /// `u(μ̂)` for samples of dimension `dim` (axis 0 is read).
    pub fn eval(&self, samples: &[f64], dim: usize) -> f64 {
        let n = samples.len() / dim;
        let moment = |p: i32| reduce::mean_by(n, &|i| samples[i * dim].powi(p));
        match self.kind {
            MeasureFunctionKind::Moment { p } => moment(p),
            MeasureFunctionKind::MeanSquared => moment(1).powi(2),
            MeasureFunctionKind::Variance => moment(2) - moment(1).powi(2),
            MeasureFunctionKind::CenteredQuartic { xbar, alpha } => (xbar - alpha * moment(1)).powi(4),
        }
    }

    fn eval_dd(&self, samples: &[f64], dim: usize) -> TwoFloat {
        let n = (samples.len() / dim) as f64;
        let moment = |p: i32| {
            let mut acc = TwoFloat::from(0.0);
            for v in Self::scalar(samples, dim) {
                acc += TwoFloat::from(v).powi(p);
            }
            acc / n
        };
        match self.kind {
            MeasureFunctionKind::Moment { p } => moment(p),
            MeasureFunctionKind::MeanSquared => moment(1).powi(2),
            MeasureFunctionKind::Variance => moment(2) - moment(1).powi(2),
            MeasureFunctionKind::CenteredQuartic { xbar, alpha } => {
                (TwoFloat::from(xbar) - moment(1) * alpha).powi(4)
            }
        }
    }

    pub fn prepare(&self, samples: &[f64], dim: usize) -> Prepared<'_> {
        let n = samples.len() / dim;
        Prepared { f: self, mean: reduce::mean_by(n, &|i| samples[i * dim]) }
    }

    /// Bound on `|∂³|/6` of `x_i ↦ N u(μ̂)` over `[x_i − h, x_i + h]`, the
    /// constant of the central-difference truncation error.
    pub fn cubic_scale(&self, samples: &[f64], dim: usize, i: usize, h: f64) -> f64 {
        let n = (samples.len() / dim) as f64;
        let reach = samples[i * dim].abs() + h;
        match self.kind {
            MeasureFunctionKind::Moment { p } if p >= 3 => {
                f64::from(p * (p - 1) * (p - 2)) * reach.powi(p - 3) / 6.0
            }
            MeasureFunctionKind::Moment { .. } | MeasureFunctionKind::MeanSquared | MeasureFunctionKind::Variance => 0.0,
            MeasureFunctionKind::CenteredQuartic { xbar, alpha } => {
                let mean = reduce::mean_by(samples.len() / dim, &|j| samples[j * dim]);
                let u = (xbar - alpha * mean).abs() + alpha.abs() * h / n;
                4.0 * alpha.abs().powi(3) * u / (n * n)
            }
        }
    }
}

/// `ε^{1/3} (1 + |x|)`.
pub fn default_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// `N (u(x_i + h e_a) − u(x_i − h e_a)) / 2h` for every axis `a`. With a
/// domain given, `h` is halved until both perturbed points stay inside it.
pub fn lift_gradient(
    u: &MeasureFunction,
    mu: &EmpiricalMeasure,
    i: usize,
    h: f64,
    domain: Option<&DomainLadder>,
) -> Result<Vec<f64>> {
    if !(h > 0.0) || i >= mu.len() {
        return Err(Error::InvalidArgument(format!("need h > 0 and particle index < {}", mu.len())));
    }
    let d = mu.dim();
    let n = mu.len() as f64;
    let mut work = mu.samples().to_vec();
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let x = work[i * d + a];
        let mut step = h;
        if let Some(dom) = domain {
            for _ in 0..64 {
                let mut lo = mu.point(i).to_vec();
                let mut hi = lo.clone();
                lo[a] = x - step;
                hi[a] = x + step;
                if dom.contains(&lo) && dom.contains(&hi) {
                    break;
                }
                step /= 2.0;
            }
        }
        let (xp, xm) = (x + step, x - step);
        work[i * d + a] = xp;
        let up = u.eval_dd(&work, d);
        work[i * d + a] = xm;
        let um = u.eval_dd(&work, d);
        work[i * d + a] = x;
        // the realised step is exact in double-double
        let width = TwoFloat::new_add(xp, -xm);
        let g = ((up - um) * n / width).hi();
        if !g.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite difference for `{}` at particle {i}", u.id)));
        }
        out.push(g);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub function: String,
    /// Largest `|lift − analytic|` over particles.
    pub max_analytic_deviation: f64,
    /// Largest `|lift_i − lift_j|` over duplicated pairs `x_i = x_j`.
    pub max_duplicate_deviation: f64,
    /// Tolerance applied to the worst particle.
    pub tolerance: f64,
    pub duplicate_pairs: usize,
    pub passed: bool,
}

/// FD error model: `10 h² · cubic scale` plus rounding of the final value.
fn fd_tolerance(u: &MeasureFunction, samples: &[f64], dim: usize, i: usize, h: f64, value: f64) -> f64 {
    10.0 * h * h * u.cubic_scale(samples, dim, i, h) + 8.0 * f64::EPSILON * value.abs()
}

/// Checks that lifted gradients depend on the particle only through its
/// value and agree with the analytic `∂_μ u`. With `h = None` each particle
/// uses [`default_step`].
pub fn check_structure(u: &MeasureFunction, mu: &EmpiricalMeasure, h: Option<f64>) -> Result<StructureReport> {
    let d = mu.dim();
    let prep = u.prepare(mu.samples(), d);
    let n = mu.len();
    let mut grads = Vec::with_capacity(n);
    let mut max_dev: f64 = 0.0;
    let mut worst_tol = f64::INFINITY;
    let mut passed = true;
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let x = mu.point(i)[0];
        let step = h.unwrap_or_else(|| default_step(x));
        steps.push(step);
        let g = lift_gradient(u, mu, i, step, None)?;
        let analytic = prep.gradient(x);
        let dev = (g[0] - analytic).abs();
        let tol = fd_tolerance(u, mu.samples(), d, i, step, analytic);
        if dev > tol {
            passed = false;
        }
        if dev >= max_dev {
            max_dev = dev;
            worst_tol = tol;
        }
        grads.push(g);
    }
    let mut max_dup: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mu.point(i) == mu.point(j) {
                pairs += 1;
                let dev = grads[i].iter().zip(&grads[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                max_dup = max_dup.max(dev);
                let tol = fd_tolerance(u, mu.samples(), d, i, steps[i], grads[i][0]);
                if dev > tol {
                    passed = false;
                }
            }
        }
    }
    Ok(StructureReport {
        function: u.id.clone(),
        max_analytic_deviation: max_dev,
        max_duplicate_deviation: max_dup,
        tolerance: if worst_tol.is_finite() { worst_tol } else { 0.0 },
        duplicate_pairs: pairs,
        passed,
    })
}

/// `(1/N) Σ_i [b·∂_μ u + ½ tr(σσ* ∂_y∂_μ u)](x_i)`, the martingale
/// increment `(1/N) Σ_i ∂_μ u σ Δw_i` and its conditional variance.
fn measure_drift_and_noise(u: &MeasureFunction, sim: &Simulation<'_>) -> Result<(f64, f64, f64)> {
    let model = sim.model();
    let cloud = sim.cloud();
    let d = model.dim();
    let dn = model.noise_dim();
    let n = cloud.len();
    let t = cloud.time();
    let h = sim.config().step_size();
    let k = sim.config().cut_level;
    let fv = model.functional_values(cloud.positions());
    let prep = u.prepare(cloud.positions(), d);
    let step = sim.step_index();
    let seed = sim.noise_seed();
    let per_particle = |i: usize| -> Result<(f64, f64)> {
        let x = cloud.point(i);
        let mut b = [0.0; MAX_DIM];
        let mut s = [0.0; MAX_DIM * MAX_DIM];
        cut_coefficients(model, t, x, &fv, Some(k), &mut b[..d], &mut s[..d * dn])?;
        let g = prep.gradient(x[0]);
        let aa: f64 = (0..dn).map(|j| s[j] * s[j]).sum();
        let drift = b[0] * g + 0.5 * aa * prep.hessian(x[0]);
        let mut dw = [0.0; MAX_DIM];
        gaussian_increments(seed, i as u64, step, h.sqrt(), &mut dw[..dn]);
        let noise: f64 = (0..dn).map(|j| g * s[j] * dw[j]).sum();
        Ok((drift, noise))
    };
    let mut drift = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    let mut qv = Vec::with_capacity(n);
    for i in 0..n {
        let (a, m) = per_particle(i)?;
        drift.push(a);
        noise.push(m);
        let x = cloud.point(i);
        let mut b = [0.0; MAX_DIM];
        let mut s = [0.0; MAX_DIM * MAX_DIM];
        cut_coefficients(model, t, x, &fv, Some(k), &mut b[..d], &mut s[..d * dn])?;
        let g = prep.gradient(x[0]);
        qv.push((0..dn).map(|j| (g * s[j]).powi(2)).sum::<f64>() * h);
    }
    let nf = n as f64;
    Ok((reduce::sum(&drift) / nf, reduce::sum(&noise) / nf, reduce::sum(&qv) / (nf * nf)))
}

/// Residual of the Itô formula for `u(μ̂_t)` along one simulated cloud.
///
/// Columns: `t`, `R`, `band` (three times the martingale's predictable
/// standard deviation), `R_compensated` (`R` minus the realised martingale).
pub fn ito_residual_measure(
    u: &MeasureFunction,
    model: &ModelSpec,
    cfg: &SimConfig,
    init: &InitialLaw,
) -> Result<Table> {
    reduce::with_threads(cfg.threads, || {
        let mut sim = Simulation::new(model, cfg, init)?;
        let d = model.dim();
        let u0 = u.eval(sim.cloud().positions(), d);
        let h = cfg.step_size();
        let (mut drift_sum, mut mart_sum, mut qv_sum) = (0.0, 0.0, 0.0);
        let mut table = Table::new(["t", "R", "band", "R_compensated"]);
        table.push(vec![0.0, 0.0, 0.0, 0.0]);
        while !sim.is_finished() {
            let (a, m, q) = measure_drift_and_noise(u, &sim)?;
            drift_sum += a * h;
            mart_sum += m;
            qv_sum += q;
            sim.euler_step()?;
            if sim.at_checkpoint() {
                let r = u.eval(sim.cloud().positions(), d) - u0 - drift_sum;
                table.push(vec![sim.time(), r, 3.0 * qv_sum.sqrt(), r - mart_sum]);
            }
        }
        Ok(table)
    })
    .map_err(|e: Error| e.context(format!("Itô residual of `{}` under {}", u.id, model.name)))
}

/// Residual of the full Itô formula for `v(t, x_t, μ_t)`.
///
/// `tagged` particles are driven by the empirical law of an independent
/// cloud `μ̃` of `cfg.particles` atoms with its own noise keys. Per tagged
/// particle the residual is `v(t, x_t, μ̃_t) − v(0, x_0, μ̃_0)` minus the
/// accumulated generator and the realised stochastic integrals. Columns:
/// `t`, `R_mean`, `R_std`, `band` (= 3·std/√tagged).
pub fn ito_residual_full(
    lyap: &LyapunovSpec,
    model: &ModelSpec,
    cfg: &SimConfig,
    init: &InitialLaw,
    tagged: usize,
) -> Result<Table> {
    lyap.validate(model)?;
    if tagged == 0 {
        return Err(Error::InvalidArgument("need at least one tagged particle".into()));
    }
    if cfg.substeps != 1 {
        return Err(Error::InvalidArgument("Itô residuals need one integration step per lag step".into()));
    }
    reduce::with_threads(cfg.threads, || {
        let d = model.dim();
        let dn = model.noise_dim();
        let k = cfg.cut_level;
        let tilde_seed = derive_seed(cfg.seed, TILDE_STREAM);
        let mut tilde = Simulation::new(model, cfg, init)?.with_noise_seed(tilde_seed);
        let mut x = init.sample(tagged, d, cfg.seed)?;
        let h = cfg.step_size();
        let sqrt_h = h.sqrt();
        let nt = lyap.measure_terms.len();

        let fv0 = model.functional_values(tilde.cloud().positions());
        let v0: Vec<f64> = (0..tagged).map(|i| lyap.eval_v(0.0, &x[i * d..(i + 1) * d], &fv0)).collect();
        let mut acc = vec![0.0; tagged];
        let mut table = Table::new(["t", "R_mean", "R_std", "band"]);
        table.push(vec![0.0, 0.0, 0.0, 0.0]);

        while !tilde.is_finished() {
            let t = tilde.time();
            let step = tilde.step_index();
            let ys = tilde.cloud().positions().to_vec();
            let fv = model.functional_values(&ys);
            let averages = measure_averages(model, lyap, t, &ys, &fv, Some(k))?;
            // (1/N) Σ_j g_r(ỹ_j)·σ̃_j Δw̃_j per measure term
            let mut measure_noise = vec![0.0; nt];
            if nt > 0 {
                let n = ys.len() / d;
                let mut per: Vec<Vec<f64>> = Vec::with_capacity(n);
                for j in 0..n {
                    let y = &ys[j * d..(j + 1) * d];
                    let mut b = [0.0; MAX_DIM];
                    let mut s = [0.0; MAX_DIM * MAX_DIM];
                    cut_coefficients(model, t, y, &fv, Some(k), &mut b[..d], &mut s[..d * dn])?;
                    let mut dw = [0.0; MAX_DIM];
                    gaussian_increments(tilde_seed, j as u64, step, sqrt_h, &mut dw[..dn]);
                    let args = Args::new(t, &[], &fv).with_y(y);
                    per.push(
                        lyap.measure_terms
                            .iter()
                            .map(|term| {
                                let mut m = 0.0;
                                for a in 0..d {
                                    let g = term.y_grad[a].eval(&args);
                                    for c in 0..dn {
                                        m += g * s[a * dn + c] * dw[c];
                                    }
                                }
                                m
                            })
                            .collect(),
                    );
                }
                for (r, slot) in measure_noise.iter_mut().enumerate() {
                    *slot = reduce::mean_by(n, &|j| per[j][r]);
                }
            }
            for i in 0..tagged {
                let xi = &mut x[i * d..(i + 1) * d];
                let mut gen = local_part(model, lyap, t, xi, &fv, Some(k))?;
                let args = Args::new(t, xi, &fv);
                let mut mart = 0.0;
                for (r, term) in lyap.measure_terms.iter().enumerate() {
                    let f = term.x_factor.eval(&args);
                    gen += f * averages[r];
                    mart += f * measure_noise[r];
                }
                let mut b = [0.0; MAX_DIM];
                let mut s = [0.0; MAX_DIM * MAX_DIM];
                cut_coefficients(model, t, xi, &fv, Some(k), &mut b[..d], &mut s[..d * dn])?;
                let mut dw = [0.0; MAX_DIM];
                gaussian_increments(cfg.seed, i as u64, step, sqrt_h, &mut dw[..dn]);
                for a in 0..d {
                    let dv = lyap.dx_v[a].eval(&args);
                    for c in 0..dn {
                        mart += dv * s[a * dn + c] * dw[c];
                    }
                }
                acc[i] += gen * h + mart;
                for a in 0..d {
                    let mut inc = b[a] * h;
                    for c in 0..dn {
                        inc += s[a * dn + c] * dw[c];
                    }
                    xi[a] += inc;
                }
                if xi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp { particle: i, step: step + 1, t: t + h });
                }
            }
            tilde.euler_step()?;
            if tilde.at_checkpoint() {
                let t1 = tilde.time();
                let fv1 = model.functional_values(tilde.cloud().positions());
                let (mean, std) = reduce::mean_std_by(tagged, &|i| {
                    lyap.eval_v(t1, &x[i * d..(i + 1) * d], &fv1) - v0[i] - acc[i]
                });
                table.push(vec![t1, mean, std, 3.0 * std / (tagged as f64).sqrt()]);
            }
        }
        Ok(table)
    })
    .map_err(|e: Error| e.context(format!("full Itô residual under {}", model.name)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{c, x};
    use crate::model::{builtin_scenario, FunctionalTag, Scenario};
    use proptest::prelude::*;

    fn cloud(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(v.to_vec()).unwrap()
    }

    #[test]
    fn moment4_lift_matches_taylor() {
        let u = MeasureFunction::lookup("moment4").unwrap();
        let mu = cloud(&[0.3, -1.2, 0.8, 2.0, -0.1, 1.7, 0.0, 0.5]);
        for h in [1e-2, 1e-3, default_step(1.0)] {
            for i in 0..mu.len() {
                let xv = mu.point(i)[0];
                let g = lift_gradient(&u, &mu, i, h, None).unwrap()[0];
                // ((x+h)⁴ − (x−h)⁴)/2h = 4x³ + 4x h²
                let exact = 4.0 * xv.powi(3) + 4.0 * xv * h * h;
                assert!((g - exact).abs() <= 1e-13 * exact.abs().max(1.0), "{g} vs {exact}");
                let bound = u.cubic_scale(mu.samples(), 1, i, h) * h * h;
                assert!((g - 4.0 * xv.powi(3)).abs() <= bound * (1.0 + 1e-9) + 1e-15);
            }
        }
    }

    #[test]
    fn constant_function_has_zero_lift() {
        let u = MeasureFunction::new("zero-moment", MeasureFunctionKind::Moment { p: 0 });
        let mu = cloud(&[1.0, 2.0, 3.0]);
        assert_eq!(lift_gradient(&u, &mu, 1, 1e-3, None).unwrap(), vec![0.0]);
    }

    #[test]
    fn mean_squared_gradient_is_index_free() {
        let u = MeasureFunction::lookup("mean-squared").unwrap();
        let mu = cloud(&[1.0, 4.0, -2.0, 0.5]);
        let want = 2.0 * mu.mean(0);
        for i in 0..4 {
            let g = lift_gradient(&u, &mu, i, 1e-4, None).unwrap()[0];
            assert!((g - want).abs() < 1e-14, "{g}");
        }
    }

    #[test]
    fn centered_quartic_matches_example_derivative() {
        let u = MeasureFunction::lookup("centered-quartic").unwrap();
        let mu = cloud(&[0.3, -1.2, 0.8, 2.0, 2.0]);
        let rep = check_structure(&u, &mu, Some(f64::EPSILON.cbrt())).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.duplicate_pairs, 1);
        assert_eq!(rep.max_duplicate_deviation, 0.0);
    }

    #[test]
    fn registry_passes_structure_check() {
        let mu = cloud(&[0.25, -1.5, 0.25, 1.125, 3.0, -0.75, 3.0, 0.0]);
        for u in MeasureFunction::registry() {
            let rep = check_structure(&u, &mu, None).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert_eq!(rep.duplicate_pairs, 2);
        }
    }

    #[test]
    fn lift_shrinks_near_the_boundary() {
        let u = MeasureFunction::lookup("moment4").unwrap();
        let mu = cloud(&[1e-9, 0.5]);
        let dom = DomainLadder::positive_orthant(1);
        let g = lift_gradient(&u, &mu, 0, 1e-3, Some(&dom)).unwrap()[0];
        assert!(g.abs() < 1e-20);
    }

    #[test]
    fn zero_model_residual_vanishes() {
        let model = ModelSpec::zero(1);
        let cfg = SimConfig { particles: 20, horizon: 0.5, steps_per_unit: 20, checkpoint_interval: 0.1, ..SimConfig::default() };
        let init = InitialLaw::UniformBox { lo: vec![-1.0], hi: vec![1.0] };
        let u = MeasureFunction::lookup("moment4").unwrap();
        let table = ito_residual_measure(&u, &model, &cfg, &init).unwrap();
        assert!(table.column("R").unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn deterministic_contraction_mean_residual() {
        let model = ModelSpec::new("contract", vec![-x(0)], vec![c(0.0)], 1, vec![], DomainLadder::full_space(1)).unwrap();
        let cfg = SimConfig { particles: 16, horizon: 1.0, steps_per_unit: 40, checkpoint_interval: 0.25, ..SimConfig::default() };
        let init = InitialLaw::UniformBox { lo: vec![-1.0], hi: vec![2.0] };
        let u = MeasureFunction::new("mean", MeasureFunctionKind::Moment { p: 1 });
        let table = ito_residual_measure(&u, &model, &cfg, &init).unwrap();
        for r in table.column("R").unwrap() {
            assert!(r.abs() < 1e-14, "{r}");
        }
    }

    #[test]
    fn logistic_moment_recursion() {
        // example 1 without noise from δ_1: x ← x(1 − m h), m = x⁴
        let (model, _) = builtin_scenario("example1-quartic").unwrap();
        let quiet = ModelSpec::new(
            "quiet",
            model.drift_exprs().to_vec(),
            vec![c(0.0)],
            1,
            vec![FunctionalTag::RawMoment { p: 4, axis: 0 }],
            DomainLadder::full_space(1),
        )
        .unwrap();
        let n = 100u64;
        let cfg = SimConfig { particles: 4, horizon: 1.0, steps_per_unit: n, checkpoint_interval: 1.0, ..SimConfig::default() };
        let u = MeasureFunction::lookup("moment4").unwrap();
        let table = ito_residual_measure(&u, &quiet, &cfg, &InitialLaw::Point(vec![1.0])).unwrap();
        let h = 1.0 / n as f64;
        let (mut m, mut drift) = (1.0f64, 0.0);
        for _ in 0..n {
            drift += -4.0 * m * m * h;
            m *= (1.0 - m * h).powi(4);
        }
        let want = m - 1.0 - drift;
        let got = *table.column("R").unwrap().last().unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn full_residual_trivial_cases() {
        // v = x under dx = 0·dt + 0·dw gives R ≡ 0
        let (_, mut lyap) = builtin_scenario("linear-meanfield").unwrap();
        lyap.v = x(0);
        lyap.dx_v = vec![c(1.0)];
        lyap.dxx_v = vec![c(0.0)];
        let cfg = SimConfig { particles: 30, horizon: 0.2, steps_per_unit: 50, checkpoint_interval: 0.1, ..SimConfig::default() };
        let init = InitialLaw::UniformBox { lo: vec![0.0], hi: vec![1.0] };
        let model1 = ModelSpec::new("still", vec![c(0.0)], vec![c(0.0)], 1, vec![FunctionalTag::Mean { axis: 0 }], DomainLadder::full_space(1)).unwrap();
        let t = ito_residual_full(&lyap, &model1, &cfg, &init, 30).unwrap();
        assert!(t.column("R_mean").unwrap().iter().all(|&r| r == 0.0));
        // linear v under pure noise: the realised integral is subtracted exactly
        let noisy = ModelSpec::new("noise", vec![c(0.0)], vec![c(1.0)], 1, vec![FunctionalTag::Mean { axis: 0 }], DomainLadder::full_space(1)).unwrap();
        let t = ito_residual_full(&lyap, &noisy, &cfg, &init, 30).unwrap();
        assert!(t.column("R_mean").unwrap().iter().all(|&r| r.abs() < 1e-14));
    }

    #[test]
    fn full_residual_example2_is_small() {
        let (model, lyap) = Scenario::Example2Nonlinear { alpha: -0.5, sigma: 0.5 }.build().unwrap();
        let cfg = SimConfig { particles: 500, horizon: 0.2, steps_per_unit: 200, checkpoint_interval: 0.1, ..SimConfig::default() };
        let init = InitialLaw::UniformBox { lo: vec![-0.5], hi: vec![1.0] };
        let t = ito_residual_full(&lyap, &model, &cfg, &init, 500).unwrap();
        for (r, s) in t.column("R_mean").unwrap().iter().zip(t.column("R_std").unwrap()) {
            assert!(r.abs() < 0.05 && s < 0.2, "{r} {s}");
        }
    }

    proptest! {
        #[test]
        fn lift_is_permutation_equivariant(
            xs in prop::collection::vec(-2.0f64..2.0, 2..10),
            rot in 0usize..10,
            which in 0usize..5,
        ) {
            let u = &MeasureFunction::registry()[which];
            let n = xs.len();
            let rot = rot % n;
            let mut ys = xs.clone();
            ys.rotate_left(rot);
            let a = cloud(&xs);
            let b = cloud(&ys);
            for i in 0..n {
                let j = (i + n - rot) % n;
                let ga = lift_gradient(u, &a, i, 1e-4, None).unwrap()[0];
                let gb = lift_gradient(u, &b, j, 1e-4, None).unwrap()[0];
                prop_assert!((ga - gb).abs() <= 1e-12 * ga.abs().max(1.0));
            }
        }

        #[test]
        fn polynomial_lift_within_taylor_bound(
            xs in prop::collection::vec(-3.0f64..3.0, 1..12),
            p in 1i32..7,
            h in 1e-5f64..1e-2,
        ) {
            let u = MeasureFunction::new("m", MeasureFunctionKind::Moment { p });
            let mu = cloud(&xs);
            for i in 0..xs.len() {
                let xv = xs[i];
                let g = lift_gradient(&u, &mu, i, h, None).unwrap()[0];
                let exact = f64::from(p) * xv.powi(p - 1);
                let bound = u.cubic_scale(&xs, 1, i, h) * h * h + 8.0 * f64::EPSILON * exact.abs().max(1e-300);
                prop_assert!((g - exact).abs() <= bound * (1.0 + 1e-6) + 1e-14 * f64::from(p) * 3f64.powi(p),
                    "p={} x={} g={} exact={}", p, xv, g, exact);
            }
        }
    }
}
