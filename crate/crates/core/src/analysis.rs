//! Composite experiments: coupled-path stability, replica agreement in law
//! and time-averaged occupation measures.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lyapunov::{LyapunovMode, LyapunovSpec, Rate};
use crate::measure::{w1_sorted, EmpiricalMeasure, Kernel};
use crate::model::ModelSpec;
use crate::reduce;
use crate::report::{Summary, Table};
use crate::simulate::{coupled_simulate, InitialLaw, SimConfig, Simulation};

/// Pooled-sample cap for one occupation measure.
pub const OCCUPATION_CAP: usize = 1_000_000;

/// Closed-form solution of `ṁ = 3m − 4m²` with `m(0) = m0 ≥ 0`: the fourth
/// moment of the first built-in example.
pub fn moment_ode_oracle(m0: f64, t: f64) -> f64 {
    3.0 * m0 / (4.0 * m0 + (3.0 - 4.0 * m0) * (-3.0 * t).exp())
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// Paired mean of `v̄(x¹ − x²)` and its standard deviation.
    pub measured: Vec<f64>,
    pub measured_std: Vec<f64>,
    pub bound: Vec<f64>,
    /// `3 std / √N` per checkpoint.
    pub band: Vec<f64>,
    pub g: Rate,
    pub h: Rate,
    pub mode: LyapunovMode,
    pub tolerance: f64,
    /// Smallest `bound·(1 + tolerance) + band − measured`.
    pub min_margin: f64,
    pub passed: bool,
}

impl StabilityReport {
    pub fn exponent(&self) -> &'static str {
        match self.mode {
            LyapunovMode::Pointwise => "g+h+2|h|",
            LyapunovMode::Integrated => "h",
        }
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "measured", "measured_std", "bound", "band", "margin"]);
        for i in 0..self.times.len() {
            let margin = self.bound[i] * (1.0 + self.tolerance) + self.band[i] - self.measured[i];
            t.push(vec![self.times[i], self.measured[i], self.measured_std[i], self.bound[i], self.band[i], margin]);
        }
        t
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::new();
        s.set("experiment", "stability");
        s.set("mode", self.mode.name());
        s.set("exponent", self.exponent());
        s.set("tolerance", self.tolerance);
        s.set("min_margin", self.min_margin);
        s.set("passed", self.passed);
        s
    }
}

/// Runs two clouds under shared noise and compares `E v̄(x¹_t − x²_t)` with
/// `exp(∫(g + h + 2|h|)) E v̄(Δ_0)` (pointwise) or `exp(∫h) E v̄(Δ_0)`
/// (integrated).
#[allow(clippy::too_many_arguments)]
pub fn stability_experiment(
    model: &ModelSpec,
    vbar: &Kernel,
    g: &Rate,
    h: &Rate,
    cfg: &SimConfig,
    init1: &InitialLaw,
    init2: &InitialLaw,
    mode: LyapunovMode,
    tolerance: f64,
) -> Result<StabilityReport> {
    let run = coupled_simulate(model, None, cfg, init1, init2, vbar)?;
    let times = run.distance.column("t").unwrap_or_default();
    let measured = run.distance.column("vbar_mean").unwrap_or_default();
    let measured_std = run.distance.column("vbar_std").unwrap_or_default();
    let q = cfg.dt() / 4.0;
    let start = measured.first().copied().unwrap_or(0.0);
    let bound: Vec<f64> = times
        .iter()
        .map(|&t| {
            let exponent = match mode {
                LyapunovMode::Pointwise => {
                    g.integral(0.0, t, q) + h.integral(0.0, t, q) + 2.0 * abs_integral(h, t, q)
                }
                LyapunovMode::Integrated => h.integral(0.0, t, q),
            };
            exponent.exp() * start
        })
        .collect();
    let root_n = (cfg.particles as f64).sqrt();
    let band: Vec<f64> = measured_std.iter().map(|s| 3.0 * s / root_n).collect();
    let min_margin = (0..times.len())
        .map(|i| bound[i] * (1.0 + tolerance) + band[i] - measured[i])
        .fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        times,
        measured,
        measured_std,
        bound,
        band,
        g: g.clone(),
        h: h.clone(),
        mode,
        tolerance,
        min_margin,
        passed: min_margin >= 0.0,
    })
}

fn abs_integral(rate: &Rate, t: f64, q: f64) -> f64 {
    match rate {
        Rate::Constant(c) => c.abs() * t,
        _ => crate::lyapunov::trapezoid(|s| rate.eval(s).abs(), 0.0, t, q),
    }
}

#[derive(Clone, Debug)]
pub struct ReplicaReport {
    /// Columns `t`, `w1_max`: largest pairwise `W_1` between replicas.
    pub table: Table,
    pub max_w1: f64,
    /// `5 / √N`.
    pub scale: f64,
    pub replicas: usize,
    pub passed: bool,
}

impl ReplicaReport {
    pub fn summary(&self) -> Summary {
        let mut s = Summary::new();
        s.set("experiment", "replica-probe");
        s.set("replicas", self.replicas);
        s.set("max_w1", self.max_w1);
        s.set("scale", self.scale);
        s.set("passed", self.passed);
        s
    }
}

/// Sorted first-coordinate snapshots at every checkpoint of one run.
fn snapshots(model: &ModelSpec, cfg: &SimConfig, init: &InitialLaw) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut sim = Simulation::new(model, cfg, init)?;
    let mut times = Vec::new();
    let mut out = Vec::new();
    sim.run(|s| {
        times.push(s.time());
        out.push(s.cloud().to_measure().sorted(0).to_vec());
        Ok(())
    })?;
    Ok((times, out))
}

/// Independent replicas from the same initial law, one per seed. Reports the
/// largest pairwise `W_1` of the first-coordinate marginals against `5/√N`.
pub fn scheutzow_probe(model: &ModelSpec, cfg: &SimConfig, init: &InitialLaw, seeds: &[u64]) -> Result<ReplicaReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("need at least two replica seeds".into()));
    }
    cfg.validate()?;
    let runs = reduce::with_threads(cfg.threads, || {
        seeds
            .par_iter()
            .map(|&seed| snapshots(model, &SimConfig { seed, ..cfg.clone() }, init))
            .collect::<Result<Vec<_>>>()
    })
    .map_err(|e| e.context(format!("replica probe of {}", model.name)))?;
    let times = &runs[0].0;
    let mut table = Table::new(["t", "w1_max"]);
    let mut max_w1: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let mut w = 0.0f64;
        for a in 0..runs.len() {
            for b in a + 1..runs.len() {
                w = w.max(w1_sorted(&runs[a].1[k], &runs[b].1[k]));
            }
        }
        max_w1 = max_w1.max(w);
        table.push(vec![t, w]);
    }
    let scale = 5.0 / (cfg.particles as f64).sqrt();
    Ok(ReplicaReport { table, max_w1, scale, replicas: seeds.len(), passed: max_w1 <= scale })
}

/// Uniformly time-weighted pool of checkpoint clouds over `(0, horizon]`.
#[derive(Clone, Debug)]
pub struct OccupationMeasure {
    pub horizon: f64,
    pub checkpoints: usize,
    pub particles_kept: usize,
    /// Particle stride used to respect [`OCCUPATION_CAP`].
    pub stride: usize,
    pub measure: EmpiricalMeasure,
}

#[derive(Clone, Debug)]
pub struct StationaryReport {
    pub occupations: Vec<OccupationMeasure>,
    /// Columns `horizon`, `samples`, `w1_prev`, `mean`, `m4`. `w1_prev` is
    /// `W_1` of first-coordinate marginals to the previous horizon (`NaN`
    /// for the first).
    pub table: Table,
    pub warnings: Vec<String>,
}

impl StationaryReport {
    /// `W_1` gaps strictly decrease across horizons.
    pub fn cauchy_decreasing(&self) -> bool {
        let gaps: Vec<f64> = self.table.column("w1_prev").unwrap_or_default().into_iter().skip(1).collect();
        gaps.windows(2).all(|w| w[1] < w[0])
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::new();
        s.set("experiment", "stationary");
        for row in &self.table.rows {
            s.set(format!("m4.h{}", row[0]), row[4]);
            if row[2].is_finite() {
                s.set(format!("w1_prev.h{}", row[0]), row[2]);
            }
        }
        s.set("cauchy_decreasing", self.cauchy_decreasing());
        s.set("caveat", "continuity of the transition semigroup is assumed, not tested");
        for (i, w) in self.warnings.iter().enumerate() {
            s.set(format!("warning.{i}"), w);
        }
        s
    }
}

/// Runs once to the largest horizon and pools checkpoint clouds for each
/// horizon. Every horizon must lie on the checkpoint grid.
pub fn stationary_estimate(
    model: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    cfg: &SimConfig,
    init: &InitialLaw,
    horizons: &[f64],
) -> Result<StationaryReport> {
    if horizons.is_empty() || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("horizons must be non-empty and increasing".into()));
    }
    let last = *horizons.last().unwrap();
    let run_cfg = SimConfig { horizon: last, ..cfg.clone() };
    let mut cuts = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let c = SimConfig { horizon: h, ..cfg.clone() };
        c.validate()?;
        if c.total_steps() % c.checkpoint_steps() != 0 {
            return Err(Error::Config(format!("horizon {h} is not on the checkpoint grid")));
        }
        cuts.push(c.total_steps() / c.checkpoint_steps());
    }
    let mut warnings = Vec::new();
    if let Some(l) = lyap {
        let q = run_cfg.dt();
        let grid = (0..=100).map(|j| last * f64::from(j) / 100.0);
        if grid.clone().any(|t| l.m1.eval(t) > 0.0) || l.m1.integral(0.0, last, q) > 0.0 {
            warnings.push("envelope rate m1 is positive somewhere; sup M(t) may be infinite".to_string());
        }
    }
    let d = model.dim();
    let n = cfg.particles;
    let snaps = reduce::with_threads(cfg.threads, || {
        let mut sim = Simulation::new(model, &run_cfg, init)?;
        let mut snaps: Vec<Vec<f64>> = Vec::new();
        sim.run(|s| {
            if s.step_index() > 0 {
                snaps.push(s.cloud().positions().to_vec());
            }
            Ok(())
        })?;
        Ok::<_, Error>(snaps)
    })
    .map_err(|e| e.context(format!("stationary estimate of {}", model.name)))?;

    let mut occupations: Vec<OccupationMeasure> = Vec::with_capacity(horizons.len());
    let mut table = Table::new(["horizon", "samples", "w1_prev", "mean", "m4"]);
    for (&h, &k) in horizons.iter().zip(&cuts) {
        let k = k as usize;
        let stride = (k * n).div_ceil(OCCUPATION_CAP).max(1);
        let kept: Vec<usize> = (0..n).step_by(stride).collect();
        let mut pool = Vec::with_capacity(k * kept.len() * d);
        for snap in &snaps[..k] {
            for &i in &kept {
                pool.extend_from_slice(&snap[i * d..(i + 1) * d]);
            }
        }
        let measure = EmpiricalMeasure::new(pool, d)?;
        let w1 = occupations
            .last()
            .map(|prev| w1_sorted(prev.measure.sorted(0), measure.sorted(0)))
            .unwrap_or(f64::NAN);
        table.push(vec![h, measure.len() as f64, w1, measure.mean(0), measure.moment(4)?]);
        occupations.push(OccupationMeasure {
            horizon: h,
            checkpoints: k,
            particles_kept: kept.len(),
            stride,
            measure,
        });
    }
    Ok(StationaryReport { occupations, table, warnings })
}
