//! Localized Euler–Maruyama over particle clouds.
//!
//! Each integration step reads the measure functionals from the cloud at the
//! last lag-grid point, advances every live particle by
//! `x ← x + b^k h + σ^k Δw` and then records exits. A particle observed
//! outside the cut level `D_k` freezes for good, which is what the cut
//! coefficients extended by zero prescribe.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lyapunov::{Envelope, LyapunovSpec};
use crate::measure::{EmpiricalMeasure, Kernel};
use crate::model::{ModelSpec, MAX_DIM};
use crate::reduce;
use crate::report::Table;
use crate::rng::{derive_seed, gaussian_increments, StreamRng};

const NONE: u64 = u64::MAX;
/// Below this many particles a step runs on the calling thread.
const PAR_PARTICLES: usize = 1024;
const INIT_STREAM: u64 = 0x1A17;

/// Which state feeds the coefficients inside a lag interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Lag {
    /// Current position; functionals from the last grid point.
    #[default]
    None,
    /// Position, time and functionals all from `κ_n(t)`.
    KappaN,
}

/// `κ_n(t) = ⌊n t⌋ / n`.
pub fn kappa(n: u64, t: f64) -> f64 {
    let nt = t * n as f64;
    let r = nt.round();
    let i = if (nt - r).abs() <= 1e-9 * nt.abs().max(1.0) { r } else { nt.floor() };
    i / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub particles: usize,
    pub horizon: f64,
    /// `n`; the lag grid has spacing `Δt = 1/n`.
    pub steps_per_unit: u64,
    /// Integration steps per lag interval.
    pub substeps: u32,
    pub cut_level: u32,
    pub seed: u64,
    /// Levels `m ≤ k` whose first exits are recorded.
    pub exit_levels: Vec<u32>,
    /// Worker count; `None` uses the ambient pool.
    pub threads: Option<usize>,
    pub lag: Lag,
    pub checkpoint_interval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            particles: 1000,
            horizon: 1.0,
            steps_per_unit: 1000,
            substeps: 1,
            cut_level: 1000,
            seed: 0,
            exit_levels: Vec::new(),
            threads: None,
            lag: Lag::None,
            checkpoint_interval: 0.1,
        }
    }
}

fn grid_count(value: f64, n: u64, what: &str) -> Result<u64> {
    let steps = value * n as f64;
    let r = steps.round();
    if !(value >= 0.0) || !value.is_finite() || (steps - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Config(format!("{what} = {value} is not a multiple of 1/{n}")));
    }
    Ok(r as u64)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.particles == 0 {
            return bad("particle count must be positive".into());
        }
        if self.steps_per_unit == 0 || self.substeps == 0 {
            return bad("steps per unit and substeps must be positive".into());
        }
        if self.cut_level == 0 {
            return bad("cut level must be positive".into());
        }
        if self.exit_levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("exit levels must be strictly increasing".into());
        }
        if self.exit_levels.iter().any(|&m| m == 0 || m > self.cut_level) {
            return bad(format!("exit levels must lie in 1..={}", self.cut_level));
        }
        if self.threads == Some(0) {
            return bad("thread count must be positive".into());
        }
        grid_count(self.horizon, self.steps_per_unit, "horizon")?;
        if grid_count(self.checkpoint_interval, self.steps_per_unit, "checkpoint interval")? == 0 {
            return bad("checkpoint interval must be positive".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    /// Integration step `h = Δt / substeps`.
    pub fn step_size(&self) -> f64 {
        1.0 / (self.steps_per_unit as f64 * f64::from(self.substeps))
    }

    /// Total integration steps to the horizon.
    pub fn total_steps(&self) -> u64 {
        grid_count(self.horizon, self.steps_per_unit, "horizon").unwrap_or(0) * u64::from(self.substeps)
    }

    /// Integration steps between checkpoints.
    pub fn checkpoint_steps(&self) -> u64 {
        grid_count(self.checkpoint_interval, self.steps_per_unit, "checkpoint interval")
            .unwrap_or(1)
            .max(1)
            * u64::from(self.substeps)
    }
}

/// Law of the initial cloud.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    Point(Vec<f64>),
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Row-major samples; the cloud takes them verbatim.
    Samples(Vec<f64>),
}

impl InitialLaw {
    /// Draws `n` points in dimension `dim`.
    pub fn sample(&self, n: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            InitialLaw::Point(p) => {
                if p.len() != dim {
                    return Err(Error::Config(format!("initial point has dimension {}, need {dim}", p.len())));
                }
                Ok(p.iter().copied().cycle().take(n * dim).collect())
            }
            InitialLaw::UniformBox { lo, hi } => {
                if lo.len() != dim || hi.len() != dim || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::Config("initial box is malformed".into()));
                }
                let key = derive_seed(seed, INIT_STREAM);
                let mut out = Vec::with_capacity(n * dim);
                for i in 0..n {
                    let mut rng = StreamRng::new(key, i as u64, 0);
                    for a in 0..dim {
                        out.push(lo[a] + (hi[a] - lo[a]) * rng.uniform());
                    }
                }
                Ok(out)
            }
            InitialLaw::Samples(s) => {
                if s.len() != n * dim {
                    return Err(Error::Config(format!(
                        "initial sample holds {} values, need {n} particles of dimension {dim}",
                        s.len()
                    )));
                }
                Ok(s.clone())
            }
        }
    }

    /// Reads one particle per line, `dim` whitespace-separated reals.
    pub fn read_samples(path: &Path, dim: usize) -> Result<Vec<f64>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        parse_samples(&text, dim).map_err(|e| e.context(path.display().to_string()))
    }
}

pub fn parse_samples(text: &str, dim: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        if row.len() != dim || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("line {}: expected {dim} finite values", i + 1)));
        }
        out.extend(row);
    }
    if out.is_empty() {
        return Err(Error::Config("sample file holds no particles".into()));
    }
    Ok(out)
}

/// Particle positions with exit bookkeeping.
#[derive(Clone, Debug)]
pub struct ParticleCloud {
    dim: usize,
    positions: Vec<f64>,
    levels: Vec<u32>,
    /// Row-major `N × levels`.
    exits: Vec<u64>,
    cut_level: u32,
    freeze: Vec<u64>,
    step: u64,
    time: f64,
}

impl ParticleCloud {
    fn new(model: &ModelSpec, positions: Vec<f64>, cut_level: u32, levels: &[u32]) -> Result<Self> {
        let dim = model.dim();
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::Config("initial cloud has the wrong shape".into()));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial cloud is not finite".into()));
        }
        let n = positions.len() / dim;
        let ladder = model.ladder();
        let mut exits = vec![NONE; n * levels.len()];
        let mut freeze = vec![NONE; n];
        for i in 0..n {
            let x = &positions[i * dim..(i + 1) * dim];
            for (l, &m) in levels.iter().enumerate() {
                if !ladder.level_contains(m, x) {
                    exits[i * levels.len() + l] = 0;
                }
            }
            if !ladder.level_contains(cut_level, x) {
                freeze[i] = 0;
            }
        }
        Ok(ParticleCloud { dim, positions, levels: levels.to_vec(), exits, cut_level, freeze, step: 0, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn cut_level(&self) -> u32 {
        self.cut_level
    }

    /// First step at which particle `i` was seen outside `D_m` for the
    /// `l`-th tracked level.
    pub fn exit_step(&self, i: usize, l: usize) -> Option<u64> {
        let s = self.exits[i * self.levels.len() + l];
        (s != NONE).then_some(s)
    }

    /// Step at which particle `i` left the cut level and froze.
    pub fn freeze_step(&self, i: usize) -> Option<u64> {
        let s = self.freeze[i];
        (s != NONE).then_some(s)
    }

    /// Fraction of particles that have left `D_m` (tracked level `l`).
    pub fn exit_fraction(&self, l: usize) -> f64 {
        let n = self.len();
        let nl = self.levels.len();
        (0..n).filter(|&i| self.exits[i * nl + l] != NONE).count() as f64 / n as f64
    }

    /// Fraction that were outside `D_m` at step 0.
    pub fn initial_exit_fraction(&self, l: usize) -> f64 {
        let n = self.len();
        let nl = self.levels.len();
        (0..n).filter(|&i| self.exits[i * nl + l] == 0).count() as f64 / n as f64
    }

    pub fn frozen_fraction(&self) -> f64 {
        self.freeze.iter().filter(|&&s| s != NONE).count() as f64 / self.len() as f64
    }

    pub fn to_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.positions.clone(), self.dim).expect("cloud is finite and nonempty")
    }
}

/// One simulation run in progress.
#[derive(Clone, Debug)]
pub struct Simulation<'m> {
    model: &'m ModelSpec,
    cfg: SimConfig,
    cloud: ParticleCloud,
    noise_seed: u64,
    fv: Vec<f64>,
    lag_positions: Vec<f64>,
    lag_time: f64,
}

impl<'m> Simulation<'m> {
    pub fn new(model: &'m ModelSpec, cfg: &SimConfig, init: &InitialLaw) -> Result<Self> {
        cfg.validate()?;
        let positions = init.sample(cfg.particles, model.dim(), cfg.seed)?;
        Self::from_positions(model, cfg, positions)
    }

    pub fn from_positions(model: &'m ModelSpec, cfg: &SimConfig, positions: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let cloud = ParticleCloud::new(model, positions, cfg.cut_level, &cfg.exit_levels)?;
        if cloud.len() != cfg.particles {
            return Err(Error::Config(format!(
                "initial cloud has {} particles, config asks for {}",
                cloud.len(),
                cfg.particles
            )));
        }
        let fv = model.functional_values(cloud.positions());
        let lag_positions = cloud.positions.clone();
        Ok(Simulation { model, cfg: cfg.clone(), cloud, noise_seed: cfg.seed, fv, lag_positions, lag_time: 0.0 })
    }

    /// Replaces the key of the Gaussian stream.
    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn time(&self) -> f64 {
        self.cloud.time
    }

    pub fn step_index(&self) -> u64 {
        self.cloud.step
    }

    /// Functionals used by the next step (taken at the last lag-grid point).
    pub fn lag_functionals(&self) -> &[f64] {
        &self.fv
    }

    /// Time of the lag-grid point feeding the next step.
    pub fn lag_time(&self) -> f64 {
        if self.cloud.step % u64::from(self.cfg.substeps) == 0 {
            self.cloud.time
        } else {
            self.lag_time
        }
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    /// Brownian increment of particle `i` over integration step `step`.
    pub fn noise(&self, particle: usize, step: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.model.noise_dim()];
        gaussian_increments(self.noise_seed, particle as u64, step, self.cfg.step_size().sqrt(), &mut out);
        out
    }

    pub fn is_finished(&self) -> bool {
        self.cloud.step >= self.cfg.total_steps()
    }

    pub fn at_checkpoint(&self) -> bool {
        self.cloud.step % self.cfg.checkpoint_steps() == 0 || self.is_finished()
    }

    fn time_of(&self, step: u64) -> f64 {
        step as f64 / (self.cfg.steps_per_unit as f64 * f64::from(self.cfg.substeps))
    }

    /// Advances every live particle by one integration step.
    pub fn euler_step(&mut self) -> Result<()> {
        let s = self.cloud.step;
        let kappa_mode = self.cfg.lag == Lag::KappaN;
        if s % u64::from(self.cfg.substeps) == 0 {
            self.fv = self.model.functional_values(&self.cloud.positions);
            self.lag_time = self.cloud.time;
            if kappa_mode && self.cfg.substeps > 1 {
                self.lag_positions.copy_from_slice(&self.cloud.positions);
            }
        }
        let h = self.cfg.step_size();
        let sqrt_h = h.sqrt();
        let t_coeff = if kappa_mode { self.lag_time } else { self.cloud.time };
        let use_lag_positions = kappa_mode && self.cfg.substeps > 1;
        let model = self.model;
        let ladder = model.ladder();
        let d = model.dim();
        let dn = model.noise_dim();
        let k = self.cloud.cut_level;
        let n = self.cloud.len();
        let ParticleCloud { positions, freeze, exits, levels, .. } = &mut self.cloud;
        let levels: &[u32] = levels;
        let nl = levels.len().max(1);
        let fv = &self.fv;
        let lag_positions = &self.lag_positions;
        let seed = self.noise_seed;
        let next = s + 1;

        let advance = |i: usize, x: &mut [f64], frozen: &mut u64, exits: &mut [u64]| -> Option<(usize, bool)> {
            if *frozen != NONE {
                return None;
            }
            let mut arg = [0.0; MAX_DIM];
            if use_lag_positions {
                arg[..d].copy_from_slice(&lag_positions[i * d..(i + 1) * d]);
            } else {
                arg[..d].copy_from_slice(x);
            }
            let mut b = [0.0; MAX_DIM];
            let mut sig = [0.0; MAX_DIM * MAX_DIM];
            if ladder.level_contains(k, &arg[..d])
                && model.coefficients_into(t_coeff, &arg[..d], fv, &mut b[..d], &mut sig[..d * dn])
                && (b[..d].iter().chain(&sig[..d * dn]).any(|v| !v.is_finite()))
            {
                return Some((i, true));
            }
            let mut dw = [0.0; MAX_DIM];
            gaussian_increments(seed, i as u64, s, sqrt_h, &mut dw[..dn]);
            for a in 0..d {
                let mut inc = b[a] * h;
                for j in 0..dn {
                    inc += sig[a * dn + j] * dw[j];
                }
                x[a] += inc;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Some((i, false));
            }
            for (l, &m) in levels.iter().enumerate() {
                if exits[l] == NONE && !ladder.level_contains(m, x) {
                    exits[l] = next;
                }
            }
            if !ladder.level_contains(k, x) {
                *frozen = next;
            }
            None
        };

        // with no tracked levels the exit slice is a dummy of width one
        let mut dummy;
        let exits: &mut [u64] = if levels.is_empty() {
            dummy = vec![NONE; n];
            &mut dummy
        } else {
            exits
        };
        let failure = if n < PAR_PARTICLES {
            positions
                .chunks_mut(d)
                .zip(freeze.iter_mut())
                .zip(exits.chunks_mut(nl))
                .enumerate()
                .filter_map(|(i, ((x, fr), ex))| advance(i, x, fr, &mut ex[..levels.len()]))
                .min()
        } else {
            positions
                .par_chunks_mut(d)
                .zip(freeze.par_iter_mut())
                .zip(exits.par_chunks_mut(nl))
                .enumerate()
                .with_min_len(256)
                .filter_map(|(i, ((x, fr), ex))| advance(i, x, fr, &mut ex[..levels.len()]))
                .min()
        };
        self.cloud.step = next;
        self.cloud.time = self.time_of(next);
        match failure {
            None => Ok(()),
            Some((i, true)) => Err(Error::NonFiniteCoefficient {
                what: "drift or diffusion",
                t: t_coeff,
                x: self.cloud.point(i).to_vec(),
            }),
            Some((particle, false)) => Err(Error::BlowUp { particle, step: next, t: self.cloud.time }),
        }
    }

    /// Steps to the horizon, calling `on_checkpoint` at `t = 0` and at every
    /// checkpoint.
    pub fn run(&mut self, mut on_checkpoint: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        on_checkpoint(self)?;
        while !self.is_finished() {
            self.euler_step()?;
            if self.at_checkpoint() {
                on_checkpoint(self)?;
            }
        }
        Ok(())
    }
}

/// Time-indexed diagnostics of one run.
#[derive(Clone, Debug)]
pub struct DiagnosticsSeries {
    pub table: Table,
    pub particles: usize,
    pub final_cloud: ParticleCloud,
}

impl DiagnosticsSeries {
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.table.column(name).unwrap_or_default()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column("t")
    }
}

/// Collects per-checkpoint records for one cloud.
struct Recorder<'a> {
    lyap: Option<&'a LyapunovSpec>,
    envelope: Option<Envelope>,
    v_sup: f64,
    table: Table,
}

impl<'a> Recorder<'a> {
    fn new(model: &ModelSpec, lyap: Option<&'a LyapunovSpec>, cfg: &SimConfig) -> Result<Self> {
        if let Some(l) = lyap {
            l.validate(model)?;
        }
        let mut cols = vec!["t".to_string()];
        cols.extend(model.functionals().iter().map(|f| f.name()));
        if lyap.is_some() {
            cols.extend(["v_mean", "v_std", "v_sup", "M", "M_plus"].map(String::from));
        }
        cols.extend(cfg.exit_levels.iter().map(|m| format!("exit_frac_{m}")));
        Ok(Recorder { lyap, envelope: None, v_sup: f64::NEG_INFINITY, table: Table::new(cols) })
    }

    fn record(&mut self, sim: &Simulation<'_>) {
        let cloud = sim.cloud();
        let t = cloud.time();
        let fv = sim.model().functional_values(cloud.positions());
        let mut row = vec![t];
        row.extend(&fv);
        if let Some(lyap) = self.lyap {
            let n = cloud.len();
            let (mean, std) = reduce::mean_std_by(n, &|i| lyap.eval_v(t, cloud.point(i), &fv));
            let env = self
                .envelope
                .get_or_insert_with(|| Envelope::new(lyap, mean, sim.config().dt() / 4.0));
            self.v_sup = self.v_sup.max(mean);
            row.extend([mean, std, self.v_sup, env.m(t), env.m_plus(t)]);
        }
        row.extend((0..cloud.levels().len()).map(|l| cloud.exit_fraction(l)));
        self.table.push(row);
    }
}

/// Runs the scheme to the horizon and records diagnostics at checkpoints.
pub fn simulate(
    model: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    cfg: &SimConfig,
    init: &InitialLaw,
) -> Result<DiagnosticsSeries> {
    reduce::with_threads(cfg.threads, || {
        let mut rec = Recorder::new(model, lyap, cfg)?;
        let mut sim = Simulation::new(model, cfg, init)?;
        sim.run(|s| {
            rec.record(s);
            Ok(())
        })?;
        Ok(DiagnosticsSeries { table: rec.table, particles: cfg.particles, final_cloud: sim.cloud })
    })
    .map_err(|e: Error| e.context(format!("simulating {}", model.name)))
}

/// Two clouds driven by identical noise keys.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub first: DiagnosticsSeries,
    pub second: DiagnosticsSeries,
    /// Columns `t`, `vbar_mean`, `vbar_std`: paired mean of `v̄(x¹_i − x²_i)`.
    pub distance: Table,
}

pub fn coupled_simulate(
    model: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    cfg: &SimConfig,
    init1: &InitialLaw,
    init2: &InitialLaw,
    vbar: &Kernel,
) -> Result<CoupledRun> {
    reduce::with_threads(cfg.threads, || {
        let mut rec1 = Recorder::new(model, lyap, cfg)?;
        let mut rec2 = Recorder::new(model, lyap, cfg)?;
        let mut a = Simulation::new(model, cfg, init1)?;
        let mut b = Simulation::new(model, cfg, init2)?;
        let d = model.dim();
        let mut distance = Table::new(["t", "vbar_mean", "vbar_std"]);
        let mut record = |a: &Simulation<'_>, b: &Simulation<'_>, distance: &mut Table| {
            rec1.record(a);
            rec2.record(b);
            let (ca, cb) = (a.cloud(), b.cloud());
            let (mean, std) = reduce::mean_std_by(ca.len(), &|i| {
                let mut z = [0.0; MAX_DIM];
                for j in 0..d {
                    z[j] = ca.point(i)[j] - cb.point(i)[j];
                }
                vbar.eval(&z[..d])
            });
            distance.push(vec![ca.time(), mean, std]);
        };
        record(&a, &b, &mut distance);
        while !a.is_finished() {
            a.euler_step()?;
            b.euler_step()?;
            if a.at_checkpoint() {
                record(&a, &b, &mut distance);
            }
        }
        Ok(CoupledRun {
            first: DiagnosticsSeries { table: rec1.table, particles: cfg.particles, final_cloud: a.cloud },
            second: DiagnosticsSeries { table: rec2.table, particles: cfg.particles, final_cloud: b.cloud },
            distance,
        })
    })
    .map_err(|e: Error| e.context(format!("coupled run of {}", model.name)))
}
