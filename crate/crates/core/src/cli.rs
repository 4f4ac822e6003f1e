//! Command-line front end.
//!
//! Configs are flat TOML: `key = value` lines with dotted sections, e.g.
//!
//! ```text
//! scenario.id = "example2-nonlinear"
//! scenario.alpha = -0.5
//! sim.particles = 10000
//! init.kind = "uniform"
//! ```

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args as ClapArgs, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{scheutzow_probe, stability_experiment, stationary_estimate};
use crate::error::{Error, Result};
use crate::lions::{check_structure, MeasureFunction};
use crate::lyapunov::{
    check_lyapunov_condition, exit_probability_bound, random_probes, Envelope, ExitBoundKind, LyapunovMode,
    LyapunovSpec, Rate,
};
use crate::measure::{wasserstein_exact, wasserstein_p_1d, Cost, EmpiricalMeasure, Kernel};
use crate::model::{ModelSpec, Scenario};
use crate::report::{Summary, Table};
use crate::simulate::{parse_samples, simulate, InitialLaw, Lag, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSection {
    #[serde(default = "default_scenario_id")]
    pub id: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

fn default_scenario_id() -> String {
    "example1-quartic".into()
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection { id: default_scenario_id(), params: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub particles: usize,
    pub horizon: f64,
    pub steps_per_unit: u64,
    pub substeps: u32,
    pub cut_level: u32,
    pub seed: u64,
    pub exit_levels: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// `"none"` or `"kappa"`.
    pub lag: String,
    pub checkpoint_interval: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection {
            particles: d.particles,
            horizon: d.horizon,
            steps_per_unit: d.steps_per_unit,
            substeps: d.substeps,
            cut_level: d.cut_level,
            seed: d.seed,
            exit_levels: vec![5, 10, 20],
            threads: None,
            lag: "none".into(),
            checkpoint_interval: d.checkpoint_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    /// `"point"`, `"uniform"` or `"file"`.
    pub kind: String,
    pub point: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl InitSection {
    fn point(v: f64) -> Self {
        InitSection { kind: "point".into(), point: vec![v], lo: vec![], hi: vec![], path: None }
    }
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection::point(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// `"pointwise"` or `"integrated"`; defaults to the certificate's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub vbar_power: f64,
    /// Seeds for the replica probe; empty skips it.
    pub replica_seeds: Vec<u64>,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection { g: None, h: None, mode: None, vbar_power: 2.0, replica_seeds: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationarySection {
    pub horizons: Vec<f64>,
}

impl Default for StationarySection {
    fn default() -> Self {
        StationarySection { horizons: vec![10.0, 20.0, 40.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LionsSection {
    pub particles: usize,
    /// Trailing particles overwritten with copies of leading ones.
    pub duplicates: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Registry ids; empty means all.
    pub functions: Vec<String>,
}

impl Default for LionsSection {
    fn default() -> Self {
        LionsSection { particles: 64, duplicates: 8, lo: -2.0, hi: 2.0, step: None, functions: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSection {
    pub probes: usize,
    pub probe_size: usize,
    pub times: Vec<f64>,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        LyapunovSection { probes: 50, probe_size: 200, times: vec![0.0, 0.5, 1.0] }
    }
}

/// Everything one command needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: String,
    pub out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub scenario: ScenarioSection,
    pub sim: SimSection,
    pub init: InitSection,
    pub init2: InitSection,
    pub stability: StabilitySection,
    pub stationary: StationarySection,
    pub lions: LionsSection,
    pub lyapunov: LyapunovSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: "simulate".into(),
            out: "out".into(),
            tolerance: None,
            scenario: ScenarioSection::default(),
            sim: SimSection::default(),
            init: InitSection::default(),
            init2: InitSection::point(0.0),
            stability: StabilitySection::default(),
            stationary: StationarySection::default(),
            lions: LionsSection::default(),
            lyapunov: LyapunovSection::default(),
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.push_str(prefix);
            out.push_str(" = ");
            out.push_str(&other.to_string());
            out.push('\n');
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Flat `key = value` rendering.
    pub fn to_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serialises");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::default_for(&self.scenario.id)?;
        for (k, &v) in &self.scenario.params {
            s.set_param(k, v)?;
        }
        Ok(s)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let lag = match s.lag.as_str() {
            "none" => Lag::None,
            "kappa" => Lag::KappaN,
            other => return Err(Error::Config(format!("sim.lag: expected \"none\" or \"kappa\", got \"{other}\""))),
        };
        let cfg = SimConfig {
            particles: s.particles,
            horizon: s.horizon,
            steps_per_unit: s.steps_per_unit,
            substeps: s.substeps,
            cut_level: s.cut_level,
            seed: s.seed,
            exit_levels: s.exit_levels.clone(),
            threads: s.threads,
            lag,
            checkpoint_interval: s.checkpoint_interval,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn initial_law(section: &InitSection, dim: usize, base: &Path) -> Result<InitialLaw> {
        match section.kind.as_str() {
            "point" => Ok(InitialLaw::Point(section.point.clone())),
            "uniform" => Ok(InitialLaw::UniformBox { lo: section.lo.clone(), hi: section.hi.clone() }),
            "file" => {
                let path = section.path.as_deref().ok_or_else(|| Error::Config("init.path is required".into()))?;
                let path = base.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                Ok(InitialLaw::Samples(parse_samples(&text, dim)?))
            }
            other => Err(Error::Config(format!("init.kind: unknown kind \"{other}\""))),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mkvlab", version, about = "Particle experiments for McKean-Vlasov SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and monitor its Lyapunov envelope and exit bounds.
    Simulate(Common),
    /// Shared-noise coupled runs against the continuous-dependence bound.
    Stability(Common),
    /// Occupation measures over increasing horizons.
    Stationary(Common),
    /// Finite-difference measure derivatives against analytic ones.
    LionsCheck(Common),
    /// Drift-inequality margins on random probe clouds.
    LyapunovCheck(Common),
    /// Distance between two sample files.
    Wasserstein(WassersteinArgs),
}

#[derive(Debug, Clone, ClapArgs)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "MKVLAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct WassersteinArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub out_dir: Option<PathBuf>,
    pub violations: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.violations == 0 {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        }
    }
}

pub fn error_exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::BlowUp { .. } | Error::NonFiniteCoefficient { .. } => EXIT_BLOW_UP,
        Error::Io(_) => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(outcome) => {
            if outcome.violations > 0 {
                eprintln!("mkvlab: {} bound violation(s)", outcome.violations);
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("mkvlab: {e}");
            error_exit_code(&e)
        }
    }
}

struct Prepared {
    cfg: RunConfig,
    out: PathBuf,
    base: PathBuf,
    tolerance: Option<f64>,
}

fn prepare(common: &Common, experiment: &str) -> Result<Prepared> {
    let (mut cfg, base) = match &common.config {
        Some(p) => (RunConfig::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    cfg.experiment = experiment.to_string();
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if common.threads.is_some() {
        cfg.sim.threads = common.threads;
    }
    if let Some(out) = &common.out {
        cfg.out = out.display().to_string();
    }
    let tolerance = common.tolerance.or(cfg.tolerance);
    if let Some(t) = tolerance {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("tolerance must be non-negative, got {t}")));
        }
    }
    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::from(e).context(format!("creating {}", out.display())))?;
    Ok(Prepared { cfg, out, base, tolerance })
}

fn scenario_summary(s: &mut Summary, cfg: &RunConfig, scenario: &Scenario) {
    s.set("experiment", &cfg.experiment);
    s.set("scenario", scenario.id());
    for (k, v) in scenario.params() {
        s.set(format!("scenario.{k}"), v);
    }
    s.set("particles", cfg.sim.particles);
    s.set("seed", cfg.sim.seed);
}

pub fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Stability(c) => cmd_stability(c),
        Command::Stationary(c) => cmd_stationary(c),
        Command::LionsCheck(c) => cmd_lions_check(c),
        Command::LyapunovCheck(c) => cmd_lyapunov_check(c),
        Command::Wasserstein(a) => cmd_wasserstein(a),
    }
}

fn build(cfg: &RunConfig) -> Result<(Scenario, ModelSpec, LyapunovSpec)> {
    let scenario = cfg.scenario()?;
    let (model, lyap) = scenario.build()?;
    Ok((scenario, model, lyap))
}

/// Adds `exit_bound_{m}` columns and counts envelope and exit violations.
fn check_simulation(
    table: &Table,
    lyap: &LyapunovSpec,
    sim: &SimConfig,
    p0_out: &[f64],
    tolerance: f64,
) -> Result<(Table, usize, f64)> {
    let col = |name: &str| table.column_index(name).ok_or_else(|| Error::InvalidArgument(format!("missing column {name}")));
    let (it, iv, is, im) = (col("t")?, col("v_mean")?, col("v_std")?, col("M")?);
    let ev0 = table.rows.first().map(|r| r[iv]).unwrap_or(0.0);
    let env = Envelope::new(lyap, ev0, sim.dt() / 4.0);
    let root_n = (sim.particles as f64).sqrt();
    let mut out = table.clone();
    out.columns.extend(sim.exit_levels.iter().map(|m| format!("exit_bound_{m}")));
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for row in &mut out.rows {
        let t = row[it];
        let margin = row[im] * (1.0 + tolerance) + 3.0 * row[is] / root_n - row[iv];
        min_margin = min_margin.min(margin);
        if margin < 0.0 {
            violations += 1;
        }
        for (l, &m) in sim.exit_levels.iter().enumerate() {
            let kind = if m == sim.cut_level || lyap.mode == LyapunovMode::Integrated {
                ExitBoundKind::CutLevel
            } else {
                ExitBoundKind::SubLevel
            };
            let bound = exit_probability_bound(lyap, &env, t, m, p0_out[l], kind)?;
            let frac = row[col(&format!("exit_frac_{m}"))?];
            if frac > bound + 3.0 * (frac * (1.0 - frac)).sqrt() / root_n {
                violations += 1;
            }
            row.push(bound);
        }
    }
    Ok((out, violations, min_margin))
}

fn cmd_simulate(common: &Common) -> Result<Outcome> {
    let p = prepare(common, "simulate")?;
    let (scenario, model, lyap) = build(&p.cfg)?;
    let sim = p.cfg.sim_config()?;
    let init = RunConfig::initial_law(&p.cfg.init, model.dim(), &p.base)?;
    let series = simulate(&model, Some(&lyap), &sim, &init)?;
    let p0: Vec<f64> = (0..sim.exit_levels.len()).map(|l| series.final_cloud.initial_exit_fraction(l)).collect();
    let tolerance = p.tolerance.unwrap_or(0.1);
    let (table, violations, min_margin) = check_simulation(&series.table, &lyap, &sim, &p0, tolerance)?;
    table.write(&p.out.join("diagnostics.csv"))?;
    let mut s = Summary::new();
    scenario_summary(&mut s, &p.cfg, &scenario);
    s.set("steps", sim.total_steps());
    s.set("checkpoints", table.rows.len());
    s.set("lyapunov_mode", lyap.mode.name());
    s.set("tolerance", tolerance);
    s.set("min_envelope_margin", min_margin);
    s.set("frozen_fraction", series.final_cloud.frozen_fraction());
    s.set("violations", violations);
    s.write(&p.out.join("summary.txt"))?;
    Ok(Outcome { out_dir: Some(p.out), violations })
}

fn cmd_stability(common: &Common) -> Result<Outcome> {
    let p = prepare(common, "stability")?;
    let (scenario, model, _) = build(&p.cfg)?;
    let sim = p.cfg.sim_config()?;
    let st = &p.cfg.stability;
    let cert = scenario.certificate();
    let (g, h) = match (st.g, st.h, cert) {
        (Some(g), Some(h), _) => (g, h),
        (None, None, Some(c)) => (c.g, c.h),
        _ => {
            return Err(Error::Config(format!(
                "stability needs stability.g and stability.h for {}",
                scenario.id()
            )))
        }
    };
    let mode = match st.mode.as_deref() {
        Some("pointwise") => LyapunovMode::Pointwise,
        Some("integrated") => LyapunovMode::Integrated,
        Some(other) => return Err(Error::Config(format!("stability.mode: unknown mode \"{other}\""))),
        None => cert.map(|c| c.mode).unwrap_or(LyapunovMode::Pointwise),
    };
    let init1 = RunConfig::initial_law(&p.cfg.init, model.dim(), &p.base)?;
    let init2 = RunConfig::initial_law(&p.cfg.init2, model.dim(), &p.base)?;
    let tolerance = p.tolerance.unwrap_or(0.1);
    let rep = stability_experiment(
        &model,
        &Kernel::AbsPower(st.vbar_power),
        &Rate::Constant(g),
        &Rate::Constant(h),
        &sim,
        &init1,
        &init2,
        mode,
        tolerance,
    )?;
    rep.to_table().write(&p.out.join("stability.csv"))?;
    let mut violations = usize::from(!rep.passed);
    let mut s = Summary::new();
    scenario_summary(&mut s, &p.cfg, &scenario);
    for (k, v) in rep.summary().entries.into_iter().skip(1) {
        s.set(k, v);
    }
    s.set("g", g);
    s.set("h", h);
    if !st.replica_seeds.is_empty() {
        let probe = scheutzow_probe(&model, &sim, &init1, &st.replica_seeds)?;
        probe.table.write(&p.out.join("replicas.csv"))?;
        s.set("replica.max_w1", probe.max_w1);
        s.set("replica.scale", probe.scale);
        s.set("replica.passed", probe.passed);
        violations += usize::from(!probe.passed);
    }
    s.write(&p.out.join("summary.txt"))?;
    Ok(Outcome { out_dir: Some(p.out), violations })
}

fn cmd_stationary(common: &Common) -> Result<Outcome> {
    let p = prepare(common, "stationary")?;
    let (scenario, model, lyap) = build(&p.cfg)?;
    let sim = p.cfg.sim_config()?;
    let init = RunConfig::initial_law(&p.cfg.init, model.dim(), &p.base)?;
    let rep = stationary_estimate(&model, Some(&lyap), &sim, &init, &p.cfg.stationary.horizons)?;
    for w in &rep.warnings {
        eprintln!("mkvlab: warning: {w}");
    }
    rep.table.write(&p.out.join("stationary.csv"))?;
    let mut s = Summary::new();
    scenario_summary(&mut s, &p.cfg, &scenario);
    for (k, v) in rep.summary().entries.into_iter().skip(1) {
        s.set(k, v);
    }
    s.write(&p.out.join("summary.txt"))?;
    Ok(Outcome { out_dir: Some(p.out), violations: usize::from(!rep.cauchy_decreasing()) })
}

fn cmd_lions_check(common: &Common) -> Result<Outcome> {
    let p = prepare(common, "lions-check")?;
    let l = &p.cfg.lions;
    if l.particles == 0 || l.duplicates > l.particles / 2 || !(l.lo < l.hi) {
        return Err(Error::Config("lions: need particles > 0, duplicates <= particles/2 and lo < hi".into()));
    }
    let functions: Vec<MeasureFunction> = if l.functions.is_empty() {
        MeasureFunction::registry()
    } else {
        l.functions.iter().map(|id| MeasureFunction::lookup(id)).collect::<Result<_>>()?
    };
    let mut xs = InitialLaw::UniformBox { lo: vec![l.lo], hi: vec![l.hi] }.sample(l.particles, 1, p.cfg.sim.seed)?;
    let n = xs.len();
    for j in 0..l.duplicates {
        xs[n - 1 - j] = xs[j];
    }
    let mu = EmpiricalMeasure::from_scalars(xs)?;
    let mut table = Table::new(["function", "max_analytic_deviation", "max_duplicate_deviation", "tolerance", "passed"]);
    let mut s = Summary::new();
    s.set("experiment", "lions-check");
    s.set("particles", l.particles);
    s.set("seed", p.cfg.sim.seed);
    let mut violations = 0;
    for (i, u) in functions.iter().enumerate() {
        let rep = check_structure(u, &mu, l.step)?;
        table.push(vec![
            i as f64,
            rep.max_analytic_deviation,
            rep.max_duplicate_deviation,
            rep.tolerance,
            f64::from(u8::from(rep.passed)),
        ]);
        s.set(format!("function.{i}"), &u.id);
        s.set(format!("passed.{i}"), rep.passed);
        violations += usize::from(!rep.passed);
    }
    table.write(&p.out.join("lions.csv"))?;
    s.set("violations", violations);
    s.write(&p.out.join("summary.txt"))?;
    Ok(Outcome { out_dir: Some(p.out), violations })
}

fn cmd_lyapunov_check(common: &Common) -> Result<Outcome> {
    let p = prepare(common, "lyapunov-check")?;
    let (scenario, model, lyap) = build(&p.cfg)?;
    let ly = &p.cfg.lyapunov;
    let probes = random_probes(&model, ly.probes, ly.probe_size, p.cfg.sim.seed)?;
    let tolerance = p.tolerance.unwrap_or(1e-9);
    let rep = crate::reduce::with_threads(p.cfg.sim.threads, || {
        check_lyapunov_condition(&model, &lyap, &ly.times, &probes, tolerance)
    })?;
    rep.to_table().write(&p.out.join("lyapunov.csv"))?;
    let mut s = Summary::new();
    scenario_summary(&mut s, &p.cfg, &scenario);
    s.set("mode", rep.mode.name());
    s.set("probes", ly.probes);
    s.set("min_margin", rep.min_margin);
    s.set("growth_constant", rep.growth_constant);
    s.set("tolerance", tolerance);
    s.set("passed", rep.passed);
    s.write(&p.out.join("summary.txt"))?;
    Ok(Outcome { out_dir: Some(p.out), violations: usize::from(!rep.passed) })
}

fn read_measure(path: &Path, dim: usize) -> Result<EmpiricalMeasure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let samples = parse_samples(&text, dim).map_err(|e| e.context(path.display().to_string()))?;
    EmpiricalMeasure::new(samples, dim)
}

fn cmd_wasserstein(a: &WassersteinArgs) -> Result<Outcome> {
    if a.dim == 0 {
        return Err(Error::Config("--dim must be positive".into()));
    }
    let mu = read_measure(&a.first, a.dim)?;
    let nu = read_measure(&a.second, a.dim)?;
    let w = if a.dim == 1 {
        wasserstein_p_1d(&mu, &nu, a.p)?
    } else {
        if a.p < 1.0 {
            return Err(Error::Config(format!("--p must be >= 1, got {}", a.p)));
        }
        wasserstein_exact(&mu, &nu, &Cost::Power(a.p))?.powf(1.0 / a.p)
    };
    println!("{w}");
    Ok(Outcome { out_dir: None, violations: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        assert!(text.contains("scenario.id = \"example1-quartic\""));
        assert!(text.lines().all(|l| !l.starts_with('[')));
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn dotted_keys_parse() {
        let cfg = RunConfig::parse(
            "scenario.id = \"example2-nonlinear\"\nscenario.alpha = -0.25\nsim.particles = 10\nsim.lag = \"kappa\"\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario.params["alpha"], -0.25);
        assert_eq!(cfg.scenario().unwrap(), Scenario::Example2Nonlinear { alpha: -0.25, sigma: 0.5 });
        assert_eq!(cfg.sim_config().unwrap().lag, Lag::KappaN);
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn malformed_configs_name_the_problem() {
        let err = RunConfig::parse("sim.particles = \"many\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("particles"), "{msg}");
        let err = RunConfig::parse("sim.bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let cfg = RunConfig::parse("scenario.zeta = 1\n").unwrap();
        assert!(cfg.scenario().is_err());
        let cfg = RunConfig::parse("sim.lag = \"sometimes\"\n").unwrap();
        assert!(matches!(cfg.sim_config(), Err(Error::Config(_))));
    }

    #[test]
    fn error_codes() {
        let blow = Error::BlowUp { particle: 0, step: 1, t: 0.1 }.context("run");
        assert_eq!(error_exit_code(&blow), EXIT_BLOW_UP);
        assert_eq!(error_exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(error_exit_code(&Error::UnknownScenario("x".into())), EXIT_CONFIG);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn config_round_trips(
                particles in 1usize..100_000,
                horizon in 0.01f64..100.0,
                seed in any::<u64>(),
                alpha in -3.0f64..0.9,
                threads in proptest::option::of(1usize..64),
                horizons in prop::collection::vec(0.1f64..1e3, 0..5),
                tol in proptest::option::of(0.0f64..1.0),
            ) {
                let mut cfg = RunConfig::default();
                cfg.scenario = ScenarioSection { id: "example2-nonlinear".into(), params: [("alpha".to_string(), alpha)].into() };
                cfg.sim.particles = particles;
                cfg.sim.horizon = horizon;
                cfg.sim.seed = seed >> 1;
                cfg.sim.threads = threads;
                cfg.stationary.horizons = horizons;
                cfg.tolerance = tol;
                let text = cfg.to_text();
                prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
            }
        }
    }
}
