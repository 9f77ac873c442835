//! Monte Carlo experiment harness.
//!
//! A run is described by a TOML document (see [`RunConfig`]; every key is optional):
//!
//! ```toml
//! filters = ["otpf_interacting", "enkf", "sir", "kalman_oracle"]
//! particles = 1000          # alias: N
//! steps = 50                # alias: T
//! sims = 100
//! seed = 0
//! output_dir = "otpf-output"
//! snapshots = [1, 10, 50]   # time steps at which full ensembles are written
//!
//! [model]
//! n = 2
//! alpha = 0.1
//! sigma = 0.31622776601683794
//! obs_kind = "linear"       # linear | quadratic | cubic | zero
//!
//! [train]
//! learning_rate = 0.01
//! inner_iterations = 10
//! initial_iterations = 1024
//! floor_iterations = 64
//! batch_size = 32
//! warm_start = true
//! icnn_units = 32
//! resnet_width = 32
//! resnet_blocks = 2
//! ```
//!
//! Simulation `s` draws its truth from `derive_seed(seed, s, "truth")` and filter
//! `name` runs on `derive_seed(seed, s, name)`; the filter draws its initial
//! ensemble from `N(0, I)` and then its noise from that one stream. Simulations run
//! in parallel, everything inside a simulation runs sequentially, and files are
//! written once all simulations are done, so identical configs give byte-identical
//! files.
//!
//! Files written to the output directory:
//!
//! * `trajectories.csv`: `sim,t,x_1..x_n,y_1..y_n`
//! * `metrics.csv`: `filter,sim,t,metric,value`
//! * `mse.csv`: `filter,t,metric,value`, the squared errors averaged over simulations
//! * `snapshots.csv` (only when snapshot times are given): `t,sim,filter,particle,x_1..x_n`
//! * `manifest.json`: config echo, seeds, versions, warnings and failures

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{NetworkShape, TrainSchedule};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, numbered, write_row};
use crate::metrics::{bimodality_balance, ensemble_sq_error, MetricsRecord, Phi};
use crate::oracles::{grid_filter_step, kalman_step, GaussianBelief, GridBelief};
use crate::rng::{derive_seed, rng_from_seed};
use crate::runner::{FilterKind, FilterRunner, OtpfSettings};
use crate::ssm::{benchmark_sigma, simulate, ModelSpec, ObsKind, Trajectory, BENCHMARK_ALPHA};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "OTPF_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterChoice {
    OtpfInteracting,
    OtpfResampled,
    Enkf,
    Sir,
    KalmanOracle,
    GridOracle,
}

impl FilterChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::OtpfInteracting => "otpf_interacting",
            Self::OtpfResampled => "otpf_resampled",
            Self::Enkf => "enkf",
            Self::Sir => "sir",
            Self::KalmanOracle => "kalman_oracle",
            Self::GridOracle => "grid_oracle",
        }
    }

    /// The particle filter behind this choice, `None` for the oracles.
    pub fn particle_filter(self) -> Option<FilterKind> {
        match self {
            Self::OtpfInteracting => Some(FilterKind::OtpfInteracting),
            Self::OtpfResampled => Some(FilterKind::OtpfResampled),
            Self::Enkf => Some(FilterKind::Enkf),
            Self::Sir => Some(FilterKind::Sir),
            Self::KalmanOracle | Self::GridOracle => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub obs_kind: ObsKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n: 2,
            alpha: BENCHMARK_ALPHA,
            sigma: benchmark_sigma(),
            obs_kind: ObsKind::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub inner_iterations: usize,
    pub initial_iterations: usize,
    pub floor_iterations: usize,
    pub batch_size: usize,
    pub warm_start: bool,
    pub icnn_units: usize,
    pub resnet_width: usize,
    pub resnet_blocks: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self::from_settings(OtpfSettings::default())
    }
}

impl TrainSection {
    pub fn from_settings(s: OtpfSettings) -> Self {
        Self {
            learning_rate: s.schedule.learning_rate,
            inner_iterations: s.schedule.inner_iterations,
            initial_iterations: s.schedule.initial_iterations,
            floor_iterations: s.schedule.floor_iterations,
            batch_size: s.schedule.batch_size,
            warm_start: s.schedule.warm_start,
            icnn_units: s.shape.icnn_units,
            resnet_width: s.shape.width,
            resnet_blocks: s.shape.blocks,
        }
    }

    pub fn settings(&self) -> OtpfSettings {
        OtpfSettings {
            schedule: TrainSchedule {
                learning_rate: self.learning_rate,
                inner_iterations: self.inner_iterations,
                initial_iterations: self.initial_iterations,
                floor_iterations: self.floor_iterations,
                batch_size: self.batch_size,
                warm_start: self.warm_start,
            },
            shape: NetworkShape {
                icnn_units: self.icnn_units,
                width: self.resnet_width,
                blocks: self.resnet_blocks,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub filters: Vec<FilterChoice>,
    #[serde(alias = "N")]
    pub particles: usize,
    #[serde(alias = "T")]
    pub steps: usize,
    pub sims: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub snapshots: Vec<usize>,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            filters: vec![FilterChoice::OtpfInteracting, FilterChoice::Enkf, FilterChoice::Sir],
            particles: 1000,
            steps: 50,
            sims: 100,
            seed: 0,
            output_dir: PathBuf::from("otpf-output"),
            snapshots: Vec::new(),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        ModelSpec::new(m.n, m.alpha, m.sigma, m.obs_kind)
    }

    /// Checks every invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.n == 0 {
            return Err(Error::config("model.n", "must be at least 1"));
        }
        if !(m.alpha > 0.0 && m.alpha < 1.0) {
            return Err(Error::config("model.alpha", format!("must lie in (0, 1), got {}", m.alpha)));
        }
        if !(m.sigma > 0.0 && m.sigma.is_finite()) {
            return Err(Error::config("model.sigma", format!("must be positive, got {}", m.sigma)));
        }
        if self.filters.is_empty() {
            return Err(Error::config("filters", "at least one filter is required"));
        }
        let mut seen = BTreeSet::new();
        for f in &self.filters {
            if !seen.insert(*f) {
                return Err(Error::config("filters", format!("`{}` is listed twice", f.name())));
            }
            match f {
                FilterChoice::KalmanOracle if !matches!(m.obs_kind, ObsKind::Linear | ObsKind::Zero) => {
                    return Err(Error::config(
                        "filters",
                        format!(
                            "kalman_oracle is exact only for linear observations, not model.obs_kind = {}",
                            m.obs_kind.name()
                        ),
                    ));
                }
                FilterChoice::GridOracle if m.n > 2 => {
                    return Err(Error::config(
                        "filters",
                        format!("grid_oracle supports model.n <= 2, got {}", m.n),
                    ));
                }
                _ => {}
            }
        }
        if self.particles < 2 {
            return Err(Error::config("particles", format!("need at least 2 particles, got {}", self.particles)));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if self.sims == 0 {
            return Err(Error::config("sims", "must be at least 1"));
        }
        if let Some(t) = self.snapshots.iter().find(|t| **t == 0 || **t > self.steps) {
            return Err(Error::config("snapshots", format!("time {t} is outside 1..={}", self.steps)));
        }
        let s = self.train;
        if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        for (field, v) in [
            ("train.icnn_units", s.icnn_units),
            ("train.resnet_width", s.resnet_width),
            ("train.resnet_blocks", s.resnet_blocks),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        self.train.settings().schedule.validate()
    }
}

/// Parses and validates a TOML run description, applying defaults for absent keys.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let field = e
            .message()
            .split('`')
            .nth(1)
            .filter(|_| e.message().starts_with("unknown field"))
            .map_or_else(|| "config".to_string(), str::to_string);
        Error::config(field, e.message().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// A filter run that stopped early inside one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sim: usize,
    pub filter: String,
    /// Step that failed; metrics exist for the steps before it.
    pub t: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSeeds {
    pub sim: usize,
    pub truth: u64,
    pub filters: Vec<(String, u64)>,
}

/// Everything one simulation produced.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub sim: usize,
    pub seeds: SimSeeds,
    pub trajectory: Trajectory,
    pub metrics: MetricsRecord,
    /// `(t, filter, ensemble)` at the configured snapshot times.
    pub snapshots: Vec<(usize, String, Ensemble)>,
    pub warnings: Vec<String>,
    pub failures: Vec<FailureRecord>,
    /// Wall-clock seconds per filter.
    pub timings: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub config: RunConfig,
    pub metrics: MetricsRecord,
    pub warnings: Vec<String>,
    pub failures: Vec<FailureRecord>,
    /// Wall-clock seconds per filter, summed over simulations. Not written to the
    /// manifest so that outputs stay reproducible.
    pub timings: Vec<(String, f64)>,
}

impl RunArtifacts {
    /// Every simulation and filter ran to the last step.
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Standard normal CDF.
fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Per-coordinate `E φ(X_i)` under a Gaussian belief, in closed form.
fn gaussian_phi_mean(b: &GaussianBelief, phi: Phi) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            let (m, s) = (b.mean[i], b.covariance[(i, i)].max(0.0).sqrt());
            match phi {
                Phi::Identity => m,
                Phi::Relu if s == 0.0 => m.max(0.0),
                Phi::Relu => {
                    let z = m / s;
                    m * normal_cdf(z) + s * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
                }
            }
        })
        .collect()
}

/// `P(X_0 > 0)` under a Gaussian belief.
fn gaussian_positive_mass(b: &GaussianBelief) -> f64 {
    let (m, v) = (b.mean[0], b.covariance[(0, 0)]);
    if v <= 0.0 {
        f64::from(u8::from(m > 0.0))
    } else {
        normal_cdf(m / v.sqrt())
    }
}

fn grid_phi_mean(g: &GridBelief, phi: Phi) -> Vec<f64> {
    (0..g.dim())
        .map(|d| g.marginal(d).iter().zip(g.axis(d)).map(|(w, x)| w * phi.apply(*x)).sum())
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64], phi: Phi) -> f64 {
    a.iter().zip(b).map(|(m, x)| (m - phi.apply(*x)).powi(2)).sum()
}

const PHIS: [Phi; 2] = [Phi::Identity, Phi::Relu];

fn metric_name(phi: Phi) -> String {
    format!("sq_err_{}", phi.name())
}

struct FilterOutcome {
    warnings: Vec<String>,
    failure: Option<(usize, String)>,
}

fn run_particle_filter(
    kind: FilterKind,
    cfg: &RunConfig,
    spec: &ModelSpec,
    traj: &Trajectory,
    sim: usize,
    seed: u64,
    out: &mut SimResult,
) -> FilterOutcome {
    let name = kind.name();
    let mut rng = rng_from_seed(seed);
    let init = Ensemble::gaussian(&vec![0.0; spec.n], 1.0, cfg.particles, &mut rng);
    let mut warnings = Vec::new();
    let mut runner = match FilterRunner::new(kind, *spec, init, cfg.train.settings(), &mut rng) {
        Ok(r) => r,
        Err(e) => {
            return FilterOutcome {
                warnings,
                failure: Some((1, e.to_string())),
            }
        }
    };
    for (k, (y, x)) in traj.observations.iter().zip(&traj.states).enumerate() {
        let t = k + 1;
        let diag = match runner.step(y, &mut rng) {
            Ok(d) => d,
            Err(e) => {
                return FilterOutcome {
                    warnings,
                    failure: Some((t, e.to_string())),
                }
            }
        };
        let ens = runner.ensemble();
        if ens.as_slice().iter().any(|v| !v.is_finite()) {
            return FilterOutcome {
                warnings,
                failure: Some((t, "ensemble contains non-finite values".into())),
            };
        }
        for phi in PHIS {
            let e = ensemble_sq_error(ens, x, phi).expect("ensemble matches the model dimension");
            out.metrics.push(name, sim, t, &metric_name(phi), e);
        }
        out.metrics.push(name, sim, t, "balance", bimodality_balance(ens, 0));
        if let Some(ess) = diag.ess {
            out.metrics.push(name, sim, t, "ess", ess);
        }
        if diag.underflow {
            warnings.push(format!("sim {sim}, {name}, t = {t}: all weights underflowed, used uniform weights"));
        }
        if let Some(tr) = diag.train {
            out.metrics.push(name, sim, t, "train_iterations", tr.iterations as f64);
            out.metrics.push(name, sim, t, "train_objective", tr.final_objective);
        }
        if cfg.snapshots.contains(&t) {
            out.snapshots.push((t, name.to_string(), ens.clone()));
        }
    }
    FilterOutcome { warnings, failure: None }
}

fn run_kalman(spec: &ModelSpec, traj: &Trajectory, sim: usize, out: &mut SimResult) -> FilterOutcome {
    let name = FilterChoice::KalmanOracle.name();
    let mut b = GaussianBelief::standard(spec.n);
    for (k, (y, x)) in traj.observations.iter().zip(&traj.states).enumerate() {
        let t = k + 1;
        b = match kalman_step(&b, y, spec) {
            Ok(b) => b,
            Err(e) => {
                return FilterOutcome {
                    warnings: Vec::new(),
                    failure: Some((t, e.to_string())),
                }
            }
        };
        for phi in PHIS {
            out.metrics.push(name, sim, t, &metric_name(phi), sq_dist(&gaussian_phi_mean(&b, phi), x, phi));
        }
        out.metrics.push(name, sim, t, "balance", gaussian_positive_mass(&b));
    }
    FilterOutcome {
        warnings: Vec::new(),
        failure: None,
    }
}

fn run_grid(spec: &ModelSpec, traj: &Trajectory, sim: usize, out: &mut SimResult) -> FilterOutcome {
    let name = FilterChoice::GridOracle.name();
    let mut g = match GridBelief::standard(spec.n) {
        Ok(g) => g,
        Err(e) => {
            return FilterOutcome {
                warnings: Vec::new(),
                failure: Some((1, e.to_string())),
            }
        }
    };
    for (k, (y, x)) in traj.observations.iter().zip(&traj.states).enumerate() {
        let t = k + 1;
        g = match grid_filter_step(&g, y, spec) {
            Ok(g) => g,
            Err(e) => {
                return FilterOutcome {
                    warnings: Vec::new(),
                    failure: Some((t, e.to_string())),
                }
            }
        };
        for phi in PHIS {
            out.metrics.push(name, sim, t, &metric_name(phi), sq_dist(&grid_phi_mean(&g, phi), x, phi));
        }
        out.metrics.push(name, sim, t, "balance", g.positive_mass(0));
    }
    FilterOutcome {
        warnings: Vec::new(),
        failure: None,
    }
}

/// Runs one simulation: truth trajectory, then every configured filter on its
/// observations.
pub fn run_sim(cfg: &RunConfig, sim: usize) -> Result<SimResult> {
    let spec = cfg.spec()?;
    let truth_seed = derive_seed(cfg.seed, sim as u64, "truth");
    let mut trajectory = simulate(&spec, cfg.steps, &mut rng_from_seed(truth_seed))?;
    trajectory.seed = Some(truth_seed);
    let mut out = SimResult {
        sim,
        seeds: SimSeeds {
            sim,
            truth: truth_seed,
            filters: Vec::new(),
        },
        trajectory: trajectory.clone(),
        metrics: MetricsRecord::default(),
        snapshots: Vec::new(),
        warnings: Vec::new(),
        failures: Vec::new(),
        timings: Vec::new(),
    };
    for choice in &cfg.filters {
        let name = choice.name();
        let start = Instant::now();
        let outcome = match choice.particle_filter() {
            Some(kind) => {
                let seed = derive_seed(cfg.seed, sim as u64, name);
                out.seeds.filters.push((name.to_string(), seed));
                run_particle_filter(kind, cfg, &spec, &trajectory, sim, seed, &mut out)
            }
            None if *choice == FilterChoice::KalmanOracle => run_kalman(&spec, &trajectory, sim, &mut out),
            None => run_grid(&spec, &trajectory, sim, &mut out),
        };
        out.timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        out.warnings.extend(outcome.warnings);
        if let Some((t, message)) = outcome.failure {
            out.failures.push(FailureRecord {
                sim,
                filter: name.to_string(),
                t,
                message,
            });
        }
    }
    Ok(out)
}

/// Runs all simulations in parallel and writes the output files.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let results = (0..cfg.sims)
        .into_par_iter()
        .map(|s| run_sim(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    emit_outputs(&results, cfg)
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    crate_version: &'static str,
    generator: &'static str,
    seed_derivation: &'static str,
    master_seed: u64,
    config: &'a RunConfig,
    seeds: Vec<&'a SimSeeds>,
    snapshots_written: bool,
    files: Vec<String>,
    warnings: &'a [String],
    failures: &'a [FailureRecord],
    complete: bool,
}

fn write_file(dir: &Path, name: &str, files: &mut Vec<PathBuf>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(fs::File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    files.push(path);
    Ok(())
}

/// Writes the CSV files and the manifest for a set of simulation results.
pub fn emit_outputs(results: &[SimResult], cfg: &RunConfig) -> Result<RunArtifacts> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let n = cfg.model.n;
    let mut files = Vec::new();

    write_file(&dir, "trajectories.csv", &mut files, |w| {
        let header: Vec<String> = ["sim".to_string(), "t".to_string()]
            .into_iter()
            .chain(numbered("x", n))
            .chain(numbered("y", n))
            .collect();
        write_row(w, &header)?;
        for r in results {
            for (k, (x, y)) in r.trajectory.states.iter().zip(&r.trajectory.observations).enumerate() {
                let row: Vec<String> = [r.sim.to_string(), (k + 1).to_string()]
                    .into_iter()
                    .chain(x.iter().chain(y).map(|v| fmt_f64(*v)))
                    .collect();
                write_row(w, &row)?;
            }
        }
        Ok(())
    })?;

    let mut metrics = MetricsRecord::default();
    for r in results {
        metrics.extend(r.metrics.clone());
    }
    write_file(&dir, "metrics.csv", &mut files, |w| metrics.write_csv(w))?;

    write_file(&dir, "mse.csv", &mut files, |w| {
        write_row(w, &["filter", "t", "metric", "value"].map(String::from))?;
        for choice in &cfg.filters {
            for phi in PHIS {
                let metric = metric_name(phi);
                for (k, v) in metrics.mean_over_sims(choice.name(), &metric, cfg.steps).iter().enumerate() {
                    if v.is_finite() {
                        write_row(w, &[choice.name().to_string(), (k + 1).to_string(), metric.clone(), fmt_f64(*v)])?;
                    }
                }
            }
        }
        Ok(())
    })?;

    let snapshots_written = !cfg.snapshots.is_empty();
    if snapshots_written {
        write_file(&dir, "snapshots.csv", &mut files, |w| {
            let header: Vec<String> = ["t", "sim", "filter", "particle"]
                .map(String::from)
                .into_iter()
                .chain(numbered("x", n))
                .collect();
            write_row(w, &header)?;
            let mut rows: Vec<(usize, usize, usize, &str, &Ensemble)> = Vec::new();
            for r in results {
                for (t, name, ens) in &r.snapshots {
                    let order = cfg.filters.iter().position(|f| f.name() == name).unwrap_or(usize::MAX);
                    rows.push((*t, r.sim, order, name, ens));
                }
            }
            rows.sort_by_key(|(t, s, o, _, _)| (*t, *s, *o));
            for (t, sim, _, name, ens) in rows {
                for (i, p) in ens.particles().enumerate() {
                    let row: Vec<String> = [t.to_string(), sim.to_string(), name.to_string(), i.to_string()]
                        .into_iter()
                        .chain(p.iter().map(|v| fmt_f64(*v)))
                        .collect();
                    write_row(w, &row)?;
                }
            }
            Ok(())
        })?;
    }

    let warnings: Vec<String> = results.iter().flat_map(|r| r.warnings.iter().cloned()).collect();
    let failures: Vec<FailureRecord> = results.iter().flat_map(|r| r.failures.iter().cloned()).collect();
    let mut timings: Vec<(String, f64)> = cfg.filters.iter().map(|f| (f.name().to_string(), 0.0)).collect();
    for r in results {
        for (name, secs) in &r.timings {
            if let Some(t) = timings.iter_mut().find(|(n, _)| n == name) {
                t.1 += secs;
            }
        }
    }

    let manifest_path = dir.join("manifest.json");
    let mut listed: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    listed.push("manifest.json".into());
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        generator: "ChaCha8 (rand_chacha), Gaussians by ziggurat (rand_distr)",
        seed_derivation: "splitmix64(splitmix64(splitmix64(master) ^ sim) ^ fnv1a64(label)), label = \"truth\" or filter name",
        master_seed: cfg.seed,
        config: cfg,
        seeds: results.iter().map(|r| &r.seeds).collect(),
        snapshots_written,
        files: listed,
        warnings: &warnings,
        failures: &failures,
        complete: failures.is_empty(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text)?;
    files.push(manifest_path);

    Ok(RunArtifacts {
        output_dir: dir,
        files,
        config: cfg.clone(),
        metrics,
        warnings,
        failures,
        timings,
    })
}
