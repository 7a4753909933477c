//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! trials = 10
//! rounds = 10
//! methods = ["local", "centralize", "prox_gd", "avg_debias", "edsl"]
//! output = "results.csv"
//!
//! [data]
//! kind = "synthetic"
//! n_per_machine = 200
//! p = 400
//! m = 10
//! s = 5
//! conditioning = "well"
//!
//! [lambda]
//! mode = "practical"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datagen::{Conditioning, SynthConfig, TextFormat};
use crate::error::{Error, Result};
use crate::model::Task;
use crate::prox_solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Local,
    Centralize,
    ProxGd,
    AvgDebias,
    Edsl,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Local, Method::Centralize, Method::ProxGd, Method::AvgDebias, Method::Edsl];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Local => "local",
            Method::Centralize => "centralize",
            Method::ProxGd => "prox_gd",
            Method::AvgDebias => "avg_debias",
            Method::Edsl => "edsl",
        }
    }

    /// Methods with one row per round rather than a single value.
    pub fn is_iterative(self) -> bool {
        matches!(self, Method::ProxGd | Method::Edsl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub n_per_machine: usize,
    pub p: usize,
    pub m: usize,
    pub s: usize,
    #[serde(default = "default_conditioning")]
    pub conditioning: Conditioning,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    /// Held-out rows for tuning; 0 uses `n_per_machine`.
    #[serde(default)]
    pub validation_rows: usize,
    #[serde(default = "default_test_rows")]
    pub test_rows: usize,
}

fn default_conditioning() -> Conditioning {
    Conditioning::Well
}
fn default_task() -> Task {
    Task::Regression
}
fn default_noise() -> f64 {
    1.0
}
fn default_test_rows() -> usize {
    1000
}

impl SyntheticData {
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_per_machine: self.n_per_machine,
            p: self.p,
            m: self.m,
            s: self.s,
            conditioning: self.conditioning,
            task: self.task,
            noise_sigma: self.noise_sigma,
            seed,
        }
    }
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self {
            n_per_machine: 200,
            p: 400,
            m: 10,
            s: 5,
            conditioning: Conditioning::Well,
            task: Task::Regression,
            noise_sigma: 1.0,
            validation_rows: 0,
            test_rows: default_test_rows(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Contiguous,
    #[default]
    Shuffled,
}

/// Rows from a file, split 60/20/20 into train, validation and test; the
/// training rows are spread over `m` machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    pub path: PathBuf,
    pub format: TextFormat,
    pub task: Task,
    pub m: usize,
    #[serde(default)]
    pub partition: Split,
    pub p: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticData),
    File(FileData),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticData::default())
    }
}

impl DataSource {
    pub fn task(&self) -> Task {
        match self {
            DataSource::Synthetic(s) => s.task,
            DataSource::File(f) => f.task,
        }
    }

    pub fn machines(&self) -> usize {
        match self {
            DataSource::Synthetic(s) => s.m,
            DataSource::File(f) => f.m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    /// Levels `c sqrt(log p / n)` (local) and `c sqrt(log p / (m n))`
    /// (pooled); the round schedule decays between them.
    #[default]
    Practical,
    /// Levels picked on a grid by validation loss.
    Tuned,
    /// Oracle schedule for the rounds; needs synthetic data.
    Theoretical,
    /// One level everywhere.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    #[serde(default)]
    pub mode: LambdaMode,
    /// Scale `c`; defaults to twice the estimated noise level.
    pub c: Option<f64>,
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// Level for `mode = "fixed"`.
    pub value: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_decay() -> f64 {
    crate::protocol::schedule::DEFAULT_DECAY
}
fn default_delta() -> f64 {
    crate::protocol::schedule::DEFAULT_DELTA
}
fn default_grid() -> usize {
    10
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            mode: LambdaMode::Practical,
            c: None,
            decay: default_decay(),
            value: None,
            delta: default_delta(),
            grid_points: default_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxGdConfig {
    /// Step size; defaults to the inverse of a power-iteration estimate of
    /// the pooled Hessian norm.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvgDebiasSection {
    /// Nodewise penalty; defaults to `sqrt(log p / n)`.
    pub gamma: Option<f64>,
    /// Hard threshold; picked by validation loss when absent.
    pub tau: Option<f64>,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    SolverConfig::default().tol
}
fn default_max_iter() -> usize {
    SolverConfig::default().max_iter
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { tol: self.tol, max_iter: self.max_iter, ..SolverConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    crate::protocol::transport::DEFAULT_ROUND_TIMEOUT.as_secs_f64()
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self { timeout_secs: default_timeout() }
    }
}

impl TransportConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Worker threads for concurrent trials; 0 lets the pool decide.
    #[serde(default)]
    pub parallelism: usize,
    /// Off by default so that output files are reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub lambda: LambdaConfig,
    #[serde(default)]
    pub prox_gd: ProxGdConfig,
    #[serde(default)]
    pub avg_debias: AvgDebiasSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub transport: TransportConfig,
}

fn default_trials() -> usize {
    10
}
fn default_rounds() -> u32 {
    10
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_output() -> PathBuf {
    PathBuf::from("results.csv")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: default_trials(),
            rounds: default_rounds(),
            methods: default_methods(),
            parallelism: 0,
            record_wall_time: false,
            output: default_output(),
            data: DataSource::default(),
            lambda: LambdaConfig::default(),
            prox_gd: ProxGdConfig::default(),
            avg_debias: AvgDebiasSection::default(),
            solver: SolverSection::default(),
            transport: TransportConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods are listed more than once".into()));
        }
        match &self.data {
            DataSource::Synthetic(s) => s.synth_config(self.seed).validate()?,
            DataSource::File(f) => {
                if f.m == 0 {
                    return Err(Error::Config("m must be positive".into()));
                }
            }
        }
        if self.data.machines() > u16::MAX as usize {
            return Err(Error::Config(format!("at most {} machines are supported", u16::MAX)));
        }
        let l = &self.lambda;
        if let Some(c) = l.c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("lambda.c must be positive, got {c}")));
            }
        }
        if !(l.decay > 0.0 && l.decay <= 1.0) {
            return Err(Error::Config(format!("lambda.decay must lie in (0, 1], got {}", l.decay)));
        }
        if l.grid_points < 2 {
            return Err(Error::Config("lambda.grid_points must be at least 2".into()));
        }
        match l.mode {
            LambdaMode::Fixed => match l.value {
                Some(v) if v > 0.0 && v.is_finite() => {}
                _ => return Err(Error::Config("lambda.mode = \"fixed\" needs a positive lambda.value".into())),
            },
            LambdaMode::Theoretical => {
                if !matches!(self.data, DataSource::Synthetic(_)) {
                    return Err(Error::Config("the theoretical schedule needs synthetic data".into()));
                }
                if !(l.delta > 0.0 && l.delta < 1.0) {
                    return Err(Error::Config(format!("lambda.delta must lie in (0, 1), got {}", l.delta)));
                }
            }
            _ => {}
        }
        if let Some(step) = self.prox_gd.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("prox_gd.step must be positive, got {step}")));
            }
        }
        let a = &self.avg_debias;
        if a.gamma.is_some_and(|g| !(g > 0.0)) || a.tau.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::Config("avg_debias needs gamma > 0 and tau >= 0".into()));
        }
        self.solver.solver_config().validate()?;
        if !(self.transport.timeout_secs > 0.0 && self.transport.timeout_secs.is_finite()) {
            return Err(Error::Config("transport.timeout_secs must be positive".into()));
        }
        Ok(())
    }
}
