//! Trials, per-method rows, and CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, FileData, LambdaMode, Method, Split, SyntheticData};
use super::metrics::{estimation_errors, holdout_metric};
use crate::baselines::{self, debiased_average, hard_threshold, noise_scale};
use crate::datagen::{self, Domain, Generator, PartitionPolicy, RawData};
use crate::error::{Error, Result};
use crate::loss::loss_value;
use crate::model::{Dataset, DenseVector, GroundTruth, LossSpec, Shard};
use crate::protocol::{run_edsl, EdslSettings, LambdaSchedule, OracleContext, RunTrace};
use crate::prox_solver::{solve, ShiftedProblem, SolverConfig};

pub const CSV_HEADER: &str =
    "method,trial,round,l1_error,l2_error,objective,metric,payload_bytes,cumulative_bytes,solver_iterations,wall_ms";

pub const SUMMARY_HEADER: &str =
    "method,round,trials,l1_error,l2_error,objective,metric,payload_bytes,cumulative_bytes,solver_iterations,wall_ms";

/// Round value of methods reported as one horizontal level.
pub const SINGLE_SHOT_ROUND: i64 = -1;

/// One output line. Failed methods get NaN errors, objective and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub trial: usize,
    pub round: i64,
    pub l1_error: f64,
    pub l2_error: f64,
    pub objective: f64,
    pub metric: f64,
    pub payload_bytes: u64,
    pub cumulative_bytes: u64,
    pub solver_iterations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub round: i64,
    pub trials: usize,
    pub l1_error: f64,
    pub l2_error: f64,
    pub objective: f64,
    pub metric: f64,
    pub payload_bytes: f64,
    pub cumulative_bytes: f64,
    pub solver_iterations: f64,
    pub wall_ms: f64,
}

/// Everything one trial needs. Truth is only known for synthetic data.
pub struct TrialData {
    pub dataset: Dataset,
    pub spec: LossSpec,
    pub truth: Option<GroundTruth>,
    pub validation: Option<Shard>,
    pub test: Option<Shard>,
}

/// Loaded once per experiment; produces the data of each trial.
pub enum DataPlan {
    Synthetic(SyntheticData),
    File { source: FileData, raw: RawData },
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

impl DataPlan {
    pub fn prepare(source: &DataSource) -> Result<Self> {
        Ok(match source {
            DataSource::Synthetic(s) => DataPlan::Synthetic(s.clone()),
            DataSource::File(f) => {
                let raw = datagen::load_text(&f.path, f.format, f.task, f.p)?;
                DataPlan::File { source: f.clone(), raw }
            }
        })
    }

    fn file_parts(source: &FileData, raw: &RawData, seed: u64) -> Result<(Dataset, RawData, RawData)> {
        let (train, val, test) = datagen::split_train_val_test(raw, seed);
        let policy = match source.partition {
            Split::Contiguous => PartitionPolicy::Contiguous,
            Split::Shuffled => PartitionPolicy::Shuffled { seed },
        };
        Ok((datagen::partition(&train, source.m, policy, source.task)?, val, test))
    }

    pub fn trial(&self, seed: u64) -> Result<TrialData> {
        match self {
            DataPlan::Synthetic(s) => {
                let g = Generator::new(s.synth_config(seed))?;
                let val_rows = if s.validation_rows == 0 { s.n_per_machine } else { s.validation_rows };
                let test = if s.test_rows > 0 { Some(g.holdout(Domain::Test, s.test_rows)?) } else { None };
                Ok(TrialData {
                    dataset: g.dataset()?,
                    spec: LossSpec::for_task(s.task),
                    truth: Some(g.truth().clone()),
                    validation: Some(g.holdout(Domain::Validation, val_rows)?),
                    test,
                })
            }
            DataPlan::File { source, raw } => {
                let (dataset, val, test) = Self::file_parts(source, raw, seed)?;
                let holdout = |r: RawData| if r.is_empty() { Ok(None) } else { r.into_shard(0, source.task).map(Some) };
                Ok(TrialData {
                    dataset,
                    spec: LossSpec::for_task(source.task),
                    truth: None,
                    validation: holdout(val)?,
                    test: holdout(test)?,
                })
            }
        }
    }

    /// The shard a worker process serves in a trial.
    pub fn worker_shard(&self, seed: u64, machine_id: usize) -> Result<Shard> {
        match self {
            DataPlan::Synthetic(s) => {
                if machine_id >= s.m {
                    return Err(Error::Config(format!("machine id {machine_id} out of range for m = {}", s.m)));
                }
                Generator::new(s.synth_config(seed))?.shard(machine_id)
            }
            DataPlan::File { source, raw } => {
                if machine_id >= source.m {
                    return Err(Error::Config(format!("machine id {machine_id} out of range for m = {}", source.m)));
                }
                let (dataset, _, _) = Self::file_parts(source, raw, seed)?;
                Ok(dataset.shard(machine_id).clone())
            }
        }
    }
}

/// Regularization levels shared by all methods in a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Levels {
    pub local: f64,
    /// Level for pooled data; also the penalty in the reported objective.
    pub central: f64,
    pub schedule: LambdaSchedule,
}

fn log_ratio(p: usize, n: usize) -> f64 {
    ((p.max(2) as f64).ln() / n as f64).sqrt()
}

fn geometric_grid(center: f64, points: usize, low: f64, high: f64) -> Vec<f64> {
    let (a, b) = (low.ln(), high.ln());
    (0..points)
        .map(|k| center * (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Grid level with the smallest validation loss; ties keep the larger level.
fn tune_level(spec: LossSpec, shards: Vec<&Shard>, validation: &Shard, grid: &[f64], solver: &SolverConfig) -> Result<f64> {
    let p = validation.p();
    let mut best = (f64::INFINITY, grid[0]);
    let mut warm = DenseVector::zeros(p);
    // largest level first so each fit warm-starts the next
    for &lambda in grid.iter().rev() {
        let problem = ShiftedProblem::plain(spec, shards.clone(), lambda)?;
        let fit = solve(&problem, &warm, solver)?;
        let loss = loss_value(&spec, validation, &fit.beta_hat)?;
        if loss < best.0 {
            best = (loss, lambda);
        }
        warm = fit.beta_hat;
    }
    Ok(best.1)
}

pub fn levels(cfg: &ExperimentConfig, data: &TrialData, solver: &SolverConfig) -> Result<Levels> {
    let ds = &data.dataset;
    let (n, m, p) = (ds.n(), ds.m(), ds.p());
    let lc = &cfg.lambda;
    if lc.mode == LambdaMode::Fixed {
        let v = lc.value.ok_or_else(|| Error::Config("fixed mode needs lambda.value".into()))?;
        return Ok(Levels { local: v, central: v, schedule: LambdaSchedule::Fixed { lambda: v } });
    }
    let c = match lc.c {
        Some(c) => c,
        None => 2.0 * noise_scale(ds.master(), &data.spec, solver)?,
    };
    let mut local = c * log_ratio(p, n);
    let mut central = c * log_ratio(p, m * n);
    let mut schedule_c = c;
    if lc.mode == LambdaMode::Tuned {
        let val = data
            .validation
            .as_ref()
            .ok_or_else(|| Error::Config("tuned lambda needs validation rows".into()))?;
        local = tune_level(data.spec, vec![ds.master()], val, &geometric_grid(local, lc.grid_points, 1.0 / 16.0, 4.0), solver)?;
        central = tune_level(data.spec, ds.shard_refs(), val, &geometric_grid(central, lc.grid_points, 1.0 / 16.0, 4.0), solver)?;
        schedule_c = central / log_ratio(p, m * n);
    }
    let schedule = match lc.mode {
        LambdaMode::Theoretical => LambdaSchedule::Theoretical { delta: lc.delta },
        _ => LambdaSchedule::Practical { c: schedule_c, gamma: lc.decay },
    };
    Ok(Levels { local, central, schedule })
}

/// Hard threshold picked by validation loss over zero and a geometric grid
/// up to the largest coordinate.
fn tune_tau(avg: &DenseVector, spec: &LossSpec, validation: &Shard, points: usize) -> Result<f64> {
    let top = avg.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut grid = vec![0.0];
    if top > 0.0 {
        grid.extend(geometric_grid(top, points, 1e-3, 1.0));
    }
    let mut best = (f64::INFINITY, 0.0);
    for tau in grid {
        let loss = loss_value(spec, validation, &hard_threshold(avg, tau))?;
        if loss <= best.0 {
            best = (loss, tau);
        }
    }
    Ok(best.1)
}

struct RowContext<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a TrialData,
    levels: Levels,
    trial: usize,
}

impl RowContext<'_> {
    fn row(&self, method: Method, round: i64, beta: &[f64], payload: u64, cumulative: u64, iterations: usize, wall: Duration) -> MetricRow {
        let (l1_error, l2_error) = match &self.data.truth {
            Some(t) => estimation_errors(beta, t.beta_star()).unwrap_or((f64::NAN, f64::NAN)),
            None => (f64::NAN, f64::NAN),
        };
        let metric = match &self.data.test {
            Some(test) => holdout_metric(test, self.data.dataset.task(), beta).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        MetricRow {
            method: method.as_str().to_string(),
            trial: self.trial,
            round,
            l1_error,
            l2_error,
            objective: baselines::global_objective(&self.data.dataset, &self.data.spec, beta, self.levels.central),
            metric,
            payload_bytes: payload,
            cumulative_bytes: cumulative,
            solver_iterations: iterations,
            wall_ms: if self.cfg.record_wall_time { wall.as_secs_f64() * 1e3 } else { 0.0 },
        }
    }

    fn trace_rows(&self, method: Method, trace: &RunTrace) -> Vec<MetricRow> {
        let mut cumulative = 0;
        trace
            .records
            .iter()
            .map(|r| {
                cumulative += r.payload_bytes;
                self.row(method, r.round as i64, &r.beta, r.payload_bytes, cumulative, r.solver_iterations, r.wall_time)
            })
            .collect()
    }

    fn failed(&self, method: Method) -> MetricRow {
        MetricRow {
            method: method.as_str().to_string(),
            trial: self.trial,
            round: SINGLE_SHOT_ROUND,
            l1_error: f64::NAN,
            l2_error: f64::NAN,
            objective: f64::NAN,
            metric: f64::NAN,
            payload_bytes: 0,
            cumulative_bytes: 0,
            solver_iterations: 0,
            wall_ms: 0.0,
        }
    }
}

/// Runs the protocol for one trial. The default runs workers on threads;
/// the TCP master substitutes remote workers.
pub type EdslRunner<'r> = dyn FnMut(&TrialData, EdslSettings, Option<&OracleContext>) -> Result<RunTrace> + 'r;

fn in_process_edsl(cfg: &ExperimentConfig) -> impl FnMut(&TrialData, EdslSettings, Option<&OracleContext>) -> Result<RunTrace> + '_ {
    move |data, settings, oracle| run_edsl(&data.dataset, data.spec, settings, cfg.rounds, data.truth.as_ref(), oracle)
}

fn run_method(ctx: &RowContext<'_>, method: Method, solver: &SolverConfig, edsl: &mut EdslRunner<'_>) -> Result<Vec<MetricRow>> {
    let cfg = ctx.cfg;
    let data = ctx.data;
    let ds = &data.dataset;
    let (n, m, p) = (ds.n() as u64, ds.m() as u64, ds.p() as u64);
    let start = Instant::now();
    match method {
        Method::Local => {
            let fit = baselines::local(ds, data.spec, ctx.levels.local, solver)?;
            Ok(vec![ctx.row(method, SINGLE_SHOT_ROUND, &fit.beta_hat, 0, 0, fit.iterations, start.elapsed())])
        }
        Method::Centralize => {
            let fit = baselines::centralize(ds, data.spec, ctx.levels.central, solver)?;
            let bytes = (m - 1) * n * (p + 1) * 8;
            Ok(vec![ctx.row(method, SINGLE_SHOT_ROUND, &fit.beta_hat, bytes, bytes, fit.iterations, start.elapsed())])
        }
        Method::AvgDebias => {
            let gamma = cfg.avg_debias.gamma.unwrap_or_else(|| log_ratio(ds.p(), ds.n()));
            let (avg, failed) = debiased_average(ds, data.spec, ctx.levels.local, gamma, cfg.avg_debias.force, solver)?;
            if !failed.is_empty() {
                warn!("trial {}: avg_debias left out machines {failed:?}", ctx.trial);
            }
            let tau = match (cfg.avg_debias.tau, &data.validation) {
                (Some(t), _) => t,
                (None, Some(val)) => tune_tau(&avg, &data.spec, val, cfg.lambda.grid_points)?,
                (None, None) => ctx.levels.central,
            };
            let beta = hard_threshold(&avg, tau);
            let bytes = (m - 1) * p * 8;
            Ok(vec![ctx.row(method, SINGLE_SHOT_ROUND, &beta, bytes, bytes, 0, start.elapsed())])
        }
        Method::ProxGd => {
            let trace = baselines::prox_gd_distributed(
                ds,
                data.spec,
                ctx.levels.central,
                cfg.prox_gd.step,
                cfg.rounds,
                &DenseVector::zeros(ds.p()),
                data.truth.as_ref(),
            )?;
            Ok(ctx.trace_rows(method, &trace))
        }
        Method::Edsl => {
            let settings = EdslSettings { schedule: ctx.levels.schedule, solver: *solver };
            let oracle = match (&ctx.levels.schedule, &data.truth) {
                (LambdaSchedule::Theoretical { .. }, Some(t)) => Some(OracleContext::from_dataset(ds, &data.spec, t)?),
                _ => None,
            };
            let trace = edsl(data, settings, oracle.as_ref())?;
            Ok(ctx.trace_rows(method, &trace))
        }
    }
}

/// All rows of one trial, methods in configuration order. A method that
/// fails is reported as a single row of NaNs; configuration errors abort.
pub fn run_trial_with(cfg: &ExperimentConfig, data: &TrialData, trial: usize, edsl: &mut EdslRunner<'_>) -> Result<Vec<MetricRow>> {
    let solver = cfg.solver.solver_config();
    let levels = levels(cfg, data, &solver)?;
    let ctx = RowContext { cfg, data, levels, trial };
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        match run_method(&ctx, method, &solver, edsl) {
            Ok(r) => rows.extend(r),
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                warn!("trial {trial}: {} failed: {e}", method.as_str());
                rows.push(ctx.failed(method));
            }
        }
    }
    Ok(rows)
}

pub fn run_trial(cfg: &ExperimentConfig, plan: &DataPlan, trial: usize) -> Result<Vec<MetricRow>> {
    let data = plan.trial(trial_seed(cfg.seed, trial))?;
    run_trial_with(cfg, &data, trial, &mut in_process_edsl(cfg))
}

/// Rows of every trial, ordered by trial. Trials run concurrently.
pub fn experiment_rows(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let plan = DataPlan::prepare(&cfg.data)?;
    let work = || -> Result<Vec<MetricRow>> {
        let per_trial: Vec<Result<Vec<MetricRow>>> =
            (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &plan, t)).collect();
        let mut rows = Vec::new();
        for r in per_trial {
            rows.extend(r?);
        }
        Ok(rows)
    };
    if cfg.parallelism > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(work)
    } else {
        work()
    }
}

/// Means over trials per `(method, round)`, in order of first appearance.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, i64)> = Vec::new();
    let mut groups: BTreeMap<(String, i64), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.method.clone(), r.round);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let k = g.len() as f64;
            let mean = |f: &dyn Fn(&MetricRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / k;
            SummaryRow {
                method: key.0.clone(),
                round: key.1,
                trials: g.len(),
                l1_error: mean(&|r| r.l1_error),
                l2_error: mean(&|r| r.l2_error),
                objective: mean(&|r| r.objective),
                metric: mean(&|r| r.metric),
                payload_bytes: mean(&|r| r.payload_bytes as f64),
                cumulative_bytes: mean(&|r| r.cumulative_bytes as f64),
                solver_iterations: mean(&|r| r.solver_iterations as f64),
                wall_ms: mean(&|r| r.wall_ms),
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

fn write_records<T: Serialize>(path: &Path, rows: &[T], header: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(header.split(',')).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_records(path, rows, CSV_HEADER)
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header {:?}", header.join(",")) });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| Error::Parse { line: i + 2, msg: e.to_string() })?);
    }
    Ok(rows)
}

/// `results.csv` -> `results_summary.csv`
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    path.with_file_name(format!("{stem}_summary.csv"))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Writes the per-row CSV and the summary next to it.
pub fn write_outputs(path: &Path, rows: Vec<MetricRow>) -> Result<ExperimentOutput> {
    let summary = summarize(&rows);
    let spath = summary_path(path);
    write_rows(path, &rows)?;
    write_records(&spath, &summary, SUMMARY_HEADER)?;
    info!("wrote {} rows to {}", rows.len(), path.display());
    Ok(ExperimentOutput { rows, summary, csv_path: path.to_path_buf(), summary_path: spath })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let rows = experiment_rows(cfg)?;
    write_outputs(&cfg.output, rows)
}
