//! Synthetic sparse regression / classification data with Toeplitz designs,
//! plus loaders for libsvm and CSV files.

pub mod ingest;
pub mod rng;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ingest::{load_text, partition, split_train_val_test, write_csv, PartitionPolicy, RawData, TextFormat};
pub use rng::{stream, Domain};

use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::model::{dot_unchecked, Dataset, DenseVector, GroundTruth, Matrix, Shard, Task};

pub const MAX_P: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    /// `Sigma_ij = 0.5^|i-j|`
    Well,
    /// `Sigma_ij = 0.5^(|i-j|/5)`
    Ill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
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
    #[serde(default)]
    pub seed: u64,
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

impl SynthConfig {
    pub fn new(n_per_machine: usize, p: usize, m: usize, s: usize) -> Self {
        Self {
            n_per_machine,
            p,
            m,
            s,
            conditioning: Conditioning::Well,
            task: Task::Regression,
            noise_sigma: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_machine == 0 || self.p == 0 || self.m == 0 {
            return Err(Error::Config("n_per_machine, p and m must be positive".into()));
        }
        if self.s > self.p {
            return Err(Error::Config(format!("sparsity s={} exceeds p={}", self.s, self.p)));
        }
        if self.p > MAX_P {
            return Err(Error::Config(format!("p={} exceeds the supported maximum {MAX_P}", self.p)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be finite and nonnegative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

pub fn toeplitz_cov(p: usize, conditioning: Conditioning) -> Matrix {
    let mut cov = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let lag = i.abs_diff(j) as f64;
            let v = match conditioning {
                Conditioning::Well => 0.5f64.powf(lag),
                Conditioning::Ill => 0.5f64.powf(lag / 5.0),
            };
            cov.set(i, j, v);
        }
    }
    cov
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let p = a.rows();
    if a.cols() != p {
        return Err(Error::Config(format!("cholesky needs a square matrix, got {}x{}", p, a.cols())));
    }
    let mut l = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let partial = dot_unchecked(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let d = a.get(i, i) - partial;
                if !(d > 0.0) {
                    return Err(Error::Config(format!("covariance is not positive definite (pivot {i} = {d})")));
                }
                l.set(i, i, d.sqrt());
            } else {
                l.set(i, j, (a.get(i, j) - partial) / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// First `s` coordinates uniform on [0, 1], the rest zero.
pub fn sample_beta_star<R: Rng>(p: usize, s: usize, rng: &mut R) -> Result<GroundTruth> {
    if s > p {
        return Err(Error::Config(format!("sparsity s={s} exceeds p={p}")));
    }
    let mut beta = vec![0.0; p];
    for v in beta.iter_mut().take(s) {
        *v = rng.random_range(0.0..=1.0);
    }
    Ok(GroundTruth::new(DenseVector::new(beta)?))
}

/// A generator bound to one configuration; keeps the Cholesky factor around
/// so validation and test rows can be drawn without refactoring.
pub struct Generator {
    config: SynthConfig,
    chol: Matrix,
    truth: GroundTruth,
}

impl Generator {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let chol = cholesky(&toeplitz_cov(config.p, config.conditioning))?;
        let truth = sample_beta_star(config.p, config.s, &mut stream(config.seed, Domain::BetaStar, 0))?;
        Ok(Self { config, chol, truth })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    /// Rows `start..start + count` of a domain. Each row has its own stream,
    /// so the result does not depend on how rows are grouped into shards.
    pub fn rows(&self, domain: Domain, start: u64, count: usize) -> (Matrix, Vec<f64>) {
        let p = self.config.p;
        let beta = self.truth.beta_star();
        let rows: Vec<(Vec<f64>, f64)> = (0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(self.config.seed, domain, start + k as u64);
                let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let x: Vec<f64> = (0..p).map(|i| dot_unchecked(&self.chol.row(i)[..=i], &z[..=i])).collect();
                let u = dot_unchecked(&x, beta);
                let y = match self.config.task {
                    Task::Regression => {
                        let e: f64 = rng.sample(StandardNormal);
                        u + self.config.noise_sigma * e
                    }
                    Task::Classification => {
                        if rng.random::<f64>() < sigmoid(u) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                (x, y)
            })
            .collect();
        let mut data = Vec::with_capacity(count * p);
        let mut ys = Vec::with_capacity(count);
        for (x, y) in rows {
            data.extend(x);
            ys.push(y);
        }
        (Matrix::new(count, p, data).expect("sized above"), ys)
    }

    pub fn shard(&self, machine_id: usize) -> Result<Shard> {
        let n = self.config.n_per_machine;
        let (xs, ys) = self.rows(Domain::Design, (machine_id * n) as u64, n);
        Shard::new(machine_id, xs, ys, self.config.task)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let shards = (0..self.config.m).map(|j| self.shard(j)).collect::<Result<Vec<_>>>()?;
        Dataset::new(shards, self.config.task)
    }

    /// Held-out rows from an independent domain, packaged as a shard.
    pub fn holdout(&self, domain: Domain, count: usize) -> Result<Shard> {
        let (xs, ys) = self.rows(domain, 0, count);
        Shard::new(0, xs, ys, self.config.task)
    }
}

pub fn generate(config: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    let g = Generator::new(*config)?;
    Ok((g.dataset()?, g.truth.clone()))
}
