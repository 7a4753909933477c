use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use edsl::datagen::{write_csv, Domain, Generator};
use edsl::harness::experiment::{trial_seed, write_outputs, DataPlan};
use edsl::harness::{emit_plots, experiment_rows, run_trial_with, DataSource, ExperimentConfig, Method};
use edsl::protocol::{EdslMaster, TcpMasterTransport, WorkerNode};
use edsl::{Error, LossSpec, Result};

#[derive(Parser)]
#[command(name = "edsl", version, about = "Distributed sparse learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic shards, truth and held-out rows of one trial as CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run every configured method in-process and write the results CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Results CSV; overrides the configured output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG charts from a results CSV.
    Plot {
        /// Results CSV.
        input: PathBuf,
        /// Output directory; defaults to the CSV's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one machine's gradients to a master, once per trial.
    Worker {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        connect: String,
        #[arg(long)]
        machine_id: usize,
    },
    /// Run the experiment with the round protocol over TCP workers.
    Master {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        listen: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn generate(cfg: &ExperimentConfig, out: &Path, trial: usize) -> Result<()> {
    let DataSource::Synthetic(s) = &cfg.data else {
        return Err(Error::Config("generate needs a synthetic data section".into()));
    };
    let g = Generator::new(s.synth_config(trial_seed(cfg.seed, trial)))?;
    std::fs::create_dir_all(out)?;
    for j in 0..s.m {
        write_csv(&out.join(format!("shard_{j}.csv")), &g.shard(j)?)?;
    }
    if s.test_rows > 0 {
        write_csv(&out.join("test.csv"), &g.holdout(Domain::Test, s.test_rows)?)?;
    }
    let mut truth = String::from("beta\n");
    for v in g.truth().beta_star().iter() {
        truth.push_str(&format!("{v:?}\n"));
    }
    std::fs::write(out.join("beta_star.csv"), truth)?;
    info!("wrote {} shards to {}", s.m, out.display());
    Ok(())
}

fn worker(cfg: &ExperimentConfig, connect: &str, machine_id: usize) -> Result<()> {
    if machine_id == 0 {
        return Err(Error::Config("machine 0 is the master".into()));
    }
    let plan = DataPlan::prepare(&cfg.data)?;
    let spec = LossSpec::for_task(cfg.data.task());
    for trial in 0..cfg.trials {
        let shard = plan.worker_shard(trial_seed(cfg.seed, trial), machine_id)?;
        let node = WorkerNode::new(Arc::new(shard), spec);
        let served = edsl::protocol::transport::run_tcp_worker(connect, &node, cfg.transport.timeout())?;
        info!("trial {trial}: served {served} rounds");
    }
    Ok(())
}

fn master(cfg: &ExperimentConfig, listen: &str) -> Result<()> {
    if !cfg.methods.contains(&Method::Edsl) {
        return Err(Error::Config("master needs edsl among the methods".into()));
    }
    let listener = TcpListener::bind(listen)?;
    info!("listening on {}", listener.local_addr()?);
    let plan = DataPlan::prepare(&cfg.data)?;
    let timeout = cfg.transport.timeout();
    let mut rows = Vec::new();
    for trial in 0..cfg.trials {
        let data = plan.trial(trial_seed(cfg.seed, trial))?;
        let mut remote = |data: &edsl::harness::TrialData, settings, oracle: Option<&_>| {
            let ds = &data.dataset;
            let transport = TcpMasterTransport::accept(&listener, ds.m(), ds.p(), timeout)?;
            let mut m = EdslMaster::new(ds.master(), data.spec, settings, transport);
            if let Some(t) = &data.truth {
                m = m.with_truth(t);
            }
            if let Some(o) = oracle {
                m = m.with_oracle(o);
            }
            m.run(cfg.rounds)
        };
        rows.extend(run_trial_with(cfg, &data, trial, &mut remote)?);
    }
    write_outputs(&cfg.output, rows)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out, trial } => generate(&common.load()?, &out, trial),
        Command::Run { common, out } => {
            let mut cfg = common.load()?;
            if let Some(out) = out {
                cfg.output = out;
            }
            let rows = experiment_rows(&cfg)?;
            let done = write_outputs(&cfg.output, rows)?;
            println!("{}\n{}", done.csv_path.display(), done.summary_path.display());
            Ok(())
        }
        Command::Plot { input, out } => {
            let dir = out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            for f in emit_plots(&input, &dir)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Worker { common, connect, machine_id } => worker(&common.load()?, &connect, machine_id),
        Command::Master { common, listen, out } => {
            let mut cfg = common.load()?;
            if let Some(out) = out {
                cfg.output = out;
            }
            master(&cfg, &listen)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
