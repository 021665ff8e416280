//! Run one tuning session and write its trace, slice log, report and history.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, ValueEnum};
use knobtune::compressor::InitialStrategy;
use knobtune::config_space::ConfigSpace;
use knobtune::executor::{ControllerClient, Executor, ExternalExecutor, SimExecutor};
use knobtune::history::RunHistory;
use knobtune::session::{resume_session, Method, SessionConfig};
use knobtune::workload::{parse_entries, workload_from_entries, Workload};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Water,
    Original,
    FixedRandom,
    FixedCoverage,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Water => Method::Water,
            MethodArg::Original => Method::Original,
            MethodArg::FixedRandom => Method::FixedRandom,
            MethodArg::FixedCoverage => Method::FixedCoverage,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitialArg {
    Random,
    Coverage,
}

#[derive(Debug, Clone)]
enum ExecutorSpec {
    Sim(u64),
    External(String),
}

fn parse_executor(s: &str) -> Result<ExecutorSpec, String> {
    match s.split_once(':') {
        Some(("sim", seed)) => seed
            .parse()
            .map(ExecutorSpec::Sim)
            .map_err(|_| format!("bad simulator seed `{seed}`")),
        Some(("external", addr)) if !addr.is_empty() => Ok(ExecutorSpec::External(addr.to_string())),
        _ => Err(format!("expected sim:SEED or external:HOST:PORT, got `{s}`")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "tune", version, about = "Workload-adaptive knob tuning session")]
struct Args {
    /// Knob space JSON.
    #[arg(long)]
    space: PathBuf,
    /// Workload JSON.
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, value_enum, default_value = "water")]
    method: MethodArg,
    /// `sim:SEED` or `external:HOST:PORT`.
    #[arg(long, value_parser = parse_executor, default_value = "sim:0")]
    executor: ExecutorSpec,
    /// Budget in simulated seconds.
    #[arg(long)]
    budget_s: Option<f64>,
    /// Budget in slices (baselines: chunks of `quota` evaluations).
    #[arg(long)]
    slices: Option<usize>,
    #[arg(long, default_value_t = 0.75)]
    eta0: f64,
    #[arg(long, default_value_t = 0.1)]
    eta_step: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Fraction of each slice's quota that is verified.
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    quota: usize,
    /// Subset-cost ceiling, relative to the default, for explore-mode survivors.
    #[arg(long, default_value_t = 1.2)]
    explore_prune_factor: f64,
    #[arg(long, value_enum, default_value = "coverage")]
    initial: InitialArg,
    /// Fit the surrogates on log latencies (`false`: raw seconds).
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    log_target: bool,
    /// Resume from a stored run history (an earlier session's `history/`).
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

impl Args {
    fn session_config(&self) -> SessionConfig {
        let mut cfg = SessionConfig::new(self.method.into(), self.seed);
        cfg.budget_s = self.budget_s;
        cfg.max_slices = self.slices;
        cfg.compressor.eta0 = self.eta0;
        cfg.compressor.eta_step = self.eta_step;
        cfg.compressor.beta = self.beta;
        cfg.alpha = self.alpha;
        cfg.tuner.quota = self.quota;
        cfg.explore_prune_factor = self.explore_prune_factor;
        cfg.tuner.forest.log_target = self.log_target;
        cfg.initial = match self.initial {
            InitialArg::Random => InitialStrategy::Random,
            InitialArg::Coverage => InitialStrategy::Coverage,
        };
        cfg
    }
}

fn build_executor(spec: &ExecutorSpec, space: &ConfigSpace, text: &str) -> Result<(Workload, Box<dyn Executor>)> {
    let entries = parse_entries(text)?;
    match spec {
        ExecutorSpec::Sim(seed) => {
            let workload = workload_from_entries(entries, |missing| {
                Err(knobtune::Error::MissingCost(missing[0].id.clone()))
            })
            .context("the simulator needs a default_cost for every query")?;
            let exec = SimExecutor::from_seed(&workload, space, *seed);
            Ok((workload, Box::new(exec)))
        }
        ExecutorSpec::External(addr) => {
            let mut client =
                ControllerClient::connect(addr.as_str()).with_context(|| format!("connecting to {addr}"))?;
            let workload = workload_from_entries(entries, |missing| {
                let ids: Vec<String> = missing.iter().map(|e| e.id.clone()).collect();
                log::info!("measuring {} default costs on the controller", ids.len());
                client.measure_defaults(space, &ids)
            })?;
            let exec = ExternalExecutor::new(client, space.clone(), workload.clone());
            Ok((workload, Box::new(exec)))
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KNOBTUNE_LOG", "info")).init();
    let args = Args::parse();
    if args.budget_s.is_none() && args.slices.is_none() {
        bail!("give --budget-s or --slices");
    }
    let cfg = args.session_config();
    cfg.validate()?;

    let space = ConfigSpace::load(&args.space).with_context(|| format!("reading {}", args.space.display()))?;
    let text = std::fs::read_to_string(&args.workload)
        .with_context(|| format!("reading {}", args.workload.display()))?;
    let (workload, executor) = build_executor(&args.executor, &space, &text)?;
    log::info!(
        "{} queries, {} knobs, default workload cost {:.3}s",
        workload.len(),
        space.len(),
        workload.total_cost()
    );

    let history = match &args.history {
        Some(dir) => {
            let h = RunHistory::load(dir, &workload, &space)
                .with_context(|| format!("loading history from {}", dir.display()))?;
            log::info!("resuming with {} stored configurations", h.len());
            h
        }
        None => RunHistory::new(workload.len()),
    };
    let outcome = resume_session(&cfg, space, workload, executor, history, Some(&args.out))?;
    let r = &outcome.report;
    println!(
        "method={} best_full_latency_s={:?} default_full_latency_s={:?} elapsed_s={:?} evaluations={} slices={}",
        r.method.as_str(),
        r.best_full_latency_s,
        r.default_full_latency_s,
        r.elapsed_s,
        r.evaluations,
        r.slices
    );
    Ok(())
}
