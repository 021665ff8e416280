//! Whole tuning sessions: the sliced tuner and the baselines it is
//! compared against, plus their on-disk artifacts.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::compressor::{adapt_ratio, greedy_compress, initial_subset, CompressorParams, InitialStrategy};
use crate::config_space::{ConfigId, ConfigSpace, Configuration};
use crate::context::TuningContext;
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::history::RunHistory;
use crate::subset_tuner::{run_slice, start_slice, step, Origin, SliceState, Step, TunerParams};
use crate::trace::{emit_trace, TraceEvent, TraceRecord};
use crate::verifier::{choose_mode, prune_candidates, score_and_select, verify_on_full_workload, Mode, VerifierState};
use crate::workload::{CompressedWorkload, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Water,
    Original,
    FixedRandom,
    FixedCoverage,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "water" => Method::Water,
            "original" => Method::Original,
            "fixed-random" => Method::FixedRandom,
            "fixed-coverage" => Method::FixedCoverage,
            other => return Err(Error::InvalidSession(format!("unknown method `{other}`"))),
        })
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Water => "water",
            Method::Original => "original",
            Method::FixedRandom => "fixed-random",
            Method::FixedCoverage => "fixed-coverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub method: Method,
    /// Simulated-seconds budget.
    pub budget_s: Option<f64>,
    /// Number of slices (for the baselines: chunks of `quota` evaluations).
    pub max_slices: Option<usize>,
    pub seed: u64,
    pub compressor: CompressorParams,
    pub tuner: TunerParams,
    pub alpha: f64,
    pub explore_prune_factor: f64,
    /// Subset of the first slice.
    pub initial: InitialStrategy,
}

impl SessionConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            budget_s: None,
            max_slices: None,
            seed,
            compressor: CompressorParams::default(),
            tuner: TunerParams::default(),
            alpha: 0.25,
            explore_prune_factor: 1.2,
            initial: InitialStrategy::Coverage,
        }
    }

    pub fn with_budget_s(mut self, seconds: f64) -> Self {
        self.budget_s = Some(seconds);
        self
    }

    pub fn with_slices(mut self, slices: usize) -> Self {
        self.max_slices = Some(slices);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSession(m));
        match (self.budget_s, self.max_slices) {
            (None, None) => return bad("a budget in seconds or slices is required".into()),
            (Some(b), _) if !(b > 0.0 && b.is_finite()) => {
                return bad(format!("budget must be positive, got {b}"))
            }
            (_, Some(0)) => return bad("slice budget must be positive".into()),
            _ => {}
        }
        self.compressor.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.explore_prune_factor >= 1.0) {
            return bad("explore prune factor must be at least 1".into());
        }
        if self.tuner.quota == 0 {
            return bad("quota must be positive".into());
        }
        if self.tuner.random_candidates == 0 {
            return bad("at least one random candidate is required".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedEntry {
    pub config_id: ConfigId,
    pub full_latency_s: f64,
}

/// Summary of one slice, one JSON line in `slices.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub index: usize,
    pub eta: f64,
    pub subset: Vec<String>,
    pub subset_cost_s: f64,
    pub representativity: f64,
    pub bootstrap_pairs: usize,
    pub backfilled_cells: usize,
    pub lhs_evaluations: usize,
    pub evaluations: usize,
    pub penalized: usize,
    pub random_fallbacks: usize,
    pub skipped_duplicates: usize,
    pub mode: Option<Mode>,
    pub survivors: usize,
    pub verified: Vec<VerifiedEntry>,
    pub improved: bool,
    pub best_full_latency_s: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub method: Method,
    pub seed: u64,
    pub default_full_latency_s: f64,
    pub best_full_latency_s: f64,
    pub best_config_id: ConfigId,
    pub best_config: Map<String, Value>,
    pub elapsed_s: f64,
    pub evaluations: usize,
    pub slices: usize,
    pub constants: SessionConfig,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub trace: Vec<TraceRecord>,
    pub slices: Vec<SliceReport>,
    pub report: SessionReport,
    pub best_config: Configuration,
}

struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn open(dir: Option<&Path>) -> Result<Sink<'_>> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
            File::create(d.join("slices.jsonl"))?;
        }
        Ok(Sink { dir })
    }

    fn slice(&self, ctx: &TuningContext, report: &SliceReport) -> Result<()> {
        let Some(d) = self.dir else { return Ok(()) };
        let mut f = fs::OpenOptions::new().append(true).open(d.join("slices.jsonl"))?;
        writeln!(f, "{}", serde_json::to_string(report)?)?;
        emit_trace(ctx.trace(), &d.join("trace.csv"))
    }

    fn finish(&self, ctx: &TuningContext, report: &SessionReport) -> Result<()> {
        let Some(d) = self.dir else { return Ok(()) };
        emit_trace(ctx.trace(), &d.join("trace.csv"))?;
        fs::write(d.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
        ctx.history.save(&d.join("history"), &ctx.workload, &ctx.space)
    }
}

/// Measure the default configuration on the full workload.
fn measure_default(ctx: &mut TuningContext) -> Result<(Configuration, f64)> {
    let values = ctx.space.default_assignment();
    let stored = ctx
        .history
        .configs()
        .iter()
        .find(|c| c.values == values && !ctx.history.is_retired(c.id))
        .cloned();
    let config = stored.unwrap_or_else(|| ctx.new_config(values));
    let all = ctx.workload.all_indices();
    let missing: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&q| ctx.history.get(q, config.id).is_none())
        .collect();
    if !missing.is_empty() {
        let outcome = ctx
            .execute(&config.values, &missing)?
            .ok_or_else(|| Error::BudgetTooSmall {
                budget: ctx.clock().budget().unwrap_or(0.0),
                needed: ctx.workload.total_cost(),
            })?;
        if !outcome.is_ok() {
            return Err(Error::InvalidSession(format!(
                "default configuration did not run ({:?})",
                outcome.status()
            )));
        }
        ctx.record_outcome(&config, &missing, &outcome)?;
    }
    ctx.history.set_default_config(config.id)?;
    let total = ctx
        .history
        .aggregate_cost(&all, config.id)
        .expect("default covers every query");
    ctx.observe_full(total, config.id);
    ctx.log(TraceEvent::Default, config.id);
    Ok((config, total))
}

struct Runner<'a> {
    cfg: &'a SessionConfig,
    ctx: TuningContext,
    rng: ChaCha8Rng,
    mode_rng: ChaCha8Rng,
    verifier: VerifierState,
    default: Configuration,
    slices: Vec<SliceReport>,
    sink: Sink<'a>,
}

impl Runner<'_> {
    fn slices_left(&self) -> bool {
        self.cfg.max_slices.is_none_or(|n| self.slices.len() < n) && !self.ctx.exhausted()
    }

    fn base_report(&self, state: &SliceState, eta: f64, representativity: f64) -> SliceReport {
        SliceReport {
            index: state.index,
            eta,
            subset: state
                .subset
                .members()
                .iter()
                .map(|&q| self.ctx.workload.query(q).id.clone())
                .collect(),
            subset_cost_s: state.subset.cost(),
            representativity,
            bootstrap_pairs: state.bootstrap_pairs,
            backfilled_cells: state.backfilled_cells,
            lhs_evaluations: state.proposals.iter().filter(|p| p.origin == Origin::Lhs).count(),
            evaluations: state.proposals.len(),
            penalized: state.proposals.iter().filter(|p| p.penalized).count(),
            random_fallbacks: state.random_fallbacks,
            skipped_duplicates: state.skipped_duplicates,
            mode: None,
            survivors: 0,
            verified: Vec::new(),
            improved: false,
            best_full_latency_s: self.best_latency(),
            elapsed_s: self.ctx.clock().elapsed(),
        }
    }

    fn best_latency(&self) -> f64 {
        self.ctx.best().map_or(f64::INFINITY, |b| b.0)
    }

    fn push_slice(&mut self, report: SliceReport) -> Result<()> {
        self.sink.slice(&self.ctx, &report)?;
        self.slices.push(report);
        Ok(())
    }

    fn run_water(&mut self) -> Result<()> {
        let params = self.cfg.compressor;
        let mut eta = params.eta0;
        let all = self.ctx.workload.all_indices();
        while self.slices_left() {
            let index = self.slices.len() + 1;
            let subset = if index == 1 {
                initial_subset(&self.ctx.workload, eta, self.rng.gen(), self.cfg.initial)?
            } else {
                greedy_compress(&self.ctx.workload, &self.ctx.history, eta, params.beta)?
            };
            let representativity = self.ctx.history.representativity(subset.members(), &all);
            let mut state = start_slice(&mut self.ctx, index, subset, &self.cfg.tuner, &mut self.rng)?;
            let completed = run_slice(&mut self.ctx, &mut state, &self.cfg.tuner, &mut self.rng)?;

            // Without labeled data the first slice always prunes and ranks by subset cost.
            let mode = if self.verifier.global.is_none() {
                None
            } else {
                Some(choose_mode(eta, &mut self.mode_rng))
            };
            let prune_mode = mode.unwrap_or(Mode::Exploit);
            let default_subset_cost = self
                .ctx
                .history
                .aggregate_cost(state.subset.members(), self.default.id)
                .expect("default is measured on every query");
            let survivors = prune_candidates(
                &state.proposals,
                prune_mode,
                default_subset_cost,
                self.verifier.explore_prune_factor,
            );
            let selected: Vec<Configuration> = score_and_select(
                &survivors,
                prune_mode,
                &self.verifier,
                &self.ctx,
                &state.subset,
                self.cfg.tuner.quota,
            )?
            .into_iter()
            .map(|p| p.config.clone())
            .collect();

            let best_before = self.best_latency();
            let mut verified = Vec::new();
            for theta in &selected {
                match verify_on_full_workload(&mut self.ctx, &mut self.verifier, theta)? {
                    Some(full) => verified.push(VerifiedEntry {
                        config_id: theta.id,
                        full_latency_s: full,
                    }),
                    None => break,
                }
            }
            let improved = self.best_latency() < best_before;
            let mut report = self.base_report(&state, eta, representativity);
            report.mode = mode;
            report.survivors = survivors.len();
            report.verified = verified;
            report.improved = improved;
            log::info!(
                "slice {index}: eta={eta:.2} |W'|={} mode={mode:?} best={:.3}s elapsed={:.1}s",
                state.subset.len(),
                report.best_full_latency_s,
                report.elapsed_s
            );
            self.push_slice(report)?;
            eta = adapt_ratio(eta, improved, &params);
            if !completed {
                break;
            }
        }
        Ok(())
    }

    /// Plain optimization on a fixed query set. With the full workload every
    /// evaluation is a full measurement; with a proper subset each proposal
    /// beating the default on the subset is verified right away.
    fn run_static(&mut self, subset: CompressedWorkload) -> Result<()> {
        let full = subset.len() == self.ctx.workload.len();
        let default_subset_cost = self
            .ctx
            .history
            .aggregate_cost(subset.members(), self.default.id)
            .expect("default is measured on every query");
        let all = self.ctx.workload.all_indices();
        let representativity = self.ctx.history.representativity(subset.members(), &all);
        while self.slices_left() {
            let index = self.slices.len() + 1;
            let mut state = start_slice(&mut self.ctx, index, subset.clone(), &self.cfg.tuner, &mut self.rng)?;
            let best_before = self.best_latency();
            let mut verified = Vec::new();
            let completed = loop {
                match step(&mut self.ctx, &mut state, &self.cfg.tuner, &mut self.rng)? {
                    Step::Evaluated(i) => {
                        let p = state.proposals[i].clone();
                        if full {
                            if !p.penalized {
                                self.ctx.observe_full(p.subset_cost, p.config.id);
                            }
                            let event = if p.origin == Origin::Lhs {
                                TraceEvent::Lhs
                            } else {
                                TraceEvent::Verify
                            };
                            self.ctx.log(event, p.config.id);
                            verified.push(VerifiedEntry {
                                config_id: p.config.id,
                                full_latency_s: p.subset_cost,
                            });
                        } else {
                            let event = if p.origin == Origin::Lhs {
                                TraceEvent::Lhs
                            } else {
                                TraceEvent::SubsetEval
                            };
                            self.ctx.log(event, p.config.id);
                            if !p.penalized && p.subset_cost < default_subset_cost {
                                if let Some(l) =
                                    verify_on_full_workload(&mut self.ctx, &mut self.verifier, &p.config)?
                                {
                                    verified.push(VerifiedEntry {
                                        config_id: p.config.id,
                                        full_latency_s: l,
                                    });
                                }
                            }
                        }
                    }
                    Step::QuotaReached => break true,
                    Step::BudgetExhausted => break false,
                }
            };
            let mut report = self.base_report(&state, subset.ratio(), representativity);
            report.verified = verified;
            report.improved = self.best_latency() < best_before;
            self.push_slice(report)?;
            if !completed {
                break;
            }
        }
        Ok(())
    }
}

/// Run one session to completion. When `out_dir` is given the trace and the
/// slice log are rewritten after every slice, and the final report and run
/// history are written at the end.
pub fn run_session(
    cfg: &SessionConfig,
    space: ConfigSpace,
    workload: Workload,
    executor: Box<dyn Executor>,
    out_dir: Option<&Path>,
) -> Result<SessionOutcome> {
    let history = RunHistory::new(workload.len());
    resume_session(cfg, space, workload, executor, history, out_dir)
}

/// Like [`run_session`], starting from a stored run history. Stored cells are
/// reused, and every stored configuration covering the whole workload joins
/// the labeled set of the verifier.
pub fn resume_session(
    cfg: &SessionConfig,
    space: ConfigSpace,
    workload: Workload,
    executor: Box<dyn Executor>,
    history: RunHistory,
    out_dir: Option<&Path>,
) -> Result<SessionOutcome> {
    cfg.validate()?;
    let needed = workload.total_cost();
    if let Some(budget) = cfg.budget_s {
        if budget < needed {
            return Err(Error::BudgetTooSmall { budget, needed });
        }
    }
    let sink = Sink::open(out_dir)?;
    let mut ctx = TuningContext::with_history(space, workload, executor, cfg.budget_s, history)?;
    let all = ctx.workload.all_indices();
    let defaults = ctx.space.default_assignment();
    let stored: Vec<(Configuration, f64)> = ctx
        .history
        .configs()
        .iter()
        .filter(|c| c.values != defaults && !ctx.history.is_retired(c.id))
        .filter_map(|c| Some((c.clone(), ctx.history.aggregate_cost(&all, c.id)?)))
        .collect();
    for (c, full) in &stored {
        ctx.observe_full(*full, c.id);
    }
    let (default, default_full) = measure_default(&mut ctx)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mode_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mode_rng.set_stream(1);
    let mut forest = cfg.tuner.forest.clone();
    forest.seed = rng.gen();
    let mut verifier = VerifierState::new(default_full, cfg.alpha, cfg.explore_prune_factor, forest)?;
    verifier.label(default.clone(), default_full);
    if !stored.is_empty() {
        for (c, full) in stored {
            verifier.label(c, full);
        }
        verifier.refit(&ctx)?;
    }

    let mut runner = Runner {
        cfg,
        ctx,
        rng,
        mode_rng,
        verifier,
        default,
        slices: Vec::new(),
        sink,
    };
    match cfg.method {
        Method::Water => runner.run_water()?,
        Method::Original => {
            let full = CompressedWorkload::full(&runner.ctx.workload);
            runner.run_static(full)?
        }
        Method::FixedRandom | Method::FixedCoverage => {
            let strategy = if cfg.method == Method::FixedRandom {
                InitialStrategy::Random
            } else {
                InitialStrategy::Coverage
            };
            let seed = runner.rng.gen();
            let subset = initial_subset(&runner.ctx.workload, cfg.compressor.eta0, seed, strategy)?;
            runner.run_static(subset)?
        }
    }

    let Runner { ctx, slices, sink, .. } = runner;
    let (best, best_id) = ctx.best().expect("default was measured");
    let best_config = ctx
        .history
        .config(best_id)
        .cloned()
        .ok_or(Error::UnknownConfig(best_id))?;
    let report = SessionReport {
        method: cfg.method,
        seed: cfg.seed,
        default_full_latency_s: default_full,
        best_full_latency_s: best,
        best_config_id: best_id,
        best_config: ctx.space.to_json_map(&best_config.values),
        elapsed_s: ctx.clock().elapsed(),
        evaluations: ctx.clock().evaluations(),
        slices: slices.len(),
        constants: cfg.clone(),
    };
    sink.finish(&ctx, &report)?;
    Ok(SessionOutcome {
        trace: ctx.into_trace(),
        slices,
        report,
        best_config,
    })
}
