//! Mutable state shared by one tuning session: the run history, the
//! executor, the simulated clock and the convergence trace.

use crate::config_space::{Assignment, ConfigId, ConfigIdGen, ConfigSpace, Configuration};
use crate::error::{Error, Result};
use crate::executor::{EvalOutcome, EvalRequest, Executor};
use crate::history::RunHistory;
use crate::trace::{TraceEvent, TraceRecord};
use crate::workload::Workload;

/// Simulated-seconds clock with an optional budget.
#[derive(Debug, Clone, Default)]
pub struct Clock {
    elapsed: f64,
    budget: Option<f64>,
    evaluations: usize,
}

impl Clock {
    pub fn new(budget: Option<f64>) -> Self {
        Self {
            budget,
            ..Self::default()
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// True once no further evaluation may start.
    pub fn exhausted(&self) -> bool {
        self.budget.is_some_and(|b| self.elapsed >= b)
    }

    fn charge(&mut self, seconds: f64) {
        debug_assert!(seconds >= 0.0);
        self.elapsed += seconds;
        self.evaluations += 1;
    }
}

pub struct TuningContext {
    pub space: ConfigSpace,
    pub workload: Workload,
    pub history: RunHistory,
    pub ids: ConfigIdGen,
    /// Assignments that failed or timed out; they carry no history cells.
    pub failures: Vec<Assignment>,
    clock: Clock,
    executor: Box<dyn Executor>,
    trace: Vec<TraceRecord>,
    best: Option<(f64, ConfigId)>,
}

impl TuningContext {
    pub fn new(
        space: ConfigSpace,
        workload: Workload,
        executor: Box<dyn Executor>,
        budget_s: Option<f64>,
    ) -> Self {
        let history = RunHistory::new(workload.len());
        Self {
            space,
            workload,
            history,
            ids: ConfigIdGen::new(),
            failures: Vec::new(),
            clock: Clock::new(budget_s),
            executor,
            trace: Vec::new(),
            best: None,
        }
    }

    /// Continue from a stored history: its configurations and cells are
    /// reused and new ids start after the largest stored one.
    pub fn with_history(
        space: ConfigSpace,
        workload: Workload,
        executor: Box<dyn Executor>,
        budget_s: Option<f64>,
        history: RunHistory,
    ) -> Result<Self> {
        if history.query_count() != workload.len() {
            return Err(Error::InvalidSession(format!(
                "history has {} queries, workload {}",
                history.query_count(),
                workload.len()
            )));
        }
        let mut ctx = Self::new(space, workload, executor, budget_s);
        if let Some(last) = history.configs().iter().map(|c| c.id).max() {
            ctx.ids = ConfigIdGen::starting_after(last);
        }
        ctx.history = history;
        Ok(ctx)
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn exhausted(&self) -> bool {
        self.clock.exhausted()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<TraceRecord> {
        self.trace
    }

    /// Best measured full-workload latency so far.
    pub fn best(&self) -> Option<(f64, ConfigId)> {
        self.best
    }

    pub fn new_config(&mut self, values: Assignment) -> Configuration {
        self.ids.assign(values)
    }

    /// Run `queries` under `values`, charging the clock. Returns `None`
    /// without executing anything when the budget is already spent.
    pub fn execute(&mut self, values: &[crate::config_space::KnobValue], queries: &[usize]) -> Result<Option<EvalOutcome>> {
        if self.clock.exhausted() {
            return Ok(None);
        }
        let outcome = self.executor.evaluate(&EvalRequest {
            config: values,
            queries,
        })?;
        self.clock.charge(outcome.charged());
        Ok(Some(outcome))
    }

    /// Register `config` and store every latency of an ok outcome.
    pub fn record_outcome(&mut self, config: &Configuration, queries: &[usize], outcome: &EvalOutcome) -> Result<()> {
        if let Some(latencies) = outcome.latencies() {
            self.history.register(config)?;
            for (&q, &l) in queries.iter().zip(latencies) {
                self.history.record(q, config.id, l)?;
            }
        } else if !self.failures.contains(&config.values) {
            self.failures.push(config.values.clone());
        }
        Ok(())
    }

    /// Offer a measured full-workload latency; returns true if it is a new best.
    pub fn observe_full(&mut self, latency: f64, config: ConfigId) -> bool {
        match self.best {
            Some((b, _)) if latency >= b => false,
            _ => {
                self.best = Some((latency, config));
                true
            }
        }
    }

    /// Append a trace point at the current clock reading.
    pub fn log(&mut self, event: TraceEvent, config: ConfigId) {
        self.trace.push(TraceRecord {
            elapsed_s: self.clock.elapsed,
            best_full_latency_s: self.best.map_or(f64::INFINITY, |(b, _)| b),
            event,
            config_id: config,
        });
    }

    /// Whether `values` was already evaluated (registered or known to fail).
    pub fn is_known(&self, values: &[crate::config_space::KnobValue]) -> bool {
        self.history.configs().iter().any(|c| c.values == values)
            || self.failures.iter().any(|f| f == values)
    }
}
