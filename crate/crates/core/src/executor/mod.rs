//! Evaluation of (configuration, query set) pairs.
//!
//! Two backends implement [`Executor`]: the deterministic [`SimExecutor`]
//! used for desk-scale runs and [`ExternalExecutor`], which forwards each
//! request to a controller process over newline-delimited JSON.
//!
//! Both apply the same failure policy: a run that crashes or exceeds twice
//! the default execution time of the requested queries is reported as
//! failed/timed out and charged `2 × Σ default_cost` of the request. No
//! per-query latencies are returned for such runs.

mod external;
mod sim;

pub use external::{
    serve_simulator, ControllerClient, ControllerReply, ControllerRequest, ExternalExecutor,
    WireStatus,
};
pub use sim::{FailureRegion, SimExecutor, SimModel};

use serde::{Deserialize, Serialize};

use crate::config_space::KnobValue;
use crate::error::Result;
use crate::workload::Workload;

/// Multiplier applied to the default cost for failed or timed-out runs.
pub const PENALTY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub config: &'a [KnobValue],
    pub queries: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutcome {
    /// One latency per requested query, in request order.
    Ok { latencies: Vec<f64> },
    Failed { penalized_total: f64 },
    Timeout { penalized_total: f64 },
}

impl EvalOutcome {
    pub fn status(&self) -> EvalStatus {
        match self {
            EvalOutcome::Ok { .. } => EvalStatus::Ok,
            EvalOutcome::Failed { .. } => EvalStatus::Failed,
            EvalOutcome::Timeout { .. } => EvalStatus::Timeout,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, EvalOutcome::Ok { .. })
    }

    pub fn latencies(&self) -> Option<&[f64]> {
        match self {
            EvalOutcome::Ok { latencies } => Some(latencies),
            _ => None,
        }
    }

    /// Objective value: the measured total, or the penalty.
    pub fn total(&self) -> f64 {
        match self {
            EvalOutcome::Ok { latencies } => latencies.iter().sum(),
            EvalOutcome::Failed { penalized_total } | EvalOutcome::Timeout { penalized_total } => {
                *penalized_total
            }
        }
    }

    /// Simulated seconds charged to the session clock for this run. An ok run
    /// never exceeds the penalty, so this is `min(actual, penalty)`.
    pub fn charged(&self) -> f64 {
        self.total()
    }
}

/// `2 × Σ default_cost` over the requested queries.
pub fn penalty_for(workload: &Workload, queries: &[usize]) -> f64 {
    PENALTY_FACTOR * queries.iter().map(|&q| workload.query(q).default_cost).sum::<f64>()
}

pub trait Executor {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalOutcome>;
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalOutcome> {
        (**self).evaluate(req)
    }
}
