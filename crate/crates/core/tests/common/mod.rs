#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use knobtune::config_space::{Assignment, ConfigSpace, KnobSpec, Scale};
use knobtune::executor::{EvalOutcome, EvalRequest, Executor};
use knobtune::workload::{Query, Workload};
use knobtune::Result;

#[derive(Debug, Default)]
pub struct Log {
    pub requests: Vec<(Assignment, Vec<usize>)>,
    pub outcomes: Vec<EvalOutcome>,
    pub charged: f64,
}

impl Log {
    pub fn executed_cells(&self) -> usize {
        self.requests.iter().map(|(_, q)| q.len()).sum()
    }
}

/// Wraps an executor and records every request and outcome.
pub struct Recorder<E> {
    inner: E,
    pub log: Arc<Mutex<Log>>,
}

impl<E: Executor> Recorder<E> {
    pub fn new(inner: E) -> (Self, Arc<Mutex<Log>>) {
        let log = Arc::new(Mutex::new(Log::default()));
        (
            Self {
                inner,
                log: log.clone(),
            },
            log,
        )
    }
}

impl<E: Executor> Executor for Recorder<E> {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalOutcome> {
        let out = self.inner.evaluate(req)?;
        let mut log = self.log.lock().unwrap();
        log.requests.push((req.config.to_vec(), req.queries.to_vec()));
        log.charged += out.charged();
        log.outcomes.push(out.clone());
        Ok(out)
    }
}

pub fn workload(costs: &[f64]) -> Workload {
    Workload::new(
        costs
            .iter()
            .enumerate()
            .map(|(i, &c)| Query {
                id: format!("q{}", i + 1),
                text: format!("select c{} from t{}", i % 3, i),
                default_cost: c,
            })
            .collect(),
    )
    .unwrap()
}

pub fn small_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        KnobSpec::continuous("a", 0.0, 1.0, 0.5, Scale::Linear).unwrap(),
        KnobSpec::integer("b", 1, 1024, 32, Scale::Log).unwrap(),
        KnobSpec::categorical("c", &["x", "y", "z"], "y").unwrap(),
    ])
    .unwrap()
}
