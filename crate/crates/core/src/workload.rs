//! Workload model: queries with their default-configuration cost, the full
//! workload and a compressed subset of it.
//!
//! Queries are addressed by their position in the workload (`usize`) inside
//! the engine; the string id from the workload file is only used at the
//! edges (files, controller protocol, reports).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    /// Execution time in seconds under the default configuration.
    pub default_cost: f64,
}

/// One entry of a workload file. `default_cost` may be left out and filled
/// in by a default-configuration measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEntry {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    queries: Vec<Query>,
    index: HashMap<String, usize>,
    total_cost: f64,
}

impl Workload {
    pub fn new(queries: Vec<Query>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::EmptyWorkload);
        }
        let mut index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if !(q.default_cost > 0.0 && q.default_cost.is_finite()) {
                return Err(Error::NonPositiveCost {
                    id: q.id.clone(),
                    cost: q.default_cost,
                });
            }
            if index.insert(q.id.clone(), i).is_some() {
                return Err(Error::DuplicateQuery(q.id.clone()));
            }
        }
        let total_cost = queries.iter().map(|q| q.default_cost).sum();
        Ok(Self {
            queries,
            index,
            total_cost,
        })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn query(&self, idx: usize) -> &Query {
        &self.queries[idx]
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownQuery(id.to_string()))
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.queries.len()).collect()
    }

    /// `c(W)`: sum of default costs over the whole workload.
    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    /// Sum of default costs over `ids`.
    pub fn cost_of(&self, ids: &[usize]) -> Result<f64> {
        ids.iter()
            .map(|&i| {
                self.queries
                    .get(i)
                    .map(|q| q.default_cost)
                    .ok_or_else(|| Error::UnknownQuery(format!("#{i}")))
            })
            .sum()
    }

    /// Same as [`cost_of`](Self::cost_of) but addressed by string id.
    pub fn cost_of_ids(&self, ids: &[&str]) -> Result<f64> {
        ids.iter()
            .map(|id| self.index_of(id).map(|i| self.queries[i].default_cost))
            .sum()
    }

    pub fn min_cost(&self) -> f64 {
        self.queries
            .iter()
            .map(|q| q.default_cost)
            .fold(f64::INFINITY, f64::min)
    }

    /// Queries not in `members`, in workload order.
    pub fn complement(&self, members: &[usize]) -> Vec<usize> {
        let mut inside = vec![false; self.len()];
        for &m in members {
            inside[m] = true;
        }
        (0..self.len()).filter(|&i| !inside[i]).collect()
    }

    pub fn to_entries(&self) -> Vec<QueryEntry> {
        self.queries
            .iter()
            .map(|q| QueryEntry {
                id: q.id.clone(),
                text: q.text.clone(),
                default_cost: Some(q.default_cost),
            })
            .collect()
    }
}

pub fn parse_entries(text: &str) -> Result<Vec<QueryEntry>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let entries: Vec<QueryEntry> = serde_json::from_str(text)?;
    if entries.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    Ok(entries)
}

/// Build a workload from file entries. `measure` is called once with the
/// entries lacking a cost (if any) and must return their default-configuration
/// execution times in the same order.
pub fn workload_from_entries<F>(entries: Vec<QueryEntry>, measure: F) -> Result<Workload>
where
    F: FnOnce(&[QueryEntry]) -> Result<Vec<f64>>,
{
    let missing: Vec<QueryEntry> = entries
        .iter()
        .filter(|e| e.default_cost.is_none())
        .cloned()
        .collect();
    let mut measured = if missing.is_empty() {
        Vec::new()
    } else {
        let costs = measure(&missing)?;
        if costs.len() != missing.len() {
            return Err(Error::Protocol(format!(
                "default measurement returned {} costs for {} queries",
                costs.len(),
                missing.len()
            )));
        }
        costs
    }
    .into_iter();
    let queries = entries
        .into_iter()
        .map(|e| {
            let default_cost = match e.default_cost {
                Some(c) => c,
                None => measured.next().expect("one measured cost per missing entry"),
            };
            Query {
                id: e.id,
                text: e.text,
                default_cost,
            }
        })
        .collect();
    Workload::new(queries)
}

/// Load a workload file whose entries all carry `default_cost`.
pub fn load_workload(path: &Path) -> Result<Workload> {
    let entries = parse_entries(&std::fs::read_to_string(path)?)?;
    workload_from_entries(entries, |missing| Err(Error::MissingCost(missing[0].id.clone())))
}

/// A selected subset `W'` of a workload together with its compression ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedWorkload {
    members: Vec<usize>,
    ratio: f64,
    cost: f64,
}

impl CompressedWorkload {
    /// Members are kept in workload order.
    pub fn new(workload: &Workload, mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidSession("compressed workload must be non-empty".into()));
        }
        members.sort_unstable();
        members.dedup();
        let cost = workload.cost_of(&members)?;
        let ratio = (1.0 - cost / workload.total_cost()).max(0.0);
        Ok(Self {
            members,
            ratio,
            cost,
        })
    }

    pub fn full(workload: &Workload) -> Self {
        Self {
            members: workload.all_indices(),
            ratio: 0.0,
            cost: workload.total_cost(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `η = 1 − c(W′)/c(W)`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// `c(W′)`.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn contains(&self, q: usize) -> bool {
        self.members.binary_search(&q).is_ok()
    }
}
