//! Sparse run history `H[q, θ]`: per-query latencies across every evaluated
//! configuration, plus the aggregations built on it (workload totals,
//! lacked-history counts, representativity).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config_space::{ConfigId, ConfigSpace, Configuration};
use crate::error::{Error, Result};
use crate::workload::Workload;

/// Representativity reported when fewer than two configurations can be
/// compared; a random subset scores the same on average.
pub const NEUTRAL_REPRESENTATIVITY: f64 = 0.5;

#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    n_queries: usize,
    configs: Vec<Configuration>,
    slots: HashMap<ConfigId, usize>,
    /// `[slot][query]`
    cells: Vec<Vec<Option<f64>>>,
    retired: Vec<bool>,
    default_config: Option<ConfigId>,
}

impl RunHistory {
    pub fn new(n_queries: usize) -> Self {
        Self {
            n_queries,
            ..Self::default()
        }
    }

    pub fn query_count(&self) -> usize {
        self.n_queries
    }

    /// Number of registered configurations.
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Registered configurations in registration order.
    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn config(&self, id: ConfigId) -> Option<&Configuration> {
        self.slots.get(&id).map(|&s| &self.configs[s])
    }

    pub fn contains_config(&self, id: ConfigId) -> bool {
        self.slots.contains_key(&id)
    }

    /// Registering the same configuration twice is a no-op.
    pub fn register(&mut self, config: &Configuration) -> Result<()> {
        if let Some(&slot) = self.slots.get(&config.id) {
            if self.configs[slot].values != config.values {
                return Err(Error::NonConforming(format!(
                    "configuration {} re-registered with different values",
                    config.id
                )));
            }
            return Ok(());
        }
        self.slots.insert(config.id, self.configs.len());
        self.configs.push(config.clone());
        self.cells.push(vec![None; self.n_queries]);
        self.retired.push(false);
        Ok(())
    }

    /// Mark the configuration whose cells define `default_perf`.
    pub fn set_default_config(&mut self, id: ConfigId) -> Result<()> {
        self.slot(id)?;
        self.default_config = Some(id);
        Ok(())
    }

    pub fn default_config(&self) -> Option<ConfigId> {
        self.default_config
    }

    /// Latency of `q` under the default configuration, if recorded.
    pub fn default_perf(&self, q: usize) -> Option<f64> {
        self.default_config.and_then(|id| self.get(q, id))
    }

    fn slot(&self, id: ConfigId) -> Result<usize> {
        self.slots.get(&id).copied().ok_or(Error::UnknownConfig(id))
    }

    /// Store `H[q, θ]`. Re-recording an identical value is accepted; a
    /// different value for an existing cell is an error.
    pub fn record(&mut self, q: usize, config: ConfigId, latency: f64) -> Result<()> {
        let slot = self.slot(config)?;
        if q >= self.n_queries {
            return Err(Error::UnknownQuery(format!("#{q}")));
        }
        if !(latency > 0.0 && latency.is_finite()) {
            return Err(Error::NonPositiveLatency {
                query: q,
                config,
                latency,
            });
        }
        match self.cells[slot][q] {
            Some(stored) if stored != latency => Err(Error::ConflictingCell {
                query: q,
                config,
                stored,
                new: latency,
            }),
            _ => {
                self.cells[slot][q] = Some(latency);
                Ok(())
            }
        }
    }

    pub fn get(&self, q: usize, config: ConfigId) -> Option<f64> {
        let slot = *self.slots.get(&config)?;
        self.cells[slot].get(q).copied().flatten()
    }

    /// Exclude a configuration from future backfills. Its recorded cells stay
    /// usable, but it no longer counts towards lacked history.
    pub fn retire(&mut self, config: ConfigId) -> Result<()> {
        let slot = self.slot(config)?;
        self.retired[slot] = true;
        Ok(())
    }

    pub fn is_retired(&self, config: ConfigId) -> bool {
        self.slots.get(&config).is_some_and(|&s| self.retired[s])
    }

    fn slot_total(&self, slot: usize, ids: &[usize]) -> Option<f64> {
        let row = &self.cells[slot];
        ids.iter().map(|&q| row.get(q).copied().flatten()).sum()
    }

    /// `H[ids, θ]`: the sum over `ids`, or `None` when any cell is missing.
    pub fn aggregate_cost(&self, ids: &[usize], config: ConfigId) -> Option<f64> {
        let slot = *self.slots.get(&config)?;
        self.slot_total(slot, ids)
    }

    /// Active configurations lacking a cell for `q`.
    pub fn lacked_history(&self, q: usize) -> usize {
        self.cells
            .iter()
            .zip(&self.retired)
            .filter(|(row, &retired)| !retired && row.get(q).copied().flatten().is_none())
            .count()
    }

    /// Configurations with every cell of `ids` present, in registration order.
    pub fn fully_covered_configs(&self, ids: &[usize]) -> Vec<ConfigId> {
        (0..self.configs.len())
            .filter(|&s| self.slot_total(s, ids).is_some())
            .map(|s| self.configs[s].id)
            .collect()
    }

    /// For every active configuration not fully covered on `ids`, the cells
    /// that would have to be executed to complete it.
    pub fn missing_cells(&self, ids: &[usize]) -> Vec<(ConfigId, Vec<usize>)> {
        (0..self.configs.len())
            .filter(|&s| !self.retired[s])
            .filter_map(|s| {
                let missing: Vec<usize> = ids
                    .iter()
                    .copied()
                    .filter(|&q| self.cells[s][q].is_none())
                    .collect();
                (!missing.is_empty()).then(|| (self.configs[s].id, missing))
            })
            .collect()
    }

    /// Totals over both query sets for every configuration covered on both,
    /// in registration order.
    pub fn paired_totals(&self, sub: &[usize], full: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut sub_totals = Vec::new();
        let mut full_totals = Vec::new();
        for s in 0..self.configs.len() {
            if let (Some(a), Some(b)) = (self.slot_total(s, sub), self.slot_total(s, full)) {
                sub_totals.push(a);
                full_totals.push(b);
            }
        }
        (sub_totals, full_totals)
    }

    /// `R(sub, full)`: fraction of configuration pairs ranked the same way by
    /// both query sets, over configurations fully covered on both.
    pub fn representativity(&self, sub: &[usize], full: &[usize]) -> f64 {
        if sub.is_empty() {
            return NEUTRAL_REPRESENTATIVITY;
        }
        let (sub_totals, full_totals) = self.paired_totals(sub, full);
        concordance_ratio(&full_totals, &sub_totals)
    }

    /// Write `history.jsonl` and `configs.json` into `dir`.
    pub fn save(&self, dir: &Path, workload: &Workload, space: &ConfigSpace) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(std::fs::File::create(dir.join("history.jsonl"))?);
        for (slot, config) in self.configs.iter().enumerate() {
            for (q, cell) in self.cells[slot].iter().enumerate() {
                if let Some(latency) = cell {
                    let line = CellLine {
                        query: workload.query(q).id.clone(),
                        config: config.id,
                        latency: *latency,
                    };
                    serde_json::to_writer(&mut out, &line)?;
                    out.write_all(b"\n")?;
                }
            }
        }
        out.flush()?;
        let registry = RegistryFile {
            default_config: self.default_config,
            configs: self
                .configs
                .iter()
                .zip(&self.retired)
                .map(|(c, &retired)| RegistryEntry {
                    id: c.id,
                    values: space.to_json_map(&c.values),
                    retired,
                })
                .collect(),
        };
        std::fs::write(dir.join("configs.json"), serde_json::to_string_pretty(&registry)?)?;
        Ok(())
    }

    /// Rebuild a history previously written by [`save`](Self::save).
    pub fn load(dir: &Path, workload: &Workload, space: &ConfigSpace) -> Result<Self> {
        let registry: RegistryFile =
            serde_json::from_str(&std::fs::read_to_string(dir.join("configs.json"))?)?;
        let mut h = RunHistory::new(workload.len());
        for entry in &registry.configs {
            let values = space.from_json_map(&entry.values)?;
            h.register(&Configuration {
                id: entry.id,
                values,
            })?;
            if entry.retired {
                h.retire(entry.id)?;
            }
        }
        if let Some(id) = registry.default_config {
            h.set_default_config(id)?;
        }
        let reader = BufReader::new(std::fs::File::open(dir.join("history.jsonl"))?);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cell: CellLine = serde_json::from_str(&line)?;
            h.record(workload.index_of(&cell.query)?, cell.config, cell.latency)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CellLine {
    query: String,
    config: ConfigId,
    latency: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryEntry {
    id: ConfigId,
    values: Map<String, Value>,
    #[serde(default)]
    retired: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryFile {
    default_config: Option<ConfigId>,
    configs: Vec<RegistryEntry>,
}

/// Concordant-pair ratio between two aligned total vectors.
///
/// The pair `(j, k)` with `j < k` is concordant when
/// `[a_j ≤ a_k] == [b_j ≤ b_k]`. Fewer than two entries give
/// [`NEUTRAL_REPRESENTATIVITY`].
pub fn concordance_ratio(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return NEUTRAL_REPRESENTATIVITY;
    }
    let mut concordant = 0usize;
    for j in 0..n {
        for k in (j + 1)..n {
            if (a[j] <= a[k]) == (b[j] <= b[k]) {
                concordant += 1;
            }
        }
    }
    2.0 * concordant as f64 / (n * (n - 1)) as f64
}
