//! End-of-slice verification: pruning, hybrid exploit/explore ranking,
//! full-workload measurement and the global surrogate built from it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config_space::{encode, set_similarity, Configuration};
use crate::context::TuningContext;
use crate::error::{Error, Result};
use crate::executor::penalty_for;
use crate::forest::{ForestParams, SurrogateModel};
use crate::subset_tuner::Proposal;
use crate::trace::TraceEvent;
use crate::workload::CompressedWorkload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exploit,
    Explore,
}

#[derive(Debug, Clone)]
pub struct VerifierState {
    pub global: Option<SurrogateModel>,
    /// Configurations with a known full-workload latency (or its penalty).
    pub labeled: Vec<(Configuration, f64)>,
    pub default_full_perf: f64,
    pub alpha: f64,
    pub explore_prune_factor: f64,
    pub forest: ForestParams,
    refits: u64,
}

impl VerifierState {
    pub fn new(default_full_perf: f64, alpha: f64, explore_prune_factor: f64, forest: ForestParams) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidSession(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(default_full_perf > 0.0) {
            return Err(Error::InvalidSession("default performance must be positive".into()));
        }
        Ok(Self {
            global: None,
            labeled: Vec::new(),
            default_full_perf,
            alpha,
            explore_prune_factor,
            forest,
            refits: 0,
        })
    }

    /// Add a labeled point without refitting.
    pub fn label(&mut self, config: Configuration, full_latency: f64) {
        self.labeled.push((config, full_latency));
    }

    /// Refit the global surrogate on all of `D`. Targets are full latencies
    /// relative to the default, so the reported variance is unit-free.
    pub fn refit(&mut self, ctx: &TuningContext) -> Result<()> {
        let (x, y): (Vec<Vec<f64>>, Vec<f64>) = self
            .labeled
            .iter()
            .map(|(c, l)| (encode(&c.values, &ctx.space), *l / self.default_full_perf))
            .unzip();
        let mut params = self.forest.clone();
        params.seed = self.forest.seed.wrapping_add(self.refits);
        params.categorical = ctx.space.categorical_mask();
        self.refits += 1;
        self.global = Some(SurrogateModel::fit(&x, &y, &params)?);
        Ok(())
    }

    /// Predicted full latency in seconds and the relative variance.
    pub fn predict(&self, features: &[f64]) -> Result<(f64, f64)> {
        let model = self.global.as_ref().ok_or(Error::NoSurrogate)?;
        let (mean, var) = model.predict_with_uncertainty(features);
        Ok((mean * self.default_full_perf, var))
    }
}

/// `−[(1 − |W′|/|W|) · RF(θ) + cost(W′)]`; higher is better.
pub fn exploit_score(predicted_full: f64, subset_cost: f64, sub_size: usize, full_size: usize) -> f64 {
    let weight = 1.0 - sub_size as f64 / full_size as f64;
    -(weight * predicted_full + subset_cost)
}

/// `α · (1 − Φ) + (1 − α) · Ψ`.
pub fn explore_potential(similarity: f64, variance: f64, alpha: f64) -> f64 {
    alpha * (1.0 - similarity) + (1.0 - alpha) * variance
}

/// One draw per slice: explore with probability `eta`.
pub fn choose_mode<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> Mode {
    if rng.gen::<f64>() < eta {
        Mode::Explore
    } else {
        Mode::Exploit
    }
}

/// Keep proposals no worse than the default on the subset (exploit) or
/// within `factor` of it (explore). Penalized proposals never survive.
pub fn prune_candidates<'a>(
    proposals: &'a [Proposal],
    mode: Mode,
    default_subset_cost: f64,
    factor: f64,
) -> Vec<&'a Proposal> {
    let limit = match mode {
        Mode::Exploit => default_subset_cost,
        Mode::Explore => factor * default_subset_cost,
    };
    proposals
        .iter()
        .filter(|p| !p.penalized && p.subset_cost <= limit)
        .collect()
}

/// `ceil(alpha · quota)`, computed without floating-point drift on exact products.
pub fn verification_count(alpha: f64, quota: usize) -> usize {
    let raw = alpha * quota as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Rank survivors and keep the top `ceil(alpha · quota)`. Without a global
/// surrogate the ranking is by subset cost; otherwise by exploit score or
/// explore potential depending on `mode`. Ties go to the lower id.
pub fn score_and_select<'a>(
    survivors: &[&'a Proposal],
    mode: Mode,
    state: &VerifierState,
    ctx: &TuningContext,
    sub: &CompressedWorkload,
    quota: usize,
) -> Result<Vec<&'a Proposal>> {
    let keys: Vec<f64> = match &state.global {
        None => survivors.iter().map(|p| p.subset_cost).collect(),
        Some(_) => {
            let mut keys = Vec::with_capacity(survivors.len());
            for p in survivors {
                let (mean, var) = state.predict(&encode(&p.config.values, &ctx.space))?;
                let score = match mode {
                    Mode::Exploit => exploit_score(mean, p.subset_cost, sub.len(), ctx.workload.len()),
                    Mode::Explore => {
                        let phi = set_similarity(
                            &p.config.values,
                            state.labeled.iter().map(|(c, _)| c.values.as_slice()),
                            &ctx.space,
                        )?;
                        explore_potential(phi, var, state.alpha)
                    }
                };
                // Sort ascending on the key below.
                keys.push(-score);
            }
            keys
        }
    };
    let mut order: Vec<usize> = (0..survivors.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .total_cmp(&keys[b])
            .then(survivors[a].config.id.cmp(&survivors[b].config.id))
    });
    let take = verification_count(state.alpha, quota).min(order.len());
    Ok(order[..take].iter().map(|&i| survivors[i]).collect())
}

/// Measure `theta` on the full workload by executing only its missing cells,
/// then add it to `D` and refit. Returns `None` when the budget was already
/// spent; the full latency (or penalty) otherwise.
pub fn verify_on_full_workload(
    ctx: &mut TuningContext,
    state: &mut VerifierState,
    theta: &Configuration,
) -> Result<Option<f64>> {
    let all = ctx.workload.all_indices();
    let missing: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&q| ctx.history.get(q, theta.id).is_none())
        .collect();
    let full = if missing.is_empty() {
        ctx.history
            .aggregate_cost(&all, theta.id)
            .ok_or(Error::UnknownConfig(theta.id))?
    } else {
        let Some(outcome) = ctx.execute(&theta.values, &missing)? else {
            return Ok(None);
        };
        if outcome.is_ok() {
            ctx.record_outcome(theta, &missing, &outcome)?;
            ctx.history
                .aggregate_cost(&all, theta.id)
                .expect("verified configuration is covered")
        } else {
            if ctx.history.contains_config(theta.id) {
                ctx.history.retire(theta.id)?;
            }
            penalty_for(&ctx.workload, &all)
        }
    };
    let measured = ctx.history.aggregate_cost(&all, theta.id).is_some();
    if measured {
        ctx.observe_full(full, theta.id);
    }
    ctx.log(TraceEvent::Verify, theta.id);
    state.label(theta.clone(), full);
    state.refit(ctx)?;
    Ok(Some(full))
}
