//! Workload compression: cold-start subset selection, the
//! representativity-driven greedy and the compression-ratio schedule.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{concordance_ratio, RunHistory, NEUTRAL_REPRESENTATIVITY};
use crate::workload::{CompressedWorkload, Workload};

/// Slack allowed when comparing a subset cost against its budget.
pub const BUDGET_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorParams {
    pub eta0: f64,
    pub eta_step: f64,
    pub eta_floor: f64,
    /// Weight of the lacked-history penalty in the marginal gain.
    pub beta: f64,
}

impl Default for CompressorParams {
    fn default() -> Self {
        Self {
            eta0: 0.75,
            eta_step: 0.1,
            eta_floor: 0.0,
            beta: 0.1,
        }
    }
}

impl CompressorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSession(m.to_string()));
        if !(self.eta0 > 0.0 && self.eta0 < 1.0) {
            return bad("eta0 must lie in (0, 1)");
        }
        if !(self.eta_step > 0.0 && self.eta_step <= self.eta0) {
            return bad("eta step must lie in (0, eta0]");
        }
        if !(self.eta_floor >= 0.0 && self.eta_floor <= self.eta0) {
            return bad("eta floor must lie in [0, eta0]");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialStrategy {
    Random,
    Coverage,
}

/// `B = (1 − η) · c(W)`.
pub fn budget_for(workload: &Workload, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidRatio(eta));
    }
    let budget = (1.0 - eta) * workload.total_cost();
    let min_cost = workload.min_cost();
    if min_cost > budget + BUDGET_EPS {
        return Err(Error::BudgetBelowMinCost { budget, min_cost });
    }
    Ok(budget)
}

fn fits(spent: f64, cost: f64, budget: f64) -> bool {
    spent + cost <= budget + BUDGET_EPS
}

fn tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Cold-start subset for the first slice (no runtime profile yet).
///
/// * `Random`: walk a seeded shuffle and keep every query that still fits.
/// * `Coverage`: repeatedly take the query adding the most unseen text tokens
///   per second of default cost (ties: cheaper, then earlier).
pub fn initial_subset(
    workload: &Workload,
    eta: f64,
    seed: u64,
    strategy: InitialStrategy,
) -> Result<CompressedWorkload> {
    let budget = budget_for(workload, eta)?;
    let mut chosen = Vec::new();
    let mut spent = 0.0;
    match strategy {
        InitialStrategy::Random => {
            let mut order = workload.all_indices();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for q in order {
                let c = workload.query(q).default_cost;
                if fits(spent, c, budget) {
                    spent += c;
                    chosen.push(q);
                }
            }
        }
        InitialStrategy::Coverage => {
            let token_sets: Vec<HashSet<String>> =
                workload.queries().iter().map(|q| tokens(&q.text)).collect();
            let mut covered: HashSet<&str> = HashSet::new();
            let mut taken = vec![false; workload.len()];
            loop {
                let mut best: Option<(f64, f64, usize)> = None;
                for q in 0..workload.len() {
                    let c = workload.query(q).default_cost;
                    if taken[q] || !fits(spent, c, budget) {
                        continue;
                    }
                    let fresh = token_sets[q]
                        .iter()
                        .filter(|t| !covered.contains(t.as_str()))
                        .count();
                    let score = fresh as f64 / c;
                    let better = match best {
                        None => true,
                        Some((bs, bc, _)) => score > bs || (score == bs && c < bc),
                    };
                    if better {
                        best = Some((score, c, q));
                    }
                }
                let Some((_, c, q)) = best else { break };
                taken[q] = true;
                spent += c;
                chosen.push(q);
                covered.extend(token_sets[q].iter().map(String::as_str));
            }
        }
    }
    CompressedWorkload::new(workload, chosen)
}

/// `ΔR / c(q) − β · lacked_history(q)` for adding `q` to `sub`, where
/// `ΔR = R(sub ∪ {q}, W) − R(sub, W)`.
pub fn marginal_gain(
    q: usize,
    sub: &[usize],
    workload: &Workload,
    history: &RunHistory,
    beta: f64,
) -> f64 {
    let full = workload.all_indices();
    let mut with_q = sub.to_vec();
    with_q.push(q);
    let delta = history.representativity(&with_q, &full) - history.representativity(sub, &full);
    delta / workload.query(q).default_cost - beta * history.lacked_history(q) as f64
}

/// One step taken by [`greedy_compress_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPick {
    pub query: usize,
    pub gain: f64,
}

/// Budgeted greedy maximizing representativity, see [`greedy_compress_traced`].
pub fn greedy_compress(
    workload: &Workload,
    history: &RunHistory,
    eta: f64,
    beta: f64,
) -> Result<CompressedWorkload> {
    greedy_compress_traced(workload, history, eta, beta).map(|(sub, _)| sub)
}

/// Start from the empty set and repeatedly add the affordable query with the
/// largest marginal gain (ties: cheaper, then earlier) until nothing else
/// fits the budget. Negative gains are still taken; only the budget stops
/// the loop. Returns the subset and the picks in order.
pub fn greedy_compress_traced(
    workload: &Workload,
    history: &RunHistory,
    eta: f64,
    beta: f64,
) -> Result<(CompressedWorkload, Vec<GreedyPick>)> {
    let budget = budget_for(workload, eta)?;
    let full = workload.all_indices();

    // Configurations covered on the full workload are covered on any subset,
    // so they are exactly the set representativity ranges over.
    let covered = history.fully_covered_configs(&full);
    let full_totals: Vec<f64> = covered
        .iter()
        .map(|&id| history.aggregate_cost(&full, id).expect("covered"))
        .collect();
    let cells: Vec<Vec<f64>> = (0..workload.len())
        .map(|q| {
            covered
                .iter()
                .map(|&id| history.get(q, id).expect("covered"))
                .collect()
        })
        .collect();
    let lacked: Vec<f64> = (0..workload.len())
        .map(|q| history.lacked_history(q) as f64)
        .collect();

    let mut sub_totals = vec![0.0; covered.len()];
    let mut current_r = NEUTRAL_REPRESENTATIVITY;
    let mut in_sub = vec![false; workload.len()];
    let mut chosen = Vec::new();
    let mut picks = Vec::new();
    let mut spent = 0.0;
    let mut scratch = vec![0.0; covered.len()];

    loop {
        let mut best: Option<(f64, f64, usize, f64)> = None;
        for q in 0..workload.len() {
            let c = workload.query(q).default_cost;
            if in_sub[q] || !fits(spent, c, budget) {
                continue;
            }
            for (s, (&t, &cell)) in scratch.iter_mut().zip(sub_totals.iter().zip(&cells[q])) {
                *s = t + cell;
            }
            let r = concordance_ratio(&full_totals, &scratch);
            let gain = (r - current_r) / c - beta * lacked[q];
            let better = match best {
                None => true,
                Some((bg, bc, _, _)) => gain > bg || (gain == bg && c < bc),
            };
            if better {
                best = Some((gain, c, q, r));
            }
        }
        let Some((gain, c, q, r)) = best else { break };
        in_sub[q] = true;
        spent += c;
        chosen.push(q);
        picks.push(GreedyPick { query: q, gain });
        for (t, &cell) in sub_totals.iter_mut().zip(&cells[q]) {
            *t += cell;
        }
        current_r = r;
    }
    Ok((CompressedWorkload::new(workload, chosen)?, picks))
}

/// Keep `η` after an improving slice, otherwise step it down to the floor.
pub fn adapt_ratio(eta: f64, improved: bool, params: &CompressorParams) -> f64 {
    if improved {
        eta
    } else {
        (eta - params.eta_step).max(params.eta_floor)
    }
}
