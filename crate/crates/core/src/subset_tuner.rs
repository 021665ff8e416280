//! Per-slice Bayesian optimization over the current query subset.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::config_space::{encode, sample_lhs, Assignment, ConfigId, ConfigSpace, Configuration, KnobValue};
use crate::context::TuningContext;
use crate::error::Result;
use crate::executor::penalty_for;
use crate::forest::{ForestParams, SurrogateModel};
use crate::trace::TraceEvent;
use crate::workload::CompressedWorkload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerParams {
    /// Objective observations per slice.
    pub quota: usize,
    /// Below this many reusable training pairs a slice starts with an LHS design.
    pub lhs_floor: usize,
    pub random_candidates: usize,
    pub neighbor_candidates: usize,
    /// Half-width of the unit-scale box used for neighborhood perturbations.
    pub neighbor_radius: f64,
    /// Re-draws allowed when the optimizer keeps proposing known configurations.
    pub max_duplicate_retries: usize,
    pub forest: ForestParams,
}

impl Default for TunerParams {
    fn default() -> Self {
        Self {
            quota: 20,
            lhs_floor: 10,
            random_candidates: 2000,
            neighbor_candidates: 10,
            neighbor_radius: 0.1,
            max_duplicate_retries: 50,
            forest: ForestParams {
                log_target: true,
                ..ForestParams::default()
            },
        }
    }
}

/// Output of [`bootstrap_training_set`].
#[derive(Debug, Clone, Default)]
pub struct Bootstrap {
    pub pairs: Vec<(Configuration, f64)>,
    /// Pairs available without any execution.
    pub reused: usize,
    /// Query executions requested to complete partially covered configurations.
    pub executed_cells: usize,
    /// Configurations whose completion run failed; they were retired.
    pub skipped: Vec<ConfigId>,
    /// Set when the budget ran out before every configuration was completed.
    pub interrupted: bool,
}

/// Training pairs for the subset, completing partially covered
/// configurations by executing exactly their missing cells (one request per
/// configuration). Pairs come out in history registration order.
pub fn bootstrap_training_set(ctx: &mut TuningContext, sub: &CompressedWorkload) -> Result<Bootstrap> {
    let ids = sub.members();
    let mut out = Bootstrap::default();
    let configs = ctx.history.configs().to_vec();
    for config in configs {
        if let Some(total) = ctx.history.aggregate_cost(ids, config.id) {
            out.pairs.push((config, total));
            out.reused += 1;
            continue;
        }
        if ctx.history.is_retired(config.id) || out.interrupted {
            continue;
        }
        let missing: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&q| ctx.history.get(q, config.id).is_none())
            .collect();
        let Some(outcome) = ctx.execute(&config.values, &missing)? else {
            out.interrupted = true;
            continue;
        };
        out.executed_cells += missing.len();
        if outcome.is_ok() {
            ctx.record_outcome(&config, &missing, &outcome)?;
            let total = ctx
                .history
                .aggregate_cost(ids, config.id)
                .expect("backfilled configuration is covered");
            ctx.log(TraceEvent::Backfill, config.id);
            out.pairs.push((config, total));
        } else {
            ctx.history.retire(config.id)?;
            ctx.log(TraceEvent::Backfill, config.id);
            out.skipped.push(config.id);
        }
    }
    Ok(out)
}

/// `E[max(incumbent − Y, 0)]` for `Y ~ N(mean, var)`.
pub fn expected_improvement(mean: f64, var: f64, incumbent: f64) -> f64 {
    let improvement = incumbent - mean;
    if var <= 0.0 {
        return improvement.max(0.0);
    }
    let sd = var.sqrt();
    let z = improvement / sd;
    let n = Normal::standard();
    improvement * n.cdf(z) + sd * n.pdf(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub values: Assignment,
    pub ei: f64,
    /// The model had zero variance everywhere and a random candidate was taken.
    pub random_fallback: bool,
}

/// The seeded candidate pool: uniform draws followed by perturbations of
/// the incumbent (when known).
pub fn candidate_pool(
    space: &ConfigSpace,
    seed: u64,
    incumbent: Option<&[KnobValue]>,
    params: &TunerParams,
) -> Vec<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Assignment> = (0..params.random_candidates)
        .map(|_| space.sample_uniform(&mut rng))
        .collect();
    if let Some(center) = incumbent {
        let flip = 1.0 / space.len().max(1) as f64;
        for _ in 0..params.neighbor_candidates {
            let neighbor = space
                .knobs()
                .iter()
                .zip(center)
                .map(|(knob, v)| match knob.choice_count() {
                    Some(n) => {
                        if rng.gen_bool(flip) {
                            KnobValue::Choice(rng.gen_range(0..n))
                        } else {
                            *v
                        }
                    }
                    None => {
                        let u = knob.to_unit(v).unwrap_or(0.5);
                        let r = params.neighbor_radius;
                        knob.from_unit((u + rng.gen_range(-r..=r)).clamp(0.0, 1.0))
                    }
                })
                .collect();
            pool.push(neighbor);
        }
    }
    pool
}

/// Maximize expected improvement over [`candidate_pool`]; the first
/// candidate wins ties.
pub fn propose_configuration(
    model: &SurrogateModel,
    space: &ConfigSpace,
    seed: u64,
    incumbent: Option<&[KnobValue]>,
    incumbent_cost: f64,
    params: &TunerParams,
) -> Acquisition {
    let mut pool = candidate_pool(space, seed, incumbent, params);
    let features: Vec<Vec<f64>> = pool.iter().map(|c| encode(c, space)).collect();
    let preds = model.predict_many(&features);
    if preds.iter().all(|&(_, v)| v == 0.0) {
        return Acquisition {
            values: pool[0].clone(),
            ei: expected_improvement(preds[0].0, 0.0, incumbent_cost),
            random_fallback: true,
        };
    }
    let mut best = 0;
    let mut best_ei = f64::NEG_INFINITY;
    for (i, &(m, v)) in preds.iter().enumerate() {
        let ei = expected_improvement(m, v, incumbent_cost);
        if ei > best_ei {
            best_ei = ei;
            best = i;
        }
    }
    Acquisition {
        values: pool.swap_remove(best),
        ei: best_ei,
        random_fallback: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Lhs,
    Acquisition,
    RandomFallback,
}

/// One objective observation made during a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub config: Configuration,
    /// Measured subset total, or the penalty.
    pub subset_cost: f64,
    pub penalized: bool,
    pub origin: Origin,
}

#[derive(Debug, Clone)]
pub struct SliceState {
    pub index: usize,
    pub subset: CompressedWorkload,
    /// Everything the local surrogate is trained on.
    pub training: Vec<(Assignment, f64)>,
    pub proposals: Vec<Proposal>,
    pub surrogate: Option<SurrogateModel>,
    /// Lowest objective value in `training`.
    pub incumbent: f64,
    pub bootstrap_pairs: usize,
    pub backfilled_cells: usize,
    pub random_fallbacks: usize,
    pub skipped_duplicates: usize,
    lhs_queue: VecDeque<Assignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// A new proposal was evaluated; the payload indexes `proposals`.
    Evaluated(usize),
    QuotaReached,
    BudgetExhausted,
}

impl SliceState {
    pub fn valid_evaluations(&self) -> usize {
        self.proposals.len()
    }

    /// Lowest-cost training point, used as the center of the neighborhood.
    fn incumbent_values(&self) -> Option<&[KnobValue]> {
        self.training
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(v, _)| v.as_slice())
    }

    fn known_here(&self, values: &[KnobValue]) -> bool {
        self.training.iter().any(|(v, _)| v == values)
    }
}

/// Bootstrap the slice's training set and queue an LHS design when too few
/// reusable pairs exist. Known failures enter the training set with the
/// subset penalty.
pub fn start_slice(
    ctx: &mut TuningContext,
    index: usize,
    subset: CompressedWorkload,
    params: &TunerParams,
    rng: &mut ChaCha8Rng,
) -> Result<SliceState> {
    let boot = bootstrap_training_set(ctx, &subset)?;
    let penalty = penalty_for(&ctx.workload, subset.members());
    let mut training: Vec<(Assignment, f64)> =
        boot.pairs.iter().map(|(c, t)| (c.values.clone(), *t)).collect();
    training.extend(ctx.failures.iter().map(|f| (f.clone(), penalty)));
    let lhs_seed: u64 = rng.gen();
    let lhs_queue = if boot.pairs.len() < params.lhs_floor {
        sample_lhs(&ctx.space, params.lhs_floor, lhs_seed).into()
    } else {
        VecDeque::new()
    };
    let incumbent = training.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    Ok(SliceState {
        index,
        subset,
        training,
        proposals: Vec::new(),
        surrogate: None,
        incumbent,
        bootstrap_pairs: boot.pairs.len(),
        backfilled_cells: boot.executed_cells,
        random_fallbacks: 0,
        skipped_duplicates: 0,
        lhs_queue,
    })
}

fn next_candidate(
    ctx: &TuningContext,
    state: &mut SliceState,
    params: &TunerParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Assignment, Origin)> {
    while let Some(values) = state.lhs_queue.pop_front() {
        if ctx.is_known(&values) || state.known_here(&values) {
            state.skipped_duplicates += 1;
            continue;
        }
        return Ok((values, Origin::Lhs));
    }
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = state
        .training
        .iter()
        .map(|(v, c)| (encode(v, &ctx.space), *c))
        .unzip();
    let mut forest = params.forest.clone();
    forest.seed = rng.gen();
    forest.categorical = ctx.space.categorical_mask();
    let model = SurrogateModel::fit(&x, &y, &forest)?;
    let incumbent_values = state.incumbent_values().map(<[KnobValue]>::to_vec);
    let mut result = None;
    for _ in 0..=params.max_duplicate_retries {
        let draw = propose_configuration(
            &model,
            &ctx.space,
            rng.gen(),
            incumbent_values.as_deref(),
            state.incumbent,
            params,
        );
        if ctx.is_known(&draw.values) || state.known_here(&draw.values) {
            state.skipped_duplicates += 1;
            continue;
        }
        let origin = if draw.random_fallback {
            state.random_fallbacks += 1;
            Origin::RandomFallback
        } else {
            Origin::Acquisition
        };
        result = Some((draw.values, origin));
        break;
    }
    state.surrogate = Some(model);
    match result {
        Some(r) => Ok(r),
        None => loop {
            // The acquisition keeps landing on known points; take a fresh uniform draw.
            let values = ctx.space.sample_uniform(rng);
            if !ctx.is_known(&values) && !state.known_here(&values) {
                state.random_fallbacks += 1;
                return Ok((values, Origin::RandomFallback));
            }
        },
    }
}

/// Produce and evaluate the next proposal. The caller logs the evaluation
/// (after any bookkeeping of its own) so the trace sees the updated best.
pub fn step(
    ctx: &mut TuningContext,
    state: &mut SliceState,
    params: &TunerParams,
    rng: &mut ChaCha8Rng,
) -> Result<Step> {
    if state.valid_evaluations() >= params.quota {
        return Ok(Step::QuotaReached);
    }
    if ctx.exhausted() {
        return Ok(Step::BudgetExhausted);
    }
    let (values, origin) = next_candidate(ctx, state, params, rng)?;
    let config = ctx.new_config(values);
    let queries = state.subset.members().to_vec();
    let Some(outcome) = ctx.execute(&config.values, &queries)? else {
        return Ok(Step::BudgetExhausted);
    };
    ctx.record_outcome(&config, &queries, &outcome)?;
    let cost = outcome.total();
    state.incumbent = state.incumbent.min(cost);
    state.training.push((config.values.clone(), cost));
    state.proposals.push(Proposal {
        config,
        subset_cost: cost,
        penalized: !outcome.is_ok(),
        origin,
    });
    Ok(Step::Evaluated(state.proposals.len() - 1))
}

/// Run the slice until the quota of objective observations is met or the
/// budget runs out. Returns true when the quota was met.
pub fn run_slice(
    ctx: &mut TuningContext,
    state: &mut SliceState,
    params: &TunerParams,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    loop {
        match step(ctx, state, params, rng)? {
            Step::Evaluated(i) => {
                let p = &state.proposals[i];
                let event = if p.origin == Origin::Lhs {
                    TraceEvent::Lhs
                } else {
                    TraceEvent::SubsetEval
                };
                let id = p.config.id;
                ctx.log(event, id);
            }
            Step::QuotaReached => return Ok(true),
            Step::BudgetExhausted => return Ok(false),
        }
    }
}
