use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{penalty_for, EvalOutcome, EvalRequest, Executor};
use crate::config_space::{ConfigSpace, KnobValue};
use crate::error::{Error, Result};
use crate::workload::Workload;

/// Axis-aligned box in unit space. A configuration whose unit positions fall
/// inside every listed interval crashes the simulated database.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureRegion {
    /// `(knob index, low, high)` in unit coordinates.
    pub bounds: Vec<(usize, f64, f64)>,
}

impl FailureRegion {
    pub fn contains(&self, space: &ConfigSpace, values: &[KnobValue]) -> bool {
        !self.bounds.is_empty()
            && self.bounds.iter().all(|&(k, lo, hi)| {
                space.knobs()[k]
                    .to_unit(&values[k])
                    .is_some_and(|u| u >= lo && u <= hi)
            })
    }
}

/// Seeded log-linear latency model.
///
/// ```text
/// latency(q, θ) = c(q) · exp( Σ_k w[q][k] · r_k(θ_k) )
/// numeric:     r_k = (x − o[q][k])² − (x_def − o[q][k])²
/// categorical: r_k = s[q][k][v] − s[q][k][v_def]
/// ```
///
/// `x` is the knob's unit-scale position, so the exponent vanishes at the
/// default configuration and every query runs at exactly its default cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub seed: u64,
    pub space: ConfigSpace,
    /// Default cost per query.
    pub base: Vec<f64>,
    /// `[query][knob]` sensitivity in `[-0.5, 0.5]`.
    pub weights: Vec<Vec<f64>>,
    /// `[query][knob]` preferred unit position (numeric knobs only).
    pub optima: Vec<Vec<f64>>,
    /// `[query][knob][choice]` offsets in `[-1, 1]` (categorical knobs only).
    pub offsets: Vec<Vec<Vec<f64>>>,
    pub failure: Option<FailureRegion>,
    default_units: Vec<f64>,
    default_choices: Vec<usize>,
}

/// Fraction of the unit hypercube covered by the failure box.
const FAILURE_VOLUME: f64 = 0.05;

impl SimModel {
    /// Draw a model for `workload` over `space`.
    ///
    /// Knobs carry a shared sensitivity and optimum; each query perturbs them,
    /// and ignores a random subset of knobs entirely, so different queries
    /// prefer different settings while the workload still has a common trend.
    pub fn generate(workload: &Workload, space: &ConfigSpace, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5111_u64);
        let n_knobs = space.len();

        let mut knob_weight: Vec<f64> = Vec::with_capacity(n_knobs);
        let mut knob_optimum: Vec<f64> = Vec::with_capacity(n_knobs);
        let mut knob_offsets = Vec::with_capacity(n_knobs);
        for knob in space.knobs() {
            let w = if rng.gen_bool(0.8) {
                rng.gen_range(0.1..0.45)
            } else {
                rng.gen_range(-0.15..0.1)
            };
            knob_weight.push(w);
            knob_optimum.push(rng.gen_range(0.0..1.0));
            let choices = knob.choice_count().unwrap_or(0);
            knob_offsets.push((0..choices).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        }

        let mut weights = Vec::with_capacity(workload.len());
        let mut optima = Vec::with_capacity(workload.len());
        let mut offsets = Vec::with_capacity(workload.len());
        for _ in workload.queries() {
            let mut wq = Vec::with_capacity(n_knobs);
            let mut oq = Vec::with_capacity(n_knobs);
            let mut sq = Vec::with_capacity(n_knobs);
            for k in 0..n_knobs {
                let relevant = rng.gen_bool(0.7);
                let w = if relevant {
                    (knob_weight[k] + rng.gen_range(-0.15..0.15)).clamp(-0.5, 0.5)
                } else {
                    rng.gen_range(-0.05..0.05)
                };
                wq.push(w);
                oq.push((knob_optimum[k] + rng.gen_range(-0.25..0.25)).clamp(0.0, 1.0));
                sq.push(
                    knob_offsets[k]
                        .iter()
                        .map(|s: &f64| (s + rng.gen_range(-0.4..0.4)).clamp(-1.0, 1.0))
                        .collect(),
                );
            }
            weights.push(wq);
            optima.push(oq);
            offsets.push(sq);
        }

        let mut model = Self::from_parts(
            seed,
            space.clone(),
            workload.queries().iter().map(|q| q.default_cost).collect(),
            weights,
            optima,
            offsets,
            None,
        );
        model.failure = model.draw_failure_region(&mut rng);
        model
    }

    /// Assemble a model from explicit parameters (used for hand-built fixtures).
    pub fn from_parts(
        seed: u64,
        space: ConfigSpace,
        base: Vec<f64>,
        weights: Vec<Vec<f64>>,
        optima: Vec<Vec<f64>>,
        offsets: Vec<Vec<Vec<f64>>>,
        failure: Option<FailureRegion>,
    ) -> Self {
        let defaults = space.default_assignment();
        let default_units = space
            .knobs()
            .iter()
            .zip(&defaults)
            .map(|(k, v)| k.to_unit(v).unwrap_or(0.0))
            .collect();
        let default_choices = defaults.iter().map(|v| v.as_choice().unwrap_or(0)).collect();
        Self {
            seed,
            space,
            base,
            weights,
            optima,
            offsets,
            failure,
            default_units,
            default_choices,
        }
    }

    fn draw_failure_region(&self, rng: &mut ChaCha8Rng) -> Option<FailureRegion> {
        let numeric: Vec<usize> = (0..self.space.len())
            .filter(|&k| !self.space.knobs()[k].is_categorical())
            .collect();
        if numeric.is_empty() {
            return None;
        }
        let dims = numeric.len().min(2);
        let side = FAILURE_VOLUME.powf(1.0 / dims as f64);
        let first = numeric[rng.gen_range(0..numeric.len())];
        let mut chosen = vec![first];
        if dims == 2 {
            loop {
                let k = numeric[rng.gen_range(0..numeric.len())];
                if k != first {
                    chosen.push(k);
                    break;
                }
            }
        }
        // Keep the default configuration outside the box.
        loop {
            let bounds: Vec<(usize, f64, f64)> = chosen
                .iter()
                .map(|&k| {
                    let lo = rng.gen_range(0.0..(1.0 - side));
                    (k, lo, lo + side)
                })
                .collect();
            let region = FailureRegion { bounds };
            if !region.contains(&self.space, &self.space.default_assignment()) {
                return Some(region);
            }
        }
    }

    pub fn query_count(&self) -> usize {
        self.base.len()
    }

    /// Simulated execution time of query `q` under `values`.
    pub fn latency(&self, q: usize, values: &[KnobValue]) -> f64 {
        let mut exponent = 0.0;
        for (k, knob) in self.space.knobs().iter().enumerate() {
            let w = self.weights[q][k];
            if w == 0.0 {
                continue;
            }
            let r = match values[k] {
                KnobValue::Choice(c) => {
                    self.offsets[q][k][c] - self.offsets[q][k][self.default_choices[k]]
                }
                KnobValue::Number(_) => {
                    let x = knob.to_unit(&values[k]).unwrap_or(0.0);
                    let o = self.optima[q][k];
                    let d = self.default_units[k] - o;
                    (x - o).powi(2) - d * d
                }
            };
            exponent += w * r;
        }
        self.base[q] * exponent.exp()
    }

    pub fn fails(&self, values: &[KnobValue]) -> bool {
        self.failure
            .as_ref()
            .is_some_and(|f| f.contains(&self.space, values))
    }
}

/// Executor backed by a [`SimModel`].
#[derive(Debug, Clone)]
pub struct SimExecutor {
    model: SimModel,
    workload: Workload,
}

impl SimExecutor {
    pub fn new(model: SimModel, workload: Workload) -> Self {
        assert_eq!(model.query_count(), workload.len(), "model/workload size mismatch");
        Self { model, workload }
    }

    pub fn from_seed(workload: &Workload, space: &ConfigSpace, seed: u64) -> Self {
        Self::new(SimModel::generate(workload, space, seed), workload.clone())
    }

    pub fn model(&self) -> &SimModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut SimModel {
        &mut self.model
    }
}

impl Executor for SimExecutor {
    fn evaluate(&mut self, req: &EvalRequest<'_>) -> Result<EvalOutcome> {
        if req.queries.is_empty() {
            return Err(Error::EmptyRequest);
        }
        self.model.space.validate(req.config)?;
        if let Some(&bad) = req.queries.iter().find(|&&q| q >= self.workload.len()) {
            return Err(Error::UnknownQuery(format!("#{bad}")));
        }
        let penalized_total = penalty_for(&self.workload, req.queries);
        if self.model.fails(req.config) {
            return Ok(EvalOutcome::Failed { penalized_total });
        }
        let mut elapsed = 0.0;
        let mut latencies = Vec::with_capacity(req.queries.len());
        for &q in req.queries {
            let l = self.model.latency(q, req.config);
            elapsed += l;
            if elapsed > penalized_total {
                return Ok(EvalOutcome::Timeout { penalized_total });
            }
            latencies.push(l);
        }
        Ok(EvalOutcome::Ok { latencies })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{KnobSpec, Scale};
    use crate::workload::Query;

    fn fixture() -> (ConfigSpace, Workload) {
        let space = ConfigSpace::new(vec![
            KnobSpec::continuous("a", 0.0, 1.0, 0.5, Scale::Linear).unwrap(),
            KnobSpec::integer("b", 1, 1024, 32, Scale::Log).unwrap(),
            KnobSpec::categorical("c", &["x", "y", "z"], "y").unwrap(),
        ])
        .unwrap();
        let workload = Workload::new(
            (0..5)
                .map(|i| Query {
                    id: format!("q{i}"),
                    text: String::new(),
                    default_cost: 1.0 + i as f64,
                })
                .collect(),
        )
        .unwrap();
        (space, workload)
    }

    #[test]
    fn default_configuration_is_calibrated() {
        let (space, workload) = fixture();
        let model = SimModel::generate(&workload, &space, 9);
        let def = space.default_assignment();
        for q in 0..workload.len() {
            assert!((model.latency(q, &def) - workload.query(q).default_cost).abs() < 1e-6);
        }
        assert!(!model.fails(&def));
    }

    #[test]
    fn zero_weights_give_default_cost_everywhere() {
        let (space, workload) = fixture();
        let mut model = SimModel::generate(&workload, &space, 3);
        for row in &mut model.weights {
            row.iter_mut().for_each(|w| *w = 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let theta = space.sample_uniform(&mut rng);
            for q in 0..workload.len() {
                assert_eq!(model.latency(q, &theta), workload.query(q).default_cost);
            }
        }
    }

    #[test]
    fn failure_box_has_expected_volume() {
        let (space, workload) = fixture();
        let model = SimModel::generate(&workload, &space, 5);
        let region = model.failure.clone().unwrap();
        let volume: f64 = region.bounds.iter().map(|(_, lo, hi)| hi - lo).product();
        assert!((volume - FAILURE_VOLUME).abs() < 1e-12);
        assert_eq!(region.bounds.len(), 2);
    }

    #[test]
    fn generation_is_seeded() {
        let (space, workload) = fixture();
        assert_eq!(
            SimModel::generate(&workload, &space, 4),
            SimModel::generate(&workload, &space, 4)
        );
        assert_ne!(
            SimModel::generate(&workload, &space, 4),
            SimModel::generate(&workload, &space, 5)
        );
    }
}
