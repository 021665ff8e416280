//! Random-forest regressor used as the tuner's surrogate.
//!
//! Plain CART trees grown on bootstrap resamples with a variance-reduction
//! criterion. Numeric features split on `x <= threshold`; categorical
//! features (ordinal choice indices) split on `x == value` versus the rest.
//! The spread of per-tree predictions is the model's uncertainty.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// Fit `ln y` and report predictions back in seconds.
    pub log_target: bool,
    pub seed: u64,
    /// Marks categorical columns of the encoded feature vector.
    pub categorical: Vec<bool>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
            log_target: false,
            seed: 0,
            categorical: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Rule {
    LessOrEqual(f64),
    Equals(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        rule: Rule,
        left: usize,
        right: usize,
    },
}

/// A single fitted CART regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// A tree that predicts `value` everywhere.
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let goes_left = match rule {
                        Rule::LessOrEqual(t) => x[*feature] <= *t,
                        Rule::Equals(v) => x[*feature] == *v,
                    };
                    at = if goes_left { *left } else { *right };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn depth_of(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + depth_of(nodes, *left).max(depth_of(nodes, *right)),
            }
        }
        depth_of(&self.nodes, 0)
    }

    fn fit(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, params: &ForestParams, rng: &mut ChaCha8Rng) -> Self {
        let mut builder = TreeBuilder {
            x,
            y,
            params,
            n_features: x[0].len(),
            nodes: Vec::new(),
        };
        builder.grow(rows, 0, rng);
        Self { nodes: builder.nodes }
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    n_features: usize,
    nodes: Vec<Node>,
}

struct Candidate {
    sse: f64,
    feature: usize,
    rule: Rule,
}

fn sse(sum: f64, sum_sq: f64, n: usize) -> f64 {
    (sum_sq - sum * sum / n as f64).max(0.0)
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let first = self.y[rows[0]];
        if rows.iter().all(|&r| self.y[r] == first) {
            return first;
        }
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(self.y[r]), hi.max(self.y[r]))
        });
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        mean.clamp(lo, hi)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(&rows)));

        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || rows.len() < self.params.min_samples_split.max(2) {
            return at;
        }
        let Some(best) = self.best_split(&rows, rng) else {
            return at;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
            let v = self.x[r][best.feature];
            match best.rule {
                Rule::LessOrEqual(t) => v <= t,
                Rule::Equals(e) => v == e,
            }
        });
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            rule: best.rule,
            left,
            right,
        };
        at
    }

    fn features_to_try(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match self.params.max_features {
            Some(m) if m < self.n_features => {
                let mut f = sample(rng, self.n_features, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        }
    }

    /// Lowest total SSE; ties keep the earlier feature and the lower threshold.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let parent = sse(total, total_sq, n);
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<Candidate> = None;
        let mut consider = |c: Candidate| {
            if c.sse < parent && best.as_ref().is_none_or(|b| c.sse < b.sse) {
                best = Some(c);
            }
        };

        for feature in self.features_to_try(rng) {
            let categorical = self.params.categorical.get(feature).copied().unwrap_or(false);
            let mut sorted: Vec<(f64, f64)> = rows.iter().map(|&r| (self.x[r][feature], self.y[r])).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                continue;
            }
            if categorical {
                let mut i = 0;
                while i < n {
                    let value = sorted[i].0;
                    let (mut s, mut sq, mut cnt) = (0.0, 0.0, 0usize);
                    while i < n && sorted[i].0 == value {
                        s += sorted[i].1;
                        sq += sorted[i].1 * sorted[i].1;
                        cnt += 1;
                        i += 1;
                    }
                    if cnt < min_leaf || n - cnt < min_leaf {
                        continue;
                    }
                    let split_sse = sse(s, sq, cnt) + sse(total - s, total_sq - sq, n - cnt);
                    consider(Candidate {
                        sse: split_sse,
                        feature,
                        rule: Rule::Equals(value),
                    });
                }
            } else {
                let (mut s, mut sq) = (0.0, 0.0);
                for i in 0..n - 1 {
                    s += sorted[i].1;
                    sq += sorted[i].1 * sorted[i].1;
                    let left = i + 1;
                    if sorted[i].0 == sorted[i + 1].0 || left < min_leaf || n - left < min_leaf {
                        continue;
                    }
                    let split_sse = sse(s, sq, left) + sse(total - s, total_sq - sq, n - left);
                    consider(Candidate {
                        sse: split_sse,
                        feature,
                        rule: Rule::LessOrEqual(0.5 * (sorted[i].0 + sorted[i + 1].0)),
                    });
                }
            }
        }
        best
    }
}

/// Fitted forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    trees: Vec<RegressionTree>,
    n_features: usize,
    training_size: usize,
    log_target: bool,
}

impl SurrogateModel {
    /// Fit `params.n_trees` trees on `(x, y)`. Deterministic given the inputs
    /// and `params.seed`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if x.len() != y.len() {
            return Err(Error::TrainingMismatch(format!("{} inputs vs {} targets", x.len(), y.len())));
        }
        let n_features = x[0].len();
        if let Some(row) = x.iter().find(|r| r.len() != n_features) {
            return Err(Error::TrainingMismatch(format!(
                "feature length {} vs {}",
                row.len(),
                n_features
            )));
        }
        if params.n_trees == 0 {
            return Err(Error::TrainingMismatch("forest needs at least one tree".into()));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite() || (params.log_target && **v <= 0.0)) {
            return Err(Error::TrainingMismatch(format!("unusable target {bad}")));
        }
        let target: Vec<f64> = if params.log_target {
            y.iter().map(|v| v.ln()).collect()
        } else {
            y.to_vec()
        };
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(x, &target, rows, params, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            n_features,
            training_size: n,
            log_target: params.log_target,
        })
    }

    /// Assemble a model from already-built trees.
    pub fn from_trees(trees: Vec<RegressionTree>, n_features: usize) -> Self {
        assert!(!trees.is_empty(), "a forest needs at least one tree");
        Self {
            trees,
            n_features,
            training_size: 0,
            log_target: false,
        }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn training_size(&self) -> usize {
        self.training_size
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Per-tree predictions in seconds.
    pub fn tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_features);
        self.trees
            .iter()
            .map(|t| {
                let p = t.predict(x);
                if self.log_target {
                    p.exp()
                } else {
                    p
                }
            })
            .collect()
    }

    /// Mean and population variance of the per-tree predictions.
    pub fn predict_with_uncertainty(&self, x: &[f64]) -> (f64, f64) {
        let preds = self.tree_predictions(x);
        let (lo, hi) = preds
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        if lo == hi {
            return (lo, 0.0);
        }
        let n = preds.len() as f64;
        let mean = (preds.iter().sum::<f64>() / n).clamp(lo, hi);
        let var = preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        (mean, var.max(0.0))
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.predict_with_uncertainty(x).0
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        xs.par_iter().map(|x| self.predict_with_uncertainty(x)).collect()
    }
}
