//! Knob search space: knob definitions, configurations, space-filling
//! sampling, feature encoding and the Gower distance over mixed knob types.
//!
//! Every numeric knob has a *sampling scale* (linear or logarithmic). Values
//! are mapped into `[0, 1]` along that scale by [`KnobSpec::to_unit`]; the
//! sampler, the encoder and the distance all work in that unit space so a
//! knob spanning several orders of magnitude does not dominate the others.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Identifier of a concrete configuration, unique within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigId(pub u32);

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Hands out monotonically increasing configuration ids.
#[derive(Debug, Clone, Default)]
pub struct ConfigIdGen {
    next: u32,
}

impl ConfigIdGen {
    pub fn new() -> Self {
        Self::default()
    }

    /// Continue numbering after `last`.
    pub fn starting_after(last: ConfigId) -> Self {
        Self { next: last.0 + 1 }
    }

    pub fn assign(&mut self, values: Assignment) -> Configuration {
        let id = ConfigId(self.next);
        self.next += 1;
        Configuration { id, values }
    }
}

/// Value held by one knob. Categorical knobs store the index of the choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KnobValue {
    Number(f64),
    Choice(usize),
}

impl KnobValue {
    pub fn as_number(&self) -> Option<f64> {
        match *self {
            KnobValue::Number(v) => Some(v),
            KnobValue::Choice(_) => None,
        }
    }

    pub fn as_choice(&self) -> Option<usize> {
        match *self {
            KnobValue::Choice(c) => Some(c),
            KnobValue::Number(_) => None,
        }
    }
}

/// Per-knob values aligned to the order of a [`ConfigSpace`].
pub type Assignment = Vec<KnobValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KnobDomain {
    Numeric {
        min: f64,
        max: f64,
        integer: bool,
        scale: Scale,
    },
    Categorical {
        choices: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnobSpec {
    name: String,
    domain: KnobDomain,
    default: KnobValue,
}

impl KnobSpec {
    pub fn continuous(name: &str, min: f64, max: f64, default: f64, scale: Scale) -> Result<Self> {
        Self::new(
            name,
            KnobDomain::Numeric {
                min,
                max,
                integer: false,
                scale,
            },
            KnobValue::Number(default),
        )
    }

    pub fn integer(name: &str, min: i64, max: i64, default: i64, scale: Scale) -> Result<Self> {
        Self::new(
            name,
            KnobDomain::Numeric {
                min: min as f64,
                max: max as f64,
                integer: true,
                scale,
            },
            KnobValue::Number(default as f64),
        )
    }

    pub fn categorical(name: &str, choices: &[&str], default: &str) -> Result<Self> {
        let choices: Vec<String> = choices.iter().map(|c| c.to_string()).collect();
        let idx = choices.iter().position(|c| c == default).ok_or_else(|| Error::InvalidKnob {
            name: name.to_string(),
            reason: format!("default `{default}` is not among the choices"),
        })?;
        Self::new(name, KnobDomain::Categorical { choices }, KnobValue::Choice(idx))
    }

    pub fn new(name: &str, domain: KnobDomain, default: KnobValue) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidKnob {
            name: name.to_string(),
            reason,
        };
        if name.is_empty() {
            return Err(invalid("name must be non-empty".into()));
        }
        match &domain {
            KnobDomain::Numeric {
                min,
                max,
                integer,
                scale,
            } => {
                if !(min.is_finite() && max.is_finite()) || min >= max {
                    return Err(invalid(format!("need min < max, got [{min}, {max}]")));
                }
                if *scale == Scale::Log && *min <= 0.0 {
                    return Err(invalid("logarithmic scale requires min > 0".into()));
                }
                if *integer && (min.fract() != 0.0 || max.fract() != 0.0) {
                    return Err(invalid("integer knob bounds must be integral".into()));
                }
            }
            KnobDomain::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(invalid("choice list must be non-empty".into()));
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return Err(invalid(format!("duplicate choice `{c}`")));
                    }
                }
            }
        }
        let spec = KnobSpec {
            name: name.to_string(),
            domain,
            default,
        };
        spec.check_value(&default)
            .map_err(|e| invalid(format!("default out of range: {e}")))?;
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &KnobDomain {
        &self.domain
    }

    pub fn default_value(&self) -> KnobValue {
        self.default
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.domain, KnobDomain::Categorical { .. })
    }

    /// Number of choices for categorical knobs, `None` for numeric ones.
    pub fn choice_count(&self) -> Option<usize> {
        match &self.domain {
            KnobDomain::Categorical { choices } => Some(choices.len()),
            KnobDomain::Numeric { .. } => None,
        }
    }

    fn check_value(&self, value: &KnobValue) -> std::result::Result<(), String> {
        match (&self.domain, value) {
            (
                KnobDomain::Numeric {
                    min, max, integer, ..
                },
                KnobValue::Number(v),
            ) => {
                if !v.is_finite() || v < min || v > max {
                    return Err(format!("{v} outside [{min}, {max}]"));
                }
                if *integer && v.fract() != 0.0 {
                    return Err(format!("{v} is not an integer"));
                }
                Ok(())
            }
            (KnobDomain::Categorical { choices }, KnobValue::Choice(c)) => {
                if *c < choices.len() {
                    Ok(())
                } else {
                    Err(format!("choice index {c} out of {}", choices.len()))
                }
            }
            (KnobDomain::Numeric { .. }, KnobValue::Choice(_)) => {
                Err("expected a number, got a choice".into())
            }
            (KnobDomain::Categorical { .. }, KnobValue::Number(_)) => {
                Err("expected a choice, got a number".into())
            }
        }
    }

    /// Position of a numeric value along the sampling scale, in `[0, 1]`.
    /// Categorical knobs return `None`.
    pub fn to_unit(&self, value: &KnobValue) -> Option<f64> {
        match (&self.domain, value) {
            (KnobDomain::Numeric { min, max, scale, .. }, KnobValue::Number(v)) => {
                let u = match scale {
                    Scale::Linear => (v - min) / (max - min),
                    Scale::Log => (v.ln() - min.ln()) / (max.ln() - min.ln()),
                };
                Some(u.clamp(0.0, 1.0))
            }
            _ => None,
        }
    }

    /// Inverse of [`to_unit`](Self::to_unit) for numeric knobs. Integer knobs
    /// round to the nearest integer with ties going to the lower value.
    pub fn from_unit(&self, u: f64) -> KnobValue {
        match &self.domain {
            KnobDomain::Numeric {
                min,
                max,
                integer,
                scale,
            } => {
                let u = u.clamp(0.0, 1.0);
                let raw = match scale {
                    Scale::Linear => min + u * (max - min),
                    Scale::Log => (min.ln() + u * (max.ln() - min.ln())).exp(),
                };
                let v = if *integer {
                    let lower = raw.floor();
                    if raw - lower > 0.5 {
                        lower + 1.0
                    } else {
                        lower
                    }
                } else {
                    raw
                };
                KnobValue::Number(v.clamp(*min, *max))
            }
            KnobDomain::Categorical { choices } => {
                let n = choices.len();
                KnobValue::Choice(((u * n as f64).floor() as usize).min(n - 1))
            }
        }
    }

    fn value_to_json(&self, value: &KnobValue) -> Value {
        match (&self.domain, value) {
            (KnobDomain::Numeric { integer: true, .. }, KnobValue::Number(v)) => {
                Value::from(*v as i64)
            }
            (KnobDomain::Numeric { .. }, KnobValue::Number(v)) => Value::from(*v),
            (KnobDomain::Categorical { choices }, KnobValue::Choice(c)) => {
                Value::from(choices[*c].clone())
            }
            _ => Value::Null,
        }
    }

    fn value_from_json(&self, value: &Value) -> Result<KnobValue> {
        let bad = |reason: String| Error::NonConforming(format!("knob `{}`: {reason}", self.name));
        let parsed = match &self.domain {
            KnobDomain::Numeric { .. } => KnobValue::Number(
                value
                    .as_f64()
                    .ok_or_else(|| bad(format!("expected a number, got {value}")))?,
            ),
            KnobDomain::Categorical { choices } => {
                let s = value
                    .as_str()
                    .ok_or_else(|| bad(format!("expected a string, got {value}")))?;
                KnobValue::Choice(
                    choices
                        .iter()
                        .position(|c| c == s)
                        .ok_or_else(|| bad(format!("unknown choice `{s}`")))?,
                )
            }
        };
        self.check_value(&parsed).map_err(bad)?;
        Ok(parsed)
    }
}

/// An ordered list of knobs. The order fixes the feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    knobs: Vec<KnobSpec>,
}

impl ConfigSpace {
    pub fn new(knobs: Vec<KnobSpec>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, k) in knobs.iter().enumerate() {
            if seen.insert(k.name.clone(), i).is_some() {
                return Err(Error::DuplicateKnob(k.name.clone()));
            }
        }
        Ok(Self { knobs })
    }

    pub fn knobs(&self) -> &[KnobSpec] {
        &self.knobs
    }

    pub fn len(&self) -> usize {
        self.knobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knobs.is_empty()
    }

    pub fn default_assignment(&self) -> Assignment {
        self.knobs.iter().map(|k| k.default).collect()
    }

    /// Which encoded features are categorical (ordinal choice indices).
    pub fn categorical_mask(&self) -> Vec<bool> {
        self.knobs.iter().map(KnobSpec::is_categorical).collect()
    }

    pub fn validate(&self, values: &[KnobValue]) -> Result<()> {
        if values.len() != self.knobs.len() {
            return Err(Error::NonConforming(format!(
                "expected {} values, got {}",
                self.knobs.len(),
                values.len()
            )));
        }
        for (k, v) in self.knobs.iter().zip(values) {
            k.check_value(v)
                .map_err(|e| Error::NonConforming(format!("knob `{}`: {e}", k.name)))?;
        }
        Ok(())
    }

    /// One uniform draw along every knob's sampling scale.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        self.knobs.iter().map(|k| k.from_unit(rng.gen::<f64>())).collect()
    }

    pub fn to_json_map(&self, values: &[KnobValue]) -> Map<String, Value> {
        self.knobs
            .iter()
            .zip(values)
            .map(|(k, v)| (k.name.clone(), k.value_to_json(v)))
            .collect()
    }

    pub fn from_json_map(&self, map: &Map<String, Value>) -> Result<Assignment> {
        self.knobs
            .iter()
            .map(|k| {
                let v = map
                    .get(&k.name)
                    .ok_or_else(|| Error::NonConforming(format!("missing knob `{}`", k.name)))?;
                k.value_from_json(v)
            })
            .collect()
    }

    /// Parse a knob-space file (JSON array of knob objects).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: Vec<KnobFileEntry> = serde_json::from_str(text)?;
        let knobs = raw
            .into_iter()
            .map(KnobFileEntry::into_spec)
            .collect::<Result<Vec<_>>>()?;
        Self::new(knobs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let entries: Vec<KnobFileEntry> = self.knobs.iter().map(KnobFileEntry::from_spec).collect();
        serde_json::to_string_pretty(&entries).expect("knob entries always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KnobFileKind {
    Continuous,
    Integer,
    Categorical,
}

/// On-disk knob description.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnobFileEntry {
    name: String,
    kind: KnobFileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Scale>,
}

impl KnobFileEntry {
    fn into_spec(self) -> Result<KnobSpec> {
        let invalid = |reason: &str| Error::InvalidKnob {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        match self.kind {
            KnobFileKind::Categorical => {
                if self.min.is_some() || self.max.is_some() || self.scale.is_some() {
                    return Err(invalid("categorical knobs take `choices`, not min/max/scale"));
                }
                let choices = self.choices.clone().ok_or_else(|| invalid("missing `choices`"))?;
                let default = self
                    .default
                    .as_str()
                    .ok_or_else(|| invalid("categorical default must be a string"))?;
                let refs: Vec<&str> = choices.iter().map(String::as_str).collect();
                if refs.is_empty() {
                    return Err(invalid("choice list must be non-empty"));
                }
                KnobSpec::categorical(&self.name, &refs, default)
            }
            KnobFileKind::Continuous | KnobFileKind::Integer => {
                if self.choices.is_some() {
                    return Err(invalid("numeric knobs take min/max, not `choices`"));
                }
                let min = self.min.ok_or_else(|| invalid("missing `min`"))?;
                let max = self.max.ok_or_else(|| invalid("missing `max`"))?;
                let default = self
                    .default
                    .as_f64()
                    .ok_or_else(|| invalid("numeric default must be a number"))?;
                KnobSpec::new(
                    &self.name,
                    KnobDomain::Numeric {
                        min,
                        max,
                        integer: self.kind == KnobFileKind::Integer,
                        scale: self.scale.unwrap_or(Scale::Linear),
                    },
                    KnobValue::Number(default),
                )
            }
        }
    }

    fn from_spec(spec: &KnobSpec) -> Self {
        match &spec.domain {
            KnobDomain::Numeric {
                min,
                max,
                integer,
                scale,
            } => KnobFileEntry {
                name: spec.name.clone(),
                kind: if *integer {
                    KnobFileKind::Integer
                } else {
                    KnobFileKind::Continuous
                },
                min: Some(*min),
                max: Some(*max),
                choices: None,
                default: spec.value_to_json(&spec.default),
                scale: Some(*scale),
            },
            KnobDomain::Categorical { choices } => KnobFileEntry {
                name: spec.name.clone(),
                kind: KnobFileKind::Categorical,
                min: None,
                max: None,
                choices: Some(choices.clone()),
                default: spec.value_to_json(&spec.default),
                scale: None,
            },
        }
    }
}

/// A concrete, identified assignment of every knob.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub id: ConfigId,
    pub values: Assignment,
}

/// Latin hypercube sample of `n` assignments.
///
/// Each knob gets its own random permutation of the `n` equal-probability
/// strata along its sampling scale; one point is drawn uniformly inside each
/// stratum. Categorical knobs map the stratum position onto the choice list,
/// which spreads choices evenly across the sample.
pub fn sample_lhs(space: &ConfigSpace, n: usize, seed: u64) -> Vec<Assignment> {
    assert!(n >= 1, "latin hypercube needs at least one sample");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<KnobValue>> = Vec::with_capacity(space.len());
    for knob in space.knobs() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let column = strata
            .into_iter()
            .map(|s| {
                let u = (s as f64 + rng.gen::<f64>()) / n as f64;
                knob.from_unit(u)
            })
            .collect();
        columns.push(column);
    }
    (0..n)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect()
}

/// Per-knob Gower distance: range-normalized absolute difference along the
/// sampling scale for numeric knobs, mismatch indicator for categorical ones.
fn knob_distance(knob: &KnobSpec, a: &KnobValue, b: &KnobValue) -> f64 {
    match (a, b) {
        (KnobValue::Choice(x), KnobValue::Choice(y)) => {
            if x == y {
                0.0
            } else {
                1.0
            }
        }
        _ => {
            let ua = knob.to_unit(a).unwrap_or(0.0);
            let ub = knob.to_unit(b).unwrap_or(0.0);
            (ua - ub).abs()
        }
    }
}

/// Mean per-knob Gower distance, in `[0, 1]`.
pub fn gower_distance(a: &[KnobValue], b: &[KnobValue], space: &ConfigSpace) -> f64 {
    if space.is_empty() {
        return 0.0;
    }
    let total: f64 = space
        .knobs()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(k, (x, y))| knob_distance(k, x, y))
        .sum();
    total / space.len() as f64
}

/// `1 / (1 + D)`.
pub fn similarity(a: &[KnobValue], b: &[KnobValue], space: &ConfigSpace) -> f64 {
    1.0 / (1.0 + gower_distance(a, b, space))
}

/// Highest similarity between `theta` and any labeled configuration.
pub fn set_similarity<'a, I>(theta: &[KnobValue], labeled: I, space: &ConfigSpace) -> Result<f64>
where
    I: IntoIterator<Item = &'a [KnobValue]>,
{
    labeled
        .into_iter()
        .map(|d| similarity(theta, d, space))
        .fold(None, |best: Option<f64>, s| Some(best.map_or(s, |b| b.max(s))))
        .ok_or(Error::NoLabeled)
}

/// Feature vector for the surrogate forest: unit-scale position for numeric
/// knobs, choice index for categorical knobs.
pub fn encode(values: &[KnobValue], space: &ConfigSpace) -> Vec<f64> {
    space
        .knobs()
        .iter()
        .zip(values)
        .map(|(k, v)| match v {
            KnobValue::Choice(c) => *c as f64,
            KnobValue::Number(_) => k.to_unit(v).unwrap_or(0.0),
        })
        .collect()
}
