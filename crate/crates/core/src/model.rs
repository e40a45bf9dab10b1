//! Domain types shared across the crate.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binarized protected group. Privileged is encoded as `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Unprivileged = 0,
    Privileged = 1,
}

impl Group {
    /// The other group (`1 ⊕ g`).
    pub fn other(self) -> Group {
        match self {
            Group::Unprivileged => Group::Privileged,
            Group::Privileged => Group::Unprivileged,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g as u8
    }
}

impl TryFrom<u8> for Group {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Group::Unprivileged),
            1 => Ok(Group::Privileged),
            other => Err(format!("group must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Raw protected-attribute value as it appears in the input, before binarization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProtectedValue(pub String);

impl ProtectedValue {
    pub fn new(raw: impl Into<String>) -> Self {
        ProtectedValue(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.0.trim().parse().ok()
    }
}

impl From<f64> for ProtectedValue {
    fn from(v: f64) -> Self {
        ProtectedValue(v.to_string())
    }
}

impl From<&str> for ProtectedValue {
    fn from(v: &str) -> Self {
        ProtectedValue(v.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub value: f64,
}

/// One individual: identity, non-protected features and the raw protected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<Feature>,
    pub protected_raw: ProtectedValue,
}

impl Sample {
    pub fn new(id: impl Into<String>, protected_raw: impl Into<ProtectedValue>) -> Self {
        Sample {
            id: id.into(),
            features: Vec::new(),
            protected_raw: protected_raw.into(),
        }
    }

    pub fn with_feature(mut self, name: impl Into<String>, value: f64) -> Self {
        self.features.push(Feature {
            name: name.into(),
            value,
        });
        self
    }

    pub fn feature_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.features.iter().map(|f| f.value)
    }
}

/// Checks dataset-level sample invariants: unique ids, non-empty and equal-arity features.
pub fn validate_samples(samples: &[Sample]) -> Result<()> {
    let mut seen = BTreeSet::new();
    let arity = samples.first().map(|s| s.features.len());
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::InvalidSamples(format!("duplicate sample id {:?}", s.id)));
        }
        if s.features.is_empty() {
            return Err(Error::InvalidSamples(format!("sample {:?} has no features", s.id)));
        }
        if Some(s.features.len()) != arity {
            return Err(Error::InvalidSamples(format!(
                "sample {:?} has {} features, expected {}",
                s.id,
                s.features.len(),
                arity.unwrap_or(0)
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupRule {
    /// Values in `privileged` map to 1, values in `unprivileged` map to 0.
    BinaryCategorical {
        privileged: BTreeSet<String>,
        unprivileged: BTreeSet<String>,
    },
    /// `raw <= threshold` maps to 0, `raw > threshold` maps to 1.
    ThresholdOnNumeric { threshold: f64 },
}

/// Rule mapping a raw protected attribute to privileged / unprivileged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub attribute_name: String,
    pub rule: GroupRule,
}

impl GroupSpec {
    pub fn threshold(attribute_name: impl Into<String>, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::InvalidGroupSpec(format!(
                "threshold must be finite, got {threshold}"
            )));
        }
        Ok(GroupSpec {
            attribute_name: attribute_name.into(),
            rule: GroupRule::ThresholdOnNumeric { threshold },
        })
    }

    pub fn categorical<P, U, S>(attribute_name: impl Into<String>, privileged: P, unprivileged: U) -> Result<Self>
    where
        P: IntoIterator<Item = S>,
        U: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let privileged: BTreeSet<String> = privileged.into_iter().map(Into::into).collect();
        let unprivileged: BTreeSet<String> = unprivileged.into_iter().map(Into::into).collect();
        if let Some(v) = privileged.intersection(&unprivileged).next() {
            return Err(Error::InvalidGroupSpec(format!(
                "value {v:?} is declared both privileged and unprivileged"
            )));
        }
        if privileged.is_empty() || unprivileged.is_empty() {
            return Err(Error::InvalidGroupSpec(
                "both privileged and unprivileged value sets must be non-empty".into(),
            ));
        }
        Ok(GroupSpec {
            attribute_name: attribute_name.into(),
            rule: GroupRule::BinaryCategorical {
                privileged,
                unprivileged,
            },
        })
    }

    pub fn binarize(&self, raw: &ProtectedValue) -> Result<Group> {
        binarize_group(self, raw)
    }
}

/// Maps a raw protected value to its group flag.
pub fn binarize_group(spec: &GroupSpec, raw: &ProtectedValue) -> Result<Group> {
    let uncovered = || Error::UncoveredGroupValue {
        attribute: spec.attribute_name.clone(),
        value: raw.0.clone(),
    };
    match &spec.rule {
        GroupRule::ThresholdOnNumeric { threshold } => {
            let v = raw.as_f64().filter(|v| !v.is_nan()).ok_or_else(uncovered)?;
            Ok(if v <= *threshold {
                Group::Unprivileged
            } else {
                Group::Privileged
            })
        }
        GroupRule::BinaryCategorical {
            privileged,
            unprivileged,
        } => {
            let key = raw.as_str().trim();
            if privileged.contains(key) {
                Ok(Group::Privileged)
            } else if unprivileged.contains(key) {
                Ok(Group::Unprivileged)
            } else {
                Err(uncovered())
            }
        }
    }
}

/// Percentile split of multi-class labels into favorable (low) and unfavorable (high).
///
/// The cut is the label of the `ceil(fraction * n)`-th sample in ascending order,
/// and labels equal to the cut are favorable. Once fitted the spec is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    favorable_fraction: f64,
    cut_value: Option<u32>,
}

impl LabelSpec {
    pub const DEFAULT_FAVORABLE_FRACTION: f64 = 0.40;

    pub fn new(favorable_fraction: f64) -> Result<Self> {
        if !(favorable_fraction > 0.0 && favorable_fraction < 1.0) {
            return Err(Error::InvalidFraction(favorable_fraction));
        }
        Ok(LabelSpec {
            favorable_fraction,
            cut_value: None,
        })
    }

    /// A spec with a known cut, e.g. restored from a previous run.
    pub fn with_cut(favorable_fraction: f64, cut_value: u32) -> Result<Self> {
        let mut spec = Self::new(favorable_fraction)?;
        spec.cut_value = Some(cut_value);
        Ok(spec)
    }

    pub fn favorable_fraction(&self) -> f64 {
        self.favorable_fraction
    }

    pub fn cut_value(&self) -> Option<u32> {
        self.cut_value
    }

    pub fn is_fitted(&self) -> bool {
        self.cut_value.is_some()
    }

    /// Fits the cut on the given label multiset and returns the frozen spec.
    pub fn fit(&self, labels: &[u32]) -> Result<LabelSpec> {
        if labels.is_empty() {
            return Err(Error::EmptyLabels);
        }
        let mut sorted = labels.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        // Guard against 0.4 * 10 landing a hair above 4.0.
        let rank = ((self.favorable_fraction * n as f64) - 1e-9).ceil() as usize;
        let rank = rank.clamp(1, n);
        Ok(LabelSpec {
            favorable_fraction: self.favorable_fraction,
            cut_value: Some(sorted[rank - 1]),
        })
    }

    pub fn favorability(&self, label: u32) -> Result<bool> {
        favorability(self, label)
    }

    pub(crate) fn cut(&self) -> Result<u32> {
        self.cut_value.ok_or(Error::LabelSpecUnfitted)
    }
}

/// `true` when `label` is favorable under a fitted spec.
pub fn favorability(spec: &LabelSpec, label: u32) -> Result<bool> {
    Ok(label <= spec.cut()?)
}

/// Factual and counterfactual class labels of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub sample_id: String,
    pub y_factual: u32,
    pub y_counterfactual: u32,
    pub group: Group,
}

impl PredictionPair {
    pub fn new(sample_id: impl Into<String>, y_factual: u32, y_counterfactual: u32, group: Group) -> Self {
        PredictionPair {
            sample_id: sample_id.into(),
            y_factual,
            y_counterfactual,
            group,
        }
    }
}

/// Fairness slack, held in exact parts-per-billion so threshold tests are rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon {
    ppb: u64,
}

impl Epsilon {
    pub const SCALE: u64 = 1_000_000_000;
    pub const DEFAULT: Epsilon = Epsilon { ppb: 100_000_000 };

    /// Rounds `value` to the nearest billionth. Must lie in `[0, 1)`.
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&value) {
            return Err(Error::InvalidConfig(format!("epsilon must lie in [0, 1), got {value}")));
        }
        let ppb = (value * Self::SCALE as f64).round() as u64;
        if ppb >= Self::SCALE {
            return Err(Error::InvalidConfig(format!("epsilon {value} rounds to 1")));
        }
        Ok(Epsilon { ppb })
    }

    pub fn value(self) -> f64 {
        self.ppb as f64 / Self::SCALE as f64
    }

    /// `1 - epsilon` as `(numerator, denominator)`.
    pub fn lower_bound(self) -> (u64, u64) {
        (Self::SCALE - self.ppb, Self::SCALE)
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Epsilon::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Priority,
    Randomized,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "priority" => Ok(Strategy::Priority),
            "randomized" | "random" => Ok(Strategy::Randomized),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub epsilon: Epsilon,
    pub strategy: Strategy,
    pub seed: u64,
    pub max_flips: Option<usize>,
}

impl MitigationConfig {
    pub fn priority(epsilon: Epsilon) -> Self {
        MitigationConfig {
            epsilon,
            strategy: Strategy::Priority,
            seed: 0,
            max_flips: None,
        }
    }

    pub fn randomized(epsilon: Epsilon, seed: u64) -> Self {
        MitigationConfig {
            epsilon,
            strategy: Strategy::Randomized,
            seed,
            max_flips: None,
        }
    }

    pub fn with_max_flips(mut self, max_flips: usize) -> Self {
        self.max_flips = Some(max_flips);
        self
    }
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self::priority(Epsilon::DEFAULT)
    }
}
