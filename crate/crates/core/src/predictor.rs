//! Black-box predictor interface and cohort labeling.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bucketing::{fit_bands, BandModel};
use crate::error::{Error, Result, Stage};
use crate::model::{Group, GroupSpec, PredictionPair, Sample};

/// Opaque model queried with a sample and the protected group to condition on.
pub trait Predictor {
    fn predict(&self, sample: &Sample, group: Group) -> Result<f64>;
}

/// Precomputed predictions keyed by `(sample_id, group)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    entries: HashMap<String, [Option<f64>; 2]>,
}

impl LookupTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a prediction, returning the previous one if present.
    pub fn insert(&mut self, sample_id: impl Into<String>, group: Group, prediction: f64) -> Option<f64> {
        let slot = self.entries.entry(sample_id.into()).or_default();
        slot[group.as_u8() as usize].replace(prediction)
    }

    pub fn get(&self, sample_id: &str, group: Group) -> Option<f64> {
        self.entries.get(sample_id)?[group.as_u8() as usize]
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|s| s.iter().flatten().count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows sorted by sample id then group.
    pub fn rows(&self) -> Vec<(String, Group, f64)> {
        let mut ids: Vec<&String> = self.entries.keys().collect();
        ids.sort();
        let mut out = Vec::with_capacity(self.len());
        for id in ids {
            for g in [Group::Unprivileged, Group::Privileged] {
                if let Some(v) = self.get(id, g) {
                    out.push((id.clone(), g, v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorSpec {
    TableLookup(LookupTable),
    /// Next-step forecast equal to the value `lag` steps back in the feature series.
    SeasonalNaive {
        lag: usize,
    },
}

impl PredictorSpec {
    pub fn seasonal_naive(lag: usize) -> Result<Self> {
        if lag == 0 {
            return Err(Error::InvalidPredictor("seasonal lag must be positive".into()));
        }
        Ok(PredictorSpec::SeasonalNaive { lag })
    }
}

impl Predictor for PredictorSpec {
    fn predict(&self, sample: &Sample, group: Group) -> Result<f64> {
        match self {
            PredictorSpec::TableLookup(table) => table.get(&sample.id, group).ok_or_else(|| Error::MissingPrediction {
                sample_id: sample.id.clone(),
                group: group.as_u8(),
            }),
            PredictorSpec::SeasonalNaive { lag } => {
                let n = sample.features.len();
                if *lag == 0 || *lag > n {
                    return Err(Error::MissingPrediction {
                        sample_id: sample.id.clone(),
                        group: group.as_u8(),
                    });
                }
                Ok(sample.features[n - lag].value)
            }
        }
    }
}

/// Predicts for `sample` under its own group, or under `group_override` when given.
pub fn predict<P: Predictor + ?Sized>(
    predictor: &P,
    sample: &Sample,
    groups: &GroupSpec,
    group_override: Option<Group>,
) -> Result<f64> {
    let group = match group_override {
        Some(g) => g,
        None => groups.binarize(&sample.protected_raw)?,
    };
    predictor.predict(sample, group)
}

/// Factual and counterfactual raw predictions for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub sample_id: String,
    pub group: Group,
    pub factual: f64,
    pub counterfactual: f64,
}

/// Labeled cohort: one band model fitted on factual predictions, shared by both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCohort {
    pub model: BandModel,
    /// Lowest raw band over factual and counterfactual predictions; subtracted from every label.
    pub least_raw_band: i64,
    pub raw: Vec<RawPrediction>,
    pub pairs: Vec<PredictionPair>,
}

/// Queries factual and counterfactual predictions for every sample.
pub fn predict_raw<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[Sample],
    groups: &GroupSpec,
) -> Result<Vec<RawPrediction>> {
    samples
        .iter()
        .map(|s| {
            let group = groups.binarize(&s.protected_raw)?;
            Ok(RawPrediction {
                sample_id: s.id.clone(),
                group,
                factual: predictor.predict(s, group)?,
                counterfactual: predictor.predict(s, group.other())?,
            })
        })
        .collect()
}

/// Bands one sample under an already fitted cohort model.
pub fn predict_pair<P: Predictor + ?Sized>(
    predictor: &P,
    sample: &Sample,
    groups: &GroupSpec,
    model: &BandModel,
    least_raw_band: i64,
) -> Result<PredictionPair> {
    let group = groups.binarize(&sample.protected_raw)?;
    let f = predictor.predict(sample, group)?;
    let cf = predictor.predict(sample, group.other())?;
    let label = |y: f64| -> Result<u32> {
        u32::try_from(model.raw_band(y) - least_raw_band)
            .map_err(|_| Error::InvalidPredictor(format!("prediction {y} falls below the lowest band")))
    };
    Ok(PredictionPair::new(sample.id.clone(), label(f)?, label(cf)?, group))
}

/// Predicts, fits the band model on factual predictions and labels both sides.
pub fn label_cohort<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[Sample],
    groups: &GroupSpec,
) -> Result<LabeledCohort> {
    let raw = predict_raw(predictor, samples, groups).map_err(Error::at(Stage::Predict))?;
    let factual: Vec<f64> = raw.iter().map(|r| r.factual).collect();
    let model = fit_bands(&factual).map_err(Error::at(Stage::Bucketing))?;
    if let Some(r) = raw.iter().find(|r| !r.counterfactual.is_finite()) {
        return Err(Error::at(Stage::Bucketing)(Error::NonFinitePrediction(
            r.counterfactual,
        )));
    }
    let least_raw_band = raw
        .iter()
        .flat_map(|r| [model.raw_band(r.factual), model.raw_band(r.counterfactual)])
        .min()
        .unwrap_or(0);
    let pairs = raw
        .iter()
        .map(|r| {
            PredictionPair::new(
                r.sample_id.clone(),
                (model.raw_band(r.factual) - least_raw_band) as u32,
                (model.raw_band(r.counterfactual) - least_raw_band) as u32,
                r.group,
            )
        })
        .collect();
    Ok(LabeledCohort {
        model,
        least_raw_band,
        raw,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups() -> GroupSpec {
        GroupSpec::threshold("age", 45.0).unwrap()
    }

    #[test]
    fn table_lookup_counterfactual_query() {
        let mut t = LookupTable::new();
        t.insert("s1", Group::Unprivileged, 31.0);
        t.insert("s1", Group::Privileged, 31.0);
        let spec = PredictorSpec::TableLookup(t);
        let s = Sample::new("s1", 30.0).with_feature("feature_1", 1.0);
        assert_eq!(predict(&spec, &s, &groups(), Some(Group::Privileged)).unwrap(), 31.0);
        assert_eq!(predict(&spec, &s, &groups(), None).unwrap(), 31.0);
    }

    #[test]
    fn table_lookup_missing_entry() {
        let mut t = LookupTable::new();
        t.insert("s1", Group::Unprivileged, 31.0);
        let spec = PredictorSpec::TableLookup(t);
        let s = Sample::new("s1", 30.0).with_feature("feature_1", 1.0);
        let err = predict(&spec, &s, &groups(), Some(Group::Privileged)).unwrap_err();
        assert!(matches!(err, Error::MissingPrediction { group: 1, .. }));
    }

    #[test]
    fn seasonal_naive_uses_lagged_value() {
        let mut s = Sample::new("h", 60.0);
        for t in 0..96 {
            s = s.with_feature(format!("feature_{}", t + 1), t as f64);
        }
        let spec = PredictorSpec::seasonal_naive(48).unwrap();
        // next step is t=96; one day of half-hours earlier is t=48
        assert_eq!(spec.predict(&s, Group::Privileged).unwrap(), 48.0);
        assert_eq!(spec.predict(&s, Group::Unprivileged).unwrap(), 48.0);
        let short = Sample::new("x", 60.0).with_feature("feature_1", 1.0);
        assert!(spec.predict(&short, Group::Privileged).is_err());
        assert!(PredictorSpec::seasonal_naive(0).is_err());
    }

    fn cohort(rows: &[(&str, f64, f64, f64)]) -> (PredictorSpec, Vec<Sample>) {
        let mut t = LookupTable::new();
        let mut samples = Vec::new();
        for &(id, age, f, cf) in rows {
            let s = Sample::new(id, age).with_feature("feature_1", f);
            let g = groups().binarize(&s.protected_raw).unwrap();
            t.insert(id, g, f);
            t.insert(id, g.other(), cf);
            samples.push(s);
        }
        (PredictorSpec::TableLookup(t), samples)
    }

    #[test]
    fn counterfactual_banded_under_factual_model() {
        // factual mean 32, std 2
        let (spec, samples) = cohort(&[
            ("a", 30.0, 30.0, 30.0),
            ("b", 60.0, 34.0, 34.0),
            ("c", 30.0, 32.0, 20.0),
        ]);
        let lab = label_cohort(&spec, &samples, &groups()).unwrap();
        assert_eq!(lab.model, fit_bands(&[30.0, 34.0, 32.0]).unwrap());
        let rho = lab.model.std_dev;
        let mu = lab.model.mean;
        assert_eq!(lab.least_raw_band, lab.model.raw_band(20.0));
        assert!(lab.least_raw_band < -1);
        for p in &lab.pairs {
            let r = lab.raw.iter().find(|r| r.sample_id == p.sample_id).unwrap();
            assert_eq!(
                p.y_factual as i64,
                ((r.factual - mu) / rho).floor() as i64 - lab.least_raw_band
            );
        }
        assert_eq!(lab.pairs[0].y_factual, lab.pairs[0].y_counterfactual);
    }

    #[test]
    fn pair_band_gap() {
        let model = BandModel::new(0.0, 1.0).unwrap();
        let mut t = LookupTable::new();
        t.insert("s", Group::Unprivileged, 1.2);
        t.insert("s", Group::Privileged, -0.2);
        let spec = PredictorSpec::TableLookup(t);
        let s = Sample::new("s", 20.0).with_feature("feature_1", 0.0);
        let p = predict_pair(&spec, &s, &groups(), &model, -1).unwrap();
        assert_eq!((p.y_factual, p.y_counterfactual), (2, 0));
        let same = BandModel::new(0.0, 1.0).unwrap();
        let mut t = LookupTable::new();
        t.insert("s", Group::Unprivileged, 0.5);
        t.insert("s", Group::Privileged, 0.5);
        let p = predict_pair(&PredictorSpec::TableLookup(t), &s, &groups(), &same, 0).unwrap();
        assert_eq!(p.y_factual, p.y_counterfactual);
    }

    #[test]
    fn stage_attribution() {
        let (spec, samples) = cohort(&[("a", 30.0, 5.0, 5.0), ("b", 60.0, 5.0, 5.0)]);
        let err = label_cohort(&spec, &samples, &groups()).unwrap_err();
        assert!(matches!(
            err,
            Error::Pipeline {
                stage: Stage::Bucketing,
                ..
            }
        ));
        assert!(matches!(err.root(), Error::DegenerateDistribution));
    }
}
