//! Gaussian z-score bucketing of predicted loads into tariff bands.
//!
//! Bands are intervals `[mu + i*rho, mu + (i+1)*rho)` of the fitted prediction
//! distribution. Raw band indices are shifted so the lowest occupied band is 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and population standard deviation of a prediction cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandModel {
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAssignment {
    pub sample_id: String,
    pub z: f64,
    pub band: u32,
}

/// Fits mean and population standard deviation.
pub fn fit_bands(predictions: &[f64]) -> Result<BandModel> {
    if predictions.len() < 2 {
        return Err(Error::TooFewPredictions(predictions.len()));
    }
    if let Some(&bad) = predictions.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinitePrediction(bad));
    }
    let first = predictions[0];
    if predictions.iter().all(|&v| v == first) {
        return Err(Error::DegenerateDistribution);
    }
    let n = predictions.len() as f64;
    let mean = predictions.iter().sum::<f64>() / n;
    let var = predictions.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std_dev = var.sqrt();
    if !(std_dev > 0.0 && std_dev.is_finite()) {
        return Err(Error::DegenerateDistribution);
    }
    Ok(BandModel { mean, std_dev })
}

impl BandModel {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::NonFinitePrediction(mean));
        }
        if !(std_dev > 0.0 && std_dev.is_finite()) {
            return Err(Error::DegenerateDistribution);
        }
        Ok(BandModel { mean, std_dev })
    }

    pub fn z_score(&self, prediction: f64) -> f64 {
        (prediction - self.mean) / self.std_dev
    }

    /// Unshifted band index `floor((y - mu) / rho)`.
    pub fn raw_band(&self, prediction: f64) -> i64 {
        self.z_score(prediction).floor() as i64
    }

    /// Assigns shifted tariff bands to a cohort using this model.
    pub fn allot<S: AsRef<str>>(&self, predictions: &[(S, f64)]) -> Vec<BandAssignment> {
        let raw: Vec<(f64, i64)> = predictions
            .iter()
            .map(|(_, y)| {
                let z = self.z_score(*y);
                (z, z.floor() as i64)
            })
            .collect();
        let least = raw.iter().map(|&(_, b)| b).min().unwrap_or(0);
        predictions
            .iter()
            .zip(raw)
            .map(|((id, _), (z, b))| BandAssignment {
                sample_id: id.as_ref().to_owned(),
                z,
                band: (b - least) as u32,
            })
            .collect()
    }
}

pub fn assign_band(model: &BandModel, prediction: f64) -> i64 {
    model.raw_band(prediction)
}

/// Fits a band model on the cohort and assigns non-negative tariff ids, in input order.
pub fn assign_tariffs<S: AsRef<str>>(predictions: &[(S, f64)]) -> Result<Vec<BandAssignment>> {
    let values: Vec<f64> = predictions.iter().map(|(_, y)| *y).collect();
    let model = fit_bands(&values)?;
    Ok(model.allot(predictions))
}
