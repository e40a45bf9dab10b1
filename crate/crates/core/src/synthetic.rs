//! Seeded synthetic tariff cohorts with injected, recorded individual bias.
//!
//! All randomness comes from one `ChaCha8Rng::seed_from_u64(seed)` stream,
//! consumed in this order:
//!
//! 1. For each sample `i = 0..n`, four uniforms `u = (next_u64 >> 11) * 2^-53`:
//!    * `u_group`: privileged iff `u_group < group_balance`;
//!    * `u_age`: age `46 + floor(35 u)` if privileged, else `18 + floor(28 u)`;
//!    * `u1, u2`: Box-Muller, `z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`,
//!      base load `load_mean + load_std * z`.
//! 2. `k = round(bias_fraction * n_unpriv)` unprivileged samples are chosen by a
//!    partial Fisher-Yates shuffle of the unprivileged indices (in sample order):
//!    for `j = 0..k`, swap position `j` with `j + floor(u * (m - j))`.
//!
//! A biased sample's factual prediction is `base + bias_shift`; its
//! counterfactual (privileged) prediction is `base`. Every other prediction is
//! `base` for both groups.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Group, GroupSpec, Sample};
use crate::predictor::LookupTable;

pub const CER_LOAD_MEAN: f64 = 32.24;
/// Square root of the reported variance 94.67.
pub const CER_LOAD_STD: f64 = 9.73;
pub const AGE_THRESHOLD: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    pub load_mean: f64,
    pub load_std: f64,
    pub bias_fraction: f64,
    pub bias_shift: f64,
    pub group_balance: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 200,
            seed: 0,
            load_mean: CER_LOAD_MEAN,
            load_std: CER_LOAD_STD,
            bias_fraction: 0.3,
            bias_shift: 2.0 * CER_LOAD_STD,
            group_balance: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSyntheticSpec(m.to_owned()));
        if !(0.0..=1.0).contains(&self.bias_fraction) {
            return bad("bias_fraction must lie in [0, 1]");
        }
        if !(self.load_std > 0.0 && self.load_std.is_finite()) || !self.load_mean.is_finite() {
            return bad("load_std must be positive and moments finite");
        }
        if !(self.group_balance > 0.0 && self.group_balance < 1.0) {
            return bad("group_balance must lie in (0, 1)");
        }
        if !(self.bias_shift > 0.0 && self.bias_shift.is_finite()) {
            return bad("bias_shift must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub samples: Vec<Sample>,
    pub table: LookupTable,
    /// Ids of samples whose prediction depends on the protected attribute.
    pub biased: BTreeSet<String>,
    pub groups: GroupSpec,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Zero-padded ids so lexicographic order matches generation order.
fn sample_id(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).max(1).to_string().len();
    format!("s{i:0width$}")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.n);
    let mut groups = Vec::with_capacity(spec.n);
    let mut base = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let privileged = uniform(&mut rng) < spec.group_balance;
        let u_age = uniform(&mut rng);
        let age = if privileged {
            46 + (35.0 * u_age) as u32
        } else {
            18 + (28.0 * u_age) as u32
        };
        let u1 = uniform(&mut rng);
        let u2 = uniform(&mut rng);
        let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos();
        let load = spec.load_mean + spec.load_std * z;
        samples.push(Sample::new(sample_id(i, spec.n), age.to_string().as_str()).with_feature("feature_1", load));
        groups.push(if privileged {
            Group::Privileged
        } else {
            Group::Unprivileged
        });
        base.push(load);
    }

    let mut unpriv: Vec<usize> = (0..spec.n).filter(|&i| groups[i] == Group::Unprivileged).collect();
    let m = unpriv.len();
    let k = ((spec.bias_fraction * m as f64).round() as usize).min(m);
    for j in 0..k {
        let pick = j + (uniform(&mut rng) * (m - j) as f64) as usize;
        unpriv.swap(j, pick.min(m - 1));
    }
    let biased_idx: BTreeSet<usize> = unpriv[..k].iter().copied().collect();

    let mut table = LookupTable::new();
    let mut biased = BTreeSet::new();
    for (i, s) in samples.iter().enumerate() {
        let g = groups[i];
        let factual = if biased_idx.contains(&i) {
            biased.insert(s.id.clone());
            base[i] + spec.bias_shift
        } else {
            base[i]
        };
        table.insert(s.id.clone(), g, factual);
        table.insert(s.id.clone(), g.other(), base[i]);
    }

    Ok(SyntheticCohort {
        samples,
        table,
        biased,
        groups: GroupSpec::threshold("age", AGE_THRESHOLD)?,
    })
}
