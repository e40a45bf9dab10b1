//! End-to-end pipeline and the priority-vs-randomized comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bucketing::BandModel;
use crate::engine::{detect_and_score, minority_from_tally, mitigate, MitigationTrace, ScoredSample, Termination};
use crate::error::{Error, Result, Stage};
use crate::metrics::{disparate_impact, is_fair, tally, GroupTally};
use crate::model::{Epsilon, Group, GroupSpec, LabelSpec, MitigationConfig, Sample, Strategy};
use crate::predictor::{label_cohort, LabeledCohort, Predictor};

/// Everything mitigation needs, computed once and shared read-only by every run.
#[derive(Debug, Clone)]
pub struct PreparedCohort {
    pub cohort: LabeledCohort,
    pub labels: LabelSpec,
    pub scored: Vec<ScoredSample>,
}

/// predict -> band -> fit favorability -> score.
pub fn prepare_cohort<P: Predictor + ?Sized>(
    samples: &[Sample],
    predictor: &P,
    groups: &GroupSpec,
    labels: &LabelSpec,
) -> Result<PreparedCohort> {
    let cohort = label_cohort(predictor, samples, groups)?;
    let labels = if labels.is_fitted() {
        *labels
    } else {
        let factual: Vec<u32> = cohort.pairs.iter().map(|p| p.y_factual).collect();
        labels.fit(&factual).map_err(Error::at(Stage::Labeling))?
    };
    let scored = detect_and_score(&cohort.pairs);
    Ok(PreparedCohort { cohort, labels, scored })
}

impl PreparedCohort {
    pub fn tally(&self) -> Result<GroupTally> {
        tally(&self.cohort.pairs, &self.labels).map_err(Error::at(Stage::Scoring))
    }

    pub fn mitigate(&self, cfg: &MitigationConfig) -> Result<MitigationTrace> {
        mitigate(&self.scored, &self.labels, cfg).map_err(Error::at(Stage::Mitigation))
    }
}

pub fn run_pipeline<P: Predictor + ?Sized>(
    samples: &[Sample],
    predictor: &P,
    groups: &GroupSpec,
    labels: &LabelSpec,
    cfg: &MitigationConfig,
) -> Result<MitigationTrace> {
    prepare_cohort(samples, predictor, groups, labels)?.mitigate(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_samples: usize,
    pub band_model: BandModel,
    pub cut_value: u32,
    pub favorable_fraction: f64,
    pub tally: GroupTally,
    /// Unprivileged over privileged favorable rate; `null` when infinite.
    pub disparate_impact: Option<f64>,
    pub epsilon: Epsilon,
    pub is_fair: bool,
    pub minority: Group,
    pub normalized_di: f64,
    pub biased_samples: usize,
    pub biased_minority_samples: usize,
    pub max_uq: u32,
}

pub fn audit(prepared: &PreparedCohort, epsilon: Epsilon) -> Result<AuditReport> {
    let t = prepared.tally()?;
    let di = disparate_impact(&t).map_err(Error::at(Stage::Scoring))?;
    let (minority, normalized) = minority_from_tally(&t).map_err(Error::at(Stage::Scoring))?;
    let biased = prepared.scored.iter().filter(|s| s.is_biased());
    Ok(AuditReport {
        n_samples: prepared.scored.len(),
        band_model: prepared.cohort.model,
        cut_value: prepared.labels.cut_value().unwrap_or_default(),
        favorable_fraction: prepared.labels.favorable_fraction(),
        tally: t,
        disparate_impact: (!di.is_infinite()).then(|| di.to_f64()),
        epsilon,
        is_fair: is_fair(di, epsilon),
        minority,
        normalized_di: normalized.to_f64(),
        biased_samples: biased.clone().count(),
        biased_minority_samples: biased.filter(|s| s.pair.group == minority).count(),
        max_uq: prepared.scored.iter().map(|s| s.uq).max().unwrap_or(0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub flips: usize,
    pub terminated_by: Termination,
    pub final_di: f64,
    /// Mitigation wall time; omitted from deterministic reports.
    pub elapsed_ms: Option<f64>,
    pub trajectory: Vec<f64>,
}

impl RunSummary {
    fn from_trace(trace: &MitigationTrace, seed: Option<u64>, timing: bool) -> Self {
        RunSummary {
            seed,
            flips: trace.flips.len(),
            terminated_by: trace.terminated_by,
            final_di: trace.final_di,
            elapsed_ms: timing.then_some(trace.elapsed_ms),
            trajectory: trace.trajectory(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub mean_randomized_flips: f64,
    /// `mean_randomized_flips / priority_flips`; 1 when both are zero, `null` when only priority is.
    pub flip_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_id: String,
    pub epsilon: Epsilon,
    pub initial_di: f64,
    pub minority: Group,
    pub priority: RunSummary,
    pub randomized: Vec<RunSummary>,
    pub summary: ComparisonSummary,
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub epsilon: Epsilon,
    pub seeds: Vec<u64>,
    pub max_flips: Option<usize>,
    /// Include wall times in the report. Off by default so reports are reproducible.
    pub record_timing: bool,
    /// Run randomized seeds on the rayon pool.
    pub parallel: bool,
}

impl CompareOptions {
    pub fn new(epsilon: Epsilon, seeds: Vec<u64>) -> Self {
        CompareOptions {
            epsilon,
            seeds,
            max_flips: None,
            record_timing: false,
            parallel: false,
        }
    }
}

pub fn flip_ratio(priority_flips: usize, mean_randomized: f64) -> Option<f64> {
    match (priority_flips, mean_randomized == 0.0) {
        (0, true) => Some(1.0),
        (0, false) => None,
        (p, _) => Some(mean_randomized / p as f64),
    }
}

/// One priority run and one randomized run per seed, all on the same prepared cohort.
pub fn compare(prepared: &PreparedCohort, dataset_id: &str, opts: &CompareOptions) -> Result<ComparisonReport> {
    if opts.seeds.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one seed".into()));
    }
    let base = MitigationConfig {
        epsilon: opts.epsilon,
        strategy: Strategy::Priority,
        seed: 0,
        max_flips: opts.max_flips,
    };
    let priority = prepared.mitigate(&base)?;
    let run_seed = |&seed: &u64| -> Result<RunSummary> {
        let cfg = MitigationConfig {
            strategy: Strategy::Randomized,
            seed,
            ..base
        };
        let trace = prepared.mitigate(&cfg)?;
        Ok(RunSummary::from_trace(&trace, Some(seed), opts.record_timing))
    };
    let randomized: Vec<RunSummary> = if opts.parallel {
        opts.seeds.par_iter().map(run_seed).collect::<Result<_>>()?
    } else {
        opts.seeds.iter().map(run_seed).collect::<Result<_>>()?
    };
    let mean = randomized.iter().map(|r| r.flips as f64).sum::<f64>() / randomized.len() as f64;
    Ok(ComparisonReport {
        dataset_id: dataset_id.to_owned(),
        epsilon: opts.epsilon,
        initial_di: priority.initial_di,
        minority: priority.minority,
        summary: ComparisonSummary {
            mean_randomized_flips: mean,
            flip_ratio: flip_ratio(priority.flips.len(), mean),
        },
        priority: RunSummary::from_trace(&priority, None, opts.record_timing),
        randomized,
    })
}
