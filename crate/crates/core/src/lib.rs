//! Priority-based post-processing bias mitigation.
//!
//! A black-box predictor is queried with each sample's own protected group and
//! with the opposite group. Both predictions are bucketed into tariff bands
//! with a single Gaussian band model; samples whose band changes are
//! individually biased, scored by the band gap (Unfairness Quotient). The
//! mitigation engine then replaces minority-group labels with their
//! counterfactual labels, largest gap first, until Disparate Impact reaches
//! `1 - epsilon`.

pub mod bucketing;
pub mod engine;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod predictor;
pub mod synthetic;

pub use bucketing::{assign_band, assign_tariffs, fit_bands, BandAssignment, BandModel};
pub use engine::{
    detect_and_score, determine_minority, mitigate, mitigate_priority, mitigate_randomized, FlipRecord,
    MitigationTrace, ScoredSample, Termination,
};
pub use error::{Error, ErrorKind, Result, Stage};
pub use harness::{
    audit, compare, prepare_cohort, run_pipeline, AuditReport, CompareOptions, ComparisonReport, PreparedCohort,
    RunSummary,
};
pub use metrics::{apply_flip, disparate_impact, is_fair, tally, DisparateImpact, GroupTally};
pub use model::{
    binarize_group, favorability, Epsilon, Group, GroupSpec, LabelSpec, MitigationConfig, PredictionPair,
    ProtectedValue, Sample, Strategy,
};
pub use predictor::{label_cohort, predict, predict_pair, LabeledCohort, LookupTable, Predictor, PredictorSpec};
pub use synthetic::{generate, SyntheticCohort, SyntheticSpec};
