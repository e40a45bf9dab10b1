//! Fixtures shared by the criterion benches.

use priofair::{generate, prepare_cohort, LabelSpec, PredictorSpec, PreparedCohort, SyntheticSpec};

/// Synthetic biased cohort, predicted, banded and scored.
pub fn biased_cohort(n: usize, seed: u64) -> PreparedCohort {
    let cohort = generate(&SyntheticSpec {
        n,
        seed,
        ..Default::default()
    })
    .expect("valid synthetic spec");
    let predictor = PredictorSpec::TableLookup(cohort.table);
    let labels = LabelSpec::new(LabelSpec::DEFAULT_FAVORABLE_FRACTION).expect("valid fraction");
    prepare_cohort(&cohort.samples, &predictor, &cohort.groups, &labels).expect("cohort prepares")
}

/// `n` deterministic predictions spread over a few standard deviations.
pub fn spread_predictions(n: usize) -> Vec<(String, f64)> {
    (0..n)
        .map(|i| {
            let x = (i as f64 * 0.618_033_988_75).fract();
            (format!("s{i}"), 32.0 + 30.0 * (x - 0.5))
        })
        .collect()
}
