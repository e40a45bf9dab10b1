//! Individual bias detection, Unfairness Quotient scoring and the two mitigation
//! strategies.
//!
//! A sample is individually biased when its factual and counterfactual labels
//! differ. Mitigation replaces the factual label of biased samples in the
//! minority group with their counterfactual label, one at a time, until the
//! minority-normalized DI reaches `1 - epsilon`. The priority strategy visits
//! candidates by decreasing Unfairness Quotient (ties by ascending sample id);
//! the randomized strategy visits them in a seeded uniform order.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{apply_flip, tally, DisparateImpact, GroupTally};
use crate::model::{Group, LabelSpec, MitigationConfig, PredictionPair, Strategy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub pair: PredictionPair,
    /// Unfairness Quotient, `|y_counterfactual - y_factual|`.
    pub uq: u32,
}

impl ScoredSample {
    pub fn is_biased(&self) -> bool {
        self.uq > 0
    }
}

/// Scores every pair, preserving order.
pub fn detect_and_score(pairs: &[PredictionPair]) -> Vec<ScoredSample> {
    pairs
        .iter()
        .map(|p| ScoredSample {
            uq: p.y_counterfactual.abs_diff(p.y_factual),
            pair: p.clone(),
        })
        .collect()
}

/// The group with the lower favorable rate, and DI normalized to be at most 1.
pub fn determine_minority(pairs: &[PredictionPair], labels: &LabelSpec) -> Result<(Group, DisparateImpact)> {
    minority_from_tally(&tally(pairs, labels)?)
}

pub fn minority_from_tally(t: &GroupTally) -> Result<(Group, DisparateImpact)> {
    let di = crate::metrics::disparate_impact(t)?;
    if di > DisparateImpact::ONE {
        Ok((Group::Privileged, di.recip()))
    } else {
        Ok((Group::Unprivileged, di))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ThresholdReached,
    CandidatesExhausted,
    MaxFlips,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub sample_id: String,
    pub old_label: u32,
    pub new_label: u32,
    pub di_after: f64,
}

/// Ordered log of one mitigation run. DI values are normalized to the minority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationTrace {
    pub initial_di: f64,
    pub final_di: f64,
    pub minority: Group,
    pub terminated_by: Termination,
    pub elapsed_ms: f64,
    pub flips: Vec<FlipRecord>,
}

impl MitigationTrace {
    pub fn elapsed(&self) -> Duration {
        Duration::from_secs_f64(self.elapsed_ms / 1000.0)
    }

    /// DI series including the initial point.
    pub fn trajectory(&self) -> Vec<f64> {
        std::iter::once(self.initial_di)
            .chain(self.flips.iter().map(|f| f.di_after))
            .collect()
    }

    /// Factual labels after replaying the flips over `pairs`.
    pub fn final_labels(&self, pairs: &[PredictionPair]) -> Vec<u32> {
        let mut labels: Vec<u32> = pairs.iter().map(|p| p.y_factual).collect();
        let index: std::collections::HashMap<&str, usize> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.sample_id.as_str(), i))
            .collect();
        for f in &self.flips {
            if let Some(&i) = index.get(f.sample_id.as_str()) {
                labels[i] = f.new_label;
            }
        }
        labels
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &MitigationTrace) -> bool {
        self.initial_di == other.initial_di
            && self.final_di == other.final_di
            && self.minority == other.minority
            && self.terminated_by == other.terminated_by
            && self.flips == other.flips
    }
}

/// Runs the strategy selected by `cfg`.
pub fn mitigate(scored: &[ScoredSample], labels: &LabelSpec, cfg: &MitigationConfig) -> Result<MitigationTrace> {
    match cfg.strategy {
        Strategy::Priority => mitigate_priority(scored, labels, cfg),
        Strategy::Randomized => mitigate_randomized(scored, labels, cfg),
    }
}

/// Visits candidates by decreasing Unfairness Quotient, ties by ascending sample id.
pub fn mitigate_priority(
    scored: &[ScoredSample],
    labels: &LabelSpec,
    cfg: &MitigationConfig,
) -> Result<MitigationTrace> {
    let start = Instant::now();
    let prepared = prepare(scored, labels)?;
    let order = priority_order(scored, prepared.candidates(scored));
    run(scored, cfg, prepared, order.into_iter(), start)
}

/// Candidates sorted by `(uq desc, sample_id asc)`.
///
/// Candidates are bucketed by uq in one pass; each bucket keeps input order,
/// which is already the id order for the usual id-sorted cohorts.
fn priority_order(scored: &[ScoredSample], mut candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let id = |i: usize| scored[i].pair.sample_id.as_str();
    let limit = 4 * scored.len() + 64;
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut sorted = true;
    for i in candidates.by_ref() {
        let uq = scored[i].uq as usize;
        if uq >= buckets.len() {
            if uq > limit {
                let mut all: Vec<usize> = buckets.into_iter().flatten().collect();
                all.push(i);
                all.extend(candidates);
                all.sort_unstable_by(|&a, &b| scored[b].uq.cmp(&scored[a].uq).then_with(|| id(a).cmp(id(b))));
                return all;
            }
            buckets.resize_with(uq + 1, Vec::new);
        }
        if sorted && buckets[uq].last().is_some_and(|&prev| id(prev) >= id(i)) {
            sorted = false;
        }
        buckets[uq].push(i);
    }
    let mut out = Vec::with_capacity(buckets.iter().map(Vec::len).sum());
    for mut bucket in buckets.into_iter().rev() {
        if !sorted {
            bucket.sort_unstable_by(|&a, &b| id(a).cmp(id(b)));
        }
        out.append(&mut bucket);
    }
    out
}

/// Visits candidates in a uniform order drawn from `ChaCha8Rng::seed_from_u64(cfg.seed)`.
///
/// The order is the prefix of a Fisher-Yates shuffle of the candidates (taken in
/// input order), drawn lazily so only visited candidates consume randomness.
pub fn mitigate_randomized(
    scored: &[ScoredSample],
    labels: &LabelSpec,
    cfg: &MitigationConfig,
) -> Result<MitigationTrace> {
    let start = Instant::now();
    let prepared = prepare(scored, labels)?;
    let mut pool: Vec<usize> = prepared.candidates(scored).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next = 0usize;
    let order = std::iter::from_fn(move || {
        if next >= pool.len() {
            return None;
        }
        let j = rng.random_range(next..pool.len());
        pool.swap(next, j);
        next += 1;
        Some(pool[next - 1])
    });
    run(scored, cfg, prepared, order, start)
}

struct Prepared {
    tally: GroupTally,
    minority: Group,
    initial: DisparateImpact,
    cut: u32,
}

impl Prepared {
    fn candidates<'a>(&self, scored: &'a [ScoredSample]) -> impl Iterator<Item = usize> + 'a {
        let minority = self.minority;
        scored
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.uq > 0 && s.pair.group == minority)
            .map(|(i, _)| i)
    }
}

fn prepare(scored: &[ScoredSample], labels: &LabelSpec) -> Result<Prepared> {
    let cut = labels.cut()?;
    let mut counts = [0u64; 4];
    for s in scored {
        let fav = (s.pair.y_factual <= cut) as u64;
        let slot = s.pair.group.as_u8() as usize;
        counts[slot] += 1;
        counts[2 + slot] += fav;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(crate::Error::UndefinedMetric("a protected group is empty"));
    }
    let narrow = |v: u64| u32::try_from(v).map_err(|_| crate::Error::TallyInvariant("group too large"));
    let tally = GroupTally::new(
        narrow(counts[1])?,
        narrow(counts[0])?,
        narrow(counts[3])?,
        narrow(counts[2])?,
    )?;
    let (minority, initial) = minority_from_tally(&tally)?;
    Ok(Prepared {
        tally,
        minority,
        initial,
        cut,
    })
}

fn run(
    scored: &[ScoredSample],
    cfg: &MitigationConfig,
    prepared: Prepared,
    order: impl Iterator<Item = usize>,
    start: Instant,
) -> Result<MitigationTrace> {
    let Prepared {
        mut tally,
        minority,
        initial,
        cut,
    } = prepared;
    let mut met = initial.meets_lower_bound(cfg.epsilon);
    let mut flips = Vec::new();
    let mut terminated_by = Termination::CandidatesExhausted;

    if met {
        terminated_by = Termination::ThresholdReached;
    } else if cfg.max_flips == Some(0) {
        terminated_by = Termination::MaxFlips;
    } else {
        for i in order {
            let s = &scored[i];
            let old = s.pair.y_factual;
            let new = s.pair.y_counterfactual;
            tally = apply_flip(&tally, minority, old <= cut, new <= cut)?;
            let (di_after, reached) = tally.minority_ratio(minority, cfg.epsilon);
            met = reached;
            flips.push(FlipRecord {
                sample_id: s.pair.sample_id.clone(),
                old_label: old,
                new_label: new,
                di_after,
            });
            if met {
                terminated_by = Termination::ThresholdReached;
                break;
            }
            if cfg.max_flips.is_some_and(|m| flips.len() >= m) {
                terminated_by = Termination::MaxFlips;
                break;
            }
        }
    }

    debug_assert_eq!(met, terminated_by == Termination::ThresholdReached);
    let final_di = if flips.is_empty() {
        initial
    } else {
        tally.ratio_for(minority)?
    };
    Ok(MitigationTrace {
        initial_di: initial.to_f64(),
        final_di: final_di.to_f64(),
        minority,
        terminated_by,
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
        flips,
    })
}
