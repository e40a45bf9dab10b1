//! Acceptance checks, one PASS/FAIL line per criterion.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use num_rational::Ratio;
use priofair::harness::{compare, CompareOptions};
use priofair::synthetic::{CER_LOAD_MEAN, CER_LOAD_STD};
use priofair::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = Ratio<u64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("di-oracle-equivalence", di_oracle_equivalence),
        ("priority-loop-fidelity", priority_loop_fidelity),
        ("threshold-stop", threshold_stop),
        ("fewer-flips", fewer_flips),
        ("timing-ordering", timing_ordering),
        ("bucketing-properties", bucketing_properties),
        ("compare-determinism", compare_determinism),
        ("favorability-split", favorability_split),
        ("incremental-update", incremental_update),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!(
            "{} {} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn group_of(rng: &mut impl Rng) -> Group {
    if rng.random_bool(0.5) {
        Group::Privileged
    } else {
        Group::Unprivileged
    }
}

/// Favorable rate of unprivileged over privileged, counted from scratch.
/// `None` is undefined, `Some(None)` is infinite.
fn oracle_di(groups: &[Group], favorable: &[bool], numerator: Group) -> Option<Option<Q>> {
    let count = |g: Group| {
        let n = groups.iter().filter(|&&x| x == g).count() as u64;
        let f = groups.iter().zip(favorable).filter(|&(&x, &fav)| x == g && fav).count() as u64;
        (f, n)
    };
    let (fu, nu) = count(numerator);
    let (fp, np) = count(numerator.other());
    if nu == 0 || np == 0 {
        return None;
    }
    let rate_u = Q::new(fu, nu);
    if fp == 0 {
        return if fu == 0 { None } else { Some(None) };
    }
    Some(Some(rate_u / Q::new(fp, np)))
}

fn as_oracle(di: Result<DisparateImpact>) -> Option<Option<Q>> {
    match di {
        Err(_) => None,
        Ok(d) if d.is_infinite() => Some(None),
        Ok(d) => Some(Some(Q::new(d.numer(), d.denom()))),
    }
}

fn di_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=40);
        let cut = rng.random_range(0..6);
        let labels = LabelSpec::with_cut(0.4, cut).unwrap();
        let pairs: Vec<PredictionPair> = (0..n)
            .map(|i| {
                let y = rng.random_range(0..8);
                PredictionPair::new(format!("c{case}-{i}"), y, y, group_of(&mut rng))
            })
            .collect();
        let groups: Vec<Group> = pairs.iter().map(|p| p.group).collect();
        let fav: Vec<bool> = pairs.iter().map(|p| p.y_factual <= cut).collect();
        let got = tally(&pairs, &labels).and_then(|t| disparate_impact(&t));
        if as_oracle(got) != oracle_di(&groups, &fav, Group::Unprivileged) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 1.0,
        format!("500 tallies, {mismatches} mismatches, {secs:.3}s (limit 1s)"),
    )
}

/// Straight-line transcription of the priority mitigation pseudocode with a
/// full recount of the ratio after every flip.
fn reference_priority(pairs: &[PredictionPair], cut: u32, one_minus_eps: Q) -> Option<Vec<u32>> {
    let groups: Vec<Group> = pairs.iter().map(|p| p.group).collect();
    let mut c: Vec<u32> = pairs.iter().map(|p| p.y_factual).collect();
    let fav = |c: &[u32]| c.iter().map(|&y| y <= cut).collect::<Vec<bool>>();

    let mut minority = Group::Unprivileged;
    let mut di = oracle_di(&groups, &fav(&c), minority)?;
    if di.is_none_or(|d| d > Q::from_integer(1)) {
        minority = Group::Privileged;
        di = Some(di.map_or(Q::from_integer(0), |d| d.recip()));
    }
    let mut di = di.unwrap();

    let b: Vec<u32> = pairs.iter().map(|p| p.y_factual.abs_diff(p.y_counterfactual)).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&i, &j| {
        b[j].cmp(&b[i])
            .then_with(|| pairs[i].sample_id.cmp(&pairs[j].sample_id))
    });

    if di >= one_minus_eps {
        return Some(c);
    }
    for k in order {
        if b[k] > 0 && groups[k] == minority {
            c[k] = pairs[k].y_counterfactual;
            di = oracle_di(&groups, &fav(&c), minority)?.expect("other group keeps its favorable count");
            if di >= one_minus_eps {
                break;
            }
        }
    }
    Some(c)
}

fn priority_loop_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let epsilons = [0.0, 0.05, 0.1, 0.2, 0.25, 0.5];
    let (mut instances, mut mismatches, mut flipped) = (0, 0, 0);
    for case in 0..3000 {
        let n = rng.random_range(1..=12);
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        let pairs: Vec<PredictionPair> = ids
            .iter()
            .map(|id| {
                let y = rng.random_range(0..5);
                let cf = if rng.random_bool(0.5) {
                    y
                } else {
                    rng.random_range(0..5)
                };
                PredictionPair::new(format!("x{id:02}"), y, cf, group_of(&mut rng))
            })
            .collect();
        let cut = rng.random_range(0..5);
        let eps_value = epsilons[case % epsilons.len()];
        let eps = Epsilon::new(eps_value).unwrap();
        let one_minus_eps = Q::new(((1.0 - eps_value) * 1000.0).round() as u64, 1000);
        let labels = LabelSpec::with_cut(0.4, cut).unwrap();
        let scored = detect_and_score(&pairs);
        let got = mitigate_priority(&scored, &labels, &MitigationConfig::priority(eps));
        let want = reference_priority(&pairs, cut, one_minus_eps);
        instances += 1;
        match (got, want) {
            (Ok(trace), Some(labels)) => {
                flipped += usize::from(!trace.flips.is_empty());
                if trace.final_labels(&pairs) != labels {
                    mismatches += 1;
                }
            }
            (Err(_), None) => {}
            _ => mismatches += 1,
        }
    }
    outcome(
        mismatches == 0 && instances >= 1000,
        format!("{instances} instances ({flipped} with flips), {mismatches} mismatches"),
    )
}

fn biased_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n: 200,
        seed,
        bias_fraction: 0.3,
        bias_shift: 2.0 * CER_LOAD_STD,
        ..Default::default()
    }
}

fn prepared(spec: &SyntheticSpec) -> PreparedCohort {
    let c = generate(spec).unwrap();
    prepare_cohort(
        &c.samples,
        &PredictorSpec::TableLookup(c.table),
        &c.groups,
        &LabelSpec::new(LabelSpec::DEFAULT_FAVORABLE_FRACTION).unwrap(),
    )
    .unwrap()
}

fn minority_ratio_after(prep: &PreparedCohort, flipped: &[&str], minority: Group) -> Q {
    let cut = prep.labels.cut_value().unwrap();
    let flipped: BTreeSet<&str> = flipped.iter().copied().collect();
    let groups: Vec<Group> = prep.scored.iter().map(|s| s.pair.group).collect();
    let fav: Vec<bool> = prep
        .scored
        .iter()
        .map(|s| {
            let y = if flipped.contains(s.pair.sample_id.as_str()) {
                s.pair.y_counterfactual
            } else {
                s.pair.y_factual
            };
            y <= cut
        })
        .collect();
    oracle_di(&groups, &fav, minority).unwrap().unwrap()
}

fn threshold_stop() -> Outcome {
    let bound = Q::new(9, 10);
    let (mut reached, mut violations) = (0, 0);
    for seed in 0..20 {
        let prep = prepared(&biased_spec(seed));
        let trace = prep
            .mitigate(&MitigationConfig::priority(Epsilon::new(0.1).unwrap()))
            .unwrap();
        if trace.terminated_by != Termination::ThresholdReached || trace.flips.is_empty() {
            continue;
        }
        reached += 1;
        let ids: Vec<&str> = trace.flips.iter().map(|f| f.sample_id.as_str()).collect();
        let last = minority_ratio_after(&prep, &ids, trace.minority);
        let before = minority_ratio_after(&prep, &ids[..ids.len() - 1], trace.minority);
        if !(last >= bound && before < bound && trace.final_di >= 0.9) {
            violations += 1;
        }
    }
    outcome(
        violations == 0 && reached > 0,
        format!("{reached}/20 runs reached the threshold, {violations} violations"),
    )
}

fn fewer_flips() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..20 {
        let prep = prepared(&biased_spec(seed));
        let report = compare(
            &prep,
            "acceptance",
            &CompareOptions::new(Epsilon::DEFAULT, (1..=20).collect()),
        )
        .unwrap();
        let mean = report.summary.mean_randomized_flips;
        if mean >= report.priority.flips as f64 {
            wins += 1;
        }
        rows.push(format!("{}/{:.1}", report.priority.flips, mean));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        wins >= 18 && secs < 30.0,
        format!(
            "{wins}/20 cohorts with mean randomized >= priority (need 18), {secs:.2}s; priority/mean: {}",
            rows.join(" ")
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn timing_ordering() -> Outcome {
    let prep = prepared(&SyntheticSpec {
        n: 10_000,
        seed: 42,
        ..biased_spec(0)
    });
    let eps = Epsilon::DEFAULT;
    let time = |cfg: &MitigationConfig| {
        let t = Instant::now();
        let trace = prep.mitigate(cfg).unwrap();
        (t.elapsed().as_secs_f64() * 1e3, trace.flips.len())
    };
    for rep in 0..3 {
        time(&MitigationConfig::priority(eps));
        time(&MitigationConfig::randomized(eps, rep));
    }
    let (mut prio, mut rand) = (Vec::new(), Vec::new());
    let (mut prio_flips, mut rand_flips) = (0, 0);
    for rep in 0..10 {
        let (t, f) = time(&MitigationConfig::priority(eps));
        prio.push(t);
        prio_flips = f;
        let (t, f) = time(&MitigationConfig::randomized(eps, rep));
        rand.push(t);
        rand_flips += f;
    }
    let (p, r) = (median(prio), median(rand));
    outcome(
        p <= r,
        format!(
            "n=10000, median priority {p:.3}ms ({prio_flips} flips) vs randomized {r:.3}ms ({:.1} flips avg)",
            rand_flips as f64 / 10.0
        ),
    )
}

fn bucketing_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |what: &str| {
        if failures.len() < 5 {
            failures.push(what.to_owned());
        }
    };
    for _ in 0..100_000 {
        // Dyadic values and power-of-two lengths keep the fitted moments
        // exact, so a shifted vector must reproduce the same z-scores bit for bit.
        let n = 1usize << rng.random_range(1..=6);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-400i32..=400) as f64 / 8.0).collect();
        if ys.iter().all(|&y| y == ys[0]) {
            continue;
        }
        let named: Vec<(String, f64)> = ys.iter().enumerate().map(|(i, &y)| (i.to_string(), y)).collect();
        let tids: Vec<u32> = assign_tariffs(&named).unwrap().iter().map(|b| b.band).collect();

        if tids.iter().min() != Some(&0) {
            fail("least band is not 0");
        }
        for i in 0..n {
            for j in 0..n {
                if ys[i] <= ys[j] && tids[i] > tids[j] {
                    fail("order violated");
                }
            }
        }

        let mean = ys.iter().sum::<f64>() / n as f64;
        let rho = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64).sqrt();
        let interval = |y: f64| ((y - mean) / rho).floor() as i64;
        for i in 0..n {
            for j in 0..n {
                if (interval(ys[i]) == interval(ys[j])) != (tids[i] == tids[j]) {
                    fail("band equality violated");
                }
            }
        }

        let shift = rng.random_range(-100i32..=100) as f64;
        let shifted: Vec<(String, f64)> = named.iter().map(|(id, y)| (id.clone(), y + shift)).collect();
        let moved: Vec<u32> = assign_tariffs(&shifted).unwrap().iter().map(|b| b.band).collect();
        if moved != tids {
            fail("translation changed bands");
        }
    }

    let spread = |n: usize| -> Vec<(String, f64)> {
        let mut r = ChaCha8Rng::seed_from_u64(n as u64);
        (0..n).map(|i| (format!("s{i}"), r.random_range(0.0..100.0))).collect()
    };
    let time = |v: &[(String, f64)]| {
        (0..5)
            .map(|_| {
                let t = Instant::now();
                assign_tariffs(v).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (small, large) = (spread(10_000), spread(100_000));
    time(&small);
    let ratio = time(&large) / time(&small);
    if ratio.is_nan() || ratio >= 20.0 {
        fail("super-linear scaling");
    }
    outcome(
        failures.is_empty(),
        format!("1e5 vectors, time ratio n=1e5/1e4 {ratio:.1} (limit 20){}", {
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        }),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_priofair"))
        .args(args)
        .output()
        .unwrap()
}

fn compare_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cohort");
    let data_str = data.to_str().unwrap();
    let g = cli(&["generate", "--seed", "17", "--out", data_str]);
    if !g.status.success() {
        return outcome(false, "generate failed");
    }
    let samples = data.join("samples.csv");
    let lookup = data.join("lookup.csv");
    let run = |out: &Path, parallel: bool| {
        let mut args = vec![
            "compare",
            "--samples",
            samples.to_str().unwrap(),
            "--lookup",
            lookup.to_str().unwrap(),
            "--seeds",
            "1..=20",
            "--out",
            out.to_str().unwrap(),
        ];
        if parallel {
            args.push("--parallel");
        }
        let o = cli(&args);
        o.status.success().then(|| std::fs::read(out).unwrap())
    };
    let a = run(&dir.path().join("a.json"), false);
    let b = run(&dir.path().join("b.json"), false);
    let c = run(&dir.path().join("c.json"), true);
    let same = a.is_some() && a == b && a == c;
    outcome(
        same,
        format!(
            "two sequential runs and one parallel run: {} ({} bytes)",
            if same { "byte-identical" } else { "differ" },
            a.map_or(0, |v| v.len())
        ),
    )
}

fn favorability_split() -> Outcome {
    let prep = prepared(&SyntheticSpec {
        n: 10_000,
        seed: 8,
        load_mean: CER_LOAD_MEAN,
        load_std: CER_LOAD_STD,
        bias_fraction: 0.0,
        ..Default::default()
    });
    let cut = prep.labels.cut_value().unwrap();
    let fav = prep.scored.iter().filter(|s| s.pair.y_factual <= cut).count();
    let share = fav as f64 / prep.scored.len() as f64;
    let model = &prep.cohort.model;
    outcome(
        (0.38..=0.42).contains(&share),
        format!(
            "n=10000, mu={:.2}, rho={:.2}, cut band {cut}, favorable share {:.1}% (target 38-42%)",
            model.mean,
            model.std_dev,
            share * 100.0
        ),
    )
}

fn incremental_update() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    let mut steps = 0;
    for _ in 0..5 {
        let n = rng.random_range(20..200);
        let groups: Vec<Group> = (0..n).map(|_| group_of(&mut rng)).collect();
        let mut fav: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let recount = |fav: &[bool]| {
            let c = |g: Group, only_fav: bool| {
                groups
                    .iter()
                    .zip(fav)
                    .filter(|&(&x, &f)| x == g && (f || !only_fav))
                    .count() as u32
            };
            GroupTally::new(
                c(Group::Privileged, false),
                c(Group::Unprivileged, false),
                c(Group::Privileged, true),
                c(Group::Unprivileged, true),
            )
            .unwrap()
        };
        let mut chained = recount(&fav);
        for _ in 0..1000 {
            let i = rng.random_range(0..n);
            let new = rng.random_bool(0.5);
            chained = apply_flip(&chained, groups[i], fav[i], new).unwrap();
            fav[i] = new;
            steps += 1;
            if chained != recount(&fav) {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("5 sequences x 1000 steps ({steps} steps), {mismatches} mismatches"),
    )
}
