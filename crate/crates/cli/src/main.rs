use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use priofair::harness::CompareOptions;
use priofair::io::{
    read_lookup, read_samples, to_json_string, write_id_list, write_lookup, write_samples, write_trajectory_csv,
};
use priofair::{
    audit, compare, generate, prepare_cohort, Epsilon, ErrorKind, GroupSpec, LabelSpec, MitigationConfig,
    PredictorSpec, PreparedCohort, Sample, Strategy, SyntheticSpec, Termination,
};

const EXIT_INPUT: u8 = 2;
const EXIT_UNDEFINED_METRIC: u8 = 3;
const EXIT_UNREACHABLE: u8 = 4;

#[derive(Parser)]
#[command(name = "priofair", version, about = "Priority-based post-processing bias mitigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign tariff bands to factual predictions.
    Tariff(TariffArgs),
    /// Report Disparate Impact and individual bias without mitigating.
    Audit(AuditArgs),
    /// Run one mitigation strategy and emit its trace.
    Mitigate(MitigateArgs),
    /// Compare the priority strategy against seeded randomized runs.
    Compare(CompareArgs),
    /// Write a synthetic biased cohort.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Samples CSV: sample_id,protected_raw,feature_1..feature_k
    #[arg(long)]
    samples: PathBuf,
    /// Prediction lookup CSV: sample_id,group,prediction
    #[arg(long, conflicts_with = "seasonal_lag")]
    lookup: Option<PathBuf>,
    /// Use the built-in seasonal-naive forecaster with this lag instead of a lookup table.
    #[arg(long)]
    seasonal_lag: Option<usize>,
    #[arg(long, default_value = "age")]
    group_attr: String,
    /// Numeric threshold; values <= threshold are unprivileged (0).
    #[arg(long, conflicts_with_all = ["privileged", "unprivileged"])]
    group_threshold: Option<f64>,
    /// Comma-separated privileged category values.
    #[arg(long, value_delimiter = ',', requires = "unprivileged")]
    privileged: Vec<String>,
    /// Comma-separated unprivileged category values.
    #[arg(long, value_delimiter = ',', requires = "privileged")]
    unprivileged: Vec<String>,
}

#[derive(Args)]
struct FairnessArgs {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = LabelSpec::DEFAULT_FAVORABLE_FRACTION)]
    favorable_fraction: f64,
}

#[derive(Args)]
struct TariffArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MitigateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    #[arg(long, default_value = "priority")]
    strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_flips: Option<usize>,
    /// Exit with status 4 when the threshold cannot be reached.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    trajectory_csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    /// Randomized seeds: a list `1,2,5`, a range `1..=20` or a half-open range `0..20`.
    #[arg(long, default_value = "1..=20")]
    seeds: String,
    #[arg(long)]
    max_flips: Option<usize>,
    /// Label stored in the report.
    #[arg(long)]
    dataset_id: Option<String>,
    /// Include wall times; makes output run-dependent.
    #[arg(long)]
    timing: bool,
    /// Run seeds in parallel.
    #[arg(long)]
    parallel: bool,
    /// Emits run,flip_index,di rows for every run.
    #[arg(long)]
    trajectory_csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = priofair::synthetic::CER_LOAD_MEAN)]
    load_mean: f64,
    #[arg(long, default_value_t = priofair::synthetic::CER_LOAD_STD)]
    load_std: f64,
    #[arg(long, default_value_t = 0.3)]
    bias_fraction: f64,
    /// kWh added to biased factual predictions (default: 2 * load-std).
    #[arg(long)]
    bias_shift: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    group_balance: f64,
    /// Output directory for samples.csv, lookup.csv and biased.txt.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<priofair::Error>().map(priofair::Error::kind) {
        Some(ErrorKind::UndefinedMetric) => EXIT_UNDEFINED_METRIC,
        Some(ErrorKind::Internal) => 1,
        _ => EXIT_INPUT,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Tariff(args) => tariff(args),
        Command::Audit(args) => audit_cmd(args),
        Command::Mitigate(args) => mitigate_cmd(args),
        Command::Compare(args) => compare_cmd(args),
        Command::Generate(args) => generate_cmd(args),
    }
}

fn group_spec(input: &InputArgs) -> priofair::Result<GroupSpec> {
    if !input.privileged.is_empty() {
        GroupSpec::categorical(&input.group_attr, input.privileged.clone(), input.unprivileged.clone())
    } else {
        let threshold = input.group_threshold.unwrap_or(priofair::synthetic::AGE_THRESHOLD);
        GroupSpec::threshold(&input.group_attr, threshold)
    }
}

fn load(input: &InputArgs) -> Result<(Vec<Sample>, PredictorSpec, GroupSpec)> {
    let samples = read_samples(&input.samples)?;
    let predictor = match (&input.lookup, input.seasonal_lag) {
        (Some(path), None) => PredictorSpec::TableLookup(read_lookup(path)?),
        (None, Some(lag)) => PredictorSpec::seasonal_naive(lag)?,
        _ => {
            return Err(
                priofair::Error::InvalidPredictor("pass exactly one of --lookup or --seasonal-lag".into()).into(),
            )
        }
    };
    Ok((samples, predictor, group_spec(input)?))
}

fn prepared(input: &InputArgs, fairness: &FairnessArgs) -> Result<(PreparedCohort, Epsilon)> {
    let (samples, predictor, groups) = load(input)?;
    let labels = LabelSpec::new(fairness.favorable_fraction)?;
    let eps = Epsilon::new(fairness.epsilon)?;
    Ok((prepare_cohort(&samples, &predictor, &groups, &labels)?, eps))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = output(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn tariff(args: TariffArgs) -> Result<ExitCode> {
    let (samples, predictor, groups) = load(&args.input)?;
    let preds = samples
        .iter()
        .map(|s| Ok((s.id.clone(), priofair::predict(&predictor, s, &groups, None)?)))
        .collect::<priofair::Result<Vec<_>>>()?;
    let bands = priofair::assign_tariffs(&preds)?;
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "sample_id,prediction,z,tid")?;
    for ((_, y), b) in preds.iter().zip(&bands) {
        writeln!(w, "{},{},{},{}", b.sample_id, y, b.z, b.band)?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn audit_cmd(args: AuditArgs) -> Result<ExitCode> {
    let (prep, eps) = prepared(&args.input, &args.fairness)?;
    let report = audit(&prep, eps)?;
    emit(args.out.as_deref(), &to_json_string(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn mitigate_cmd(args: MitigateArgs) -> Result<ExitCode> {
    let (prep, eps) = prepared(&args.input, &args.fairness)?;
    let cfg = MitigationConfig {
        epsilon: eps,
        strategy: args.strategy,
        seed: args.seed,
        max_flips: args.max_flips,
    };
    let trace = prep.mitigate(&cfg)?;
    emit(args.out.as_deref(), &to_json_string(&trace)?)?;
    if let Some(path) = &args.trajectory_csv {
        write_trajectory_csv(&trace.trajectory(), output(Some(path))?)?;
    }
    if args.strict && trace.terminated_by == Termination::CandidatesExhausted {
        eprintln!(
            "threshold {} not reached: candidates exhausted at DI {}",
            1.0 - eps.value(),
            trace.final_di
        );
        return Ok(ExitCode::from(EXIT_UNREACHABLE));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        (a.trim().parse()?..=b.trim().parse()?).collect()
    } else if let Some((a, b)) = spec.split_once("..") {
        (a.trim().parse()?..b.trim().parse()?).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("invalid seed list {spec:?}"))?
    };
    if seeds.is_empty() {
        bail!(priofair::Error::InvalidConfig(format!("seed spec {spec:?} is empty")));
    }
    Ok(seeds)
}

fn compare_cmd(args: CompareArgs) -> Result<ExitCode> {
    let seeds = parse_seeds(&args.seeds).map_err(|e| priofair::Error::InvalidConfig(format!("{e:#}")))?;
    let (prep, eps) = prepared(&args.input, &args.fairness)?;
    let dataset_id = args.dataset_id.clone().unwrap_or_else(|| {
        args.input
            .samples
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let opts = CompareOptions {
        max_flips: args.max_flips,
        record_timing: args.timing,
        parallel: args.parallel,
        ..CompareOptions::new(eps, seeds)
    };
    let report = compare(&prep, &dataset_id, &opts)?;
    emit(args.out.as_deref(), &to_json_string(&report)?)?;
    if let Some(path) = &args.trajectory_csv {
        let mut w = output(Some(path))?;
        writeln!(w, "run,flip_index,di")?;
        let runs = std::iter::once(("priority".to_owned(), &report.priority)).chain(
            report
                .randomized
                .iter()
                .map(|r| (format!("seed-{}", r.seed.unwrap_or_default()), r)),
        );
        for (name, run) in runs {
            for (i, di) in run.trajectory.iter().enumerate() {
                writeln!(w, "{name},{i},{di}")?;
            }
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn generate_cmd(args: GenerateArgs) -> Result<ExitCode> {
    let spec = SyntheticSpec {
        n: args.n,
        seed: args.seed,
        load_mean: args.load_mean,
        load_std: args.load_std,
        bias_fraction: args.bias_fraction,
        bias_shift: args.bias_shift.unwrap_or(2.0 * args.load_std),
        group_balance: args.group_balance,
    };
    let cohort = generate(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_samples(&cohort.samples, args.out.join("samples.csv"))?;
    write_lookup(&cohort.table, args.out.join("lookup.csv"))?;
    write_id_list(&cohort.biased, args.out.join("biased.txt"))?;
    eprintln!(
        "wrote {} samples ({} biased) to {}",
        cohort.samples.len(),
        cohort.biased.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
