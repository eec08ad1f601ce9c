use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use subpop_cli::config::{PoolSection, RatesSection, SyntheticSection};
use subpop_cli::error::{read_to_string, write_string, CliError};
use subpop_cli::pipeline::{
    empirical_target_proportions, fit_pipeline, parse_fit_json, Beta01Method, Beta01MethodName, BetaMethod,
    BetaMethodName, PipelineOptions,
};
use subpop_cli::predictions::{evaluate_tags, parse_predictions_csv, predictions_to_csv, score_targets, Tag};
use subpop_cli::{run_experiment, write_outputs, ExperimentConfig};
use subpop_core::classify::{FitOptions, DEFAULT_LAMBDA};
use subpop_core::dataset::{load_csv, read_csv, write_csv};
use subpop_core::proportions::{MomentSpec, DEFAULT_ANCHOR_QUANTILE};
use subpop_core::synthgen::{generate, parse_truth_csv, partition_pool, truth_to_csv_string, PartitionSpec, SyntheticSpec};
use subpop_core::{DataError, EstimationError};

#[derive(Parser)]
#[command(name = "subpop", version, about = "Domain adaptation when the (Y=1, A=1) source cell is missing")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic source/target dataset plus its truth table.
    Simulate {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n0: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset CSV; the truth table goes next to it as `<stem>.truth.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a fully labeled pool into source and unlabeled target rows.
    Split {
        #[arg(long)]
        pool: PathBuf,
        /// Source rate of the (y=0, a=1) cell.
        #[arg(long)]
        a: f64,
        /// Source rate of the (y=1, a=0) cell.
        #[arg(long)]
        b: f64,
        /// Source rate of the (y=0, a=0) cell.
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit nuisances and estimate proportions; writes a JSON artifact.
    Fit(FitArgs),
    /// Score the target rows of a dataset with a fitted artifact.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-tag accuracy / F1 from a predictions table and a truth table.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// JSON report; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated experiment; writes metrics.csv and summary.json.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "kl")]
    beta_method: BetaMethodName,
    #[arg(long, default_value = "anchor")]
    beta01_method: Beta01MethodName,
    #[arg(long)]
    beta10: Option<f64>,
    #[arg(long)]
    beta00: Option<f64>,
    #[arg(long)]
    beta01: Option<f64>,
    /// Comma-separated projection for the moment method; principal axis otherwise.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    moment_direction: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_ANCHOR_QUANTILE)]
    anchor_quantile: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Truth table; enables the oracle methods.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    beta_method: Option<BetaMethodName>,
    #[arg(long)]
    beta01_method: Option<Beta01MethodName>,
    #[arg(long)]
    anchor_quantile: Option<f64>,
    #[arg(long)]
    user_beta10: Option<f64>,
    #[arg(long)]
    user_beta00: Option<f64>,
    #[arg(long)]
    user_beta01: Option<f64>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    rate_a: Option<f64>,
    #[arg(long)]
    rate_b: Option<f64>,
    #[arg(long)]
    rate_c: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn truth_path(out: &Path) -> PathBuf {
    out.with_extension("truth.csv")
}

fn write(path: &Path, text: &str) -> Result<()> {
    Ok(write_string(path, text)?)
}

fn read(path: &Path) -> Result<String> {
    Ok(read_to_string(path)?)
}

fn simulate(n1: usize, n0: usize, seed: u64, out: &Path) -> Result<()> {
    let split = generate(&SyntheticSpec::new(n1, n0, seed))?;
    write_csv(&split.dataset, out)?;
    write(&truth_path(out), &truth_to_csv_string(&split.truth))?;
    eprintln!("wrote {} rows to {} ({} target)", split.dataset.len(), out.display(), split.truth.len());
    Ok(())
}

fn split(pool: &Path, rates: [f64; 3], seed: u64, out: &Path) -> Result<()> {
    let pool = read_csv(pool, true)?;
    let ps = PartitionSpec {
        rate_a: rates[0],
        rate_b: rates[1],
        rate_c: rates[2],
        seed,
    };
    let split = partition_pool(&pool, &ps)?;
    write_csv(&split.dataset, out)?;
    write(&truth_path(out), &truth_to_csv_string(&split.truth))?;
    let c = split.dataset.cell_counts();
    eprintln!(
        "source: n100={} n101={} n110={}; target: {}",
        c.n100, c.n101, c.n110, c.n0
    );
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let usage = |m: &str| CliError::Config(m.into());
    let ds = load_csv(&args.data, true)?;
    let beta = match args.beta_method {
        BetaMethodName::Kl => BetaMethod::Kl,
        BetaMethodName::Moment => BetaMethod::Moment(match &args.moment_direction {
            Some(d) => MomentSpec::Direction(d.clone()),
            None => MomentSpec::PrincipalAxis,
        }),
        BetaMethodName::Oracle => BetaMethod::Oracle,
        BetaMethodName::User => BetaMethod::User {
            beta10: args.beta10.ok_or_else(|| usage("--beta-method user needs --beta10"))?,
            beta00: args.beta00.ok_or_else(|| usage("--beta-method user needs --beta00"))?,
        },
    };
    let beta01 = match args.beta01_method {
        Beta01MethodName::Anchor => Beta01Method::Anchor {
            quantile: args.anchor_quantile,
        },
        Beta01MethodName::Oracle => Beta01Method::Oracle,
        Beta01MethodName::User => {
            Beta01Method::User(args.beta01.ok_or_else(|| usage("--beta01-method user needs --beta01"))?)
        }
    };
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(usage("--threshold must lie in (0, 1)").into());
    }
    let opts = PipelineOptions {
        fit: FitOptions::with_lambda(args.lambda),
        beta,
        beta01,
        threshold: args.threshold,
    };
    let oracle = match &args.truth {
        Some(p) => {
            let truth = parse_truth_csv(&read(p)?)?;
            let c = ds.cell_counts();
            let b1 = c.n110 as f64 / (c.n110 + c.n100).max(1) as f64;
            Some(empirical_target_proportions(&ds, &truth, b1)?)
        }
        None => None,
    };
    let art = fit_pipeline(&ds, &opts, oracle.as_ref())?;
    for w in &art.proportions.warnings {
        eprintln!("warning: {w}");
    }
    write(&args.out, &(art.to_json() + "\n"))?;
    let p = &art.proportions;
    eprintln!(
        "beta10={:.4} beta00={:.4} beta01={:.4} beta11={:.4}",
        p.beta10, p.beta00, p.beta01, p.beta11
    );
    Ok(())
}

fn predict(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let art = parse_fit_json(&read(model)?)?;
    let ds = read_csv(data, true)?;
    if ds.q() != art.nuisances.dim() {
        return Err(DataError::DimensionMismatch {
            row: 0,
            expected: art.nuisances.dim(),
            found: ds.q(),
        }
        .into());
    }
    let rows = score_targets(&art.predictor()?, &ds);
    write(out, &predictions_to_csv(&rows, art.threshold))?;
    eprintln!("scored {} target rows", rows.len());
    Ok(())
}

fn evaluate(predictions: &Path, truth: &Path, threshold: f64, out: Option<&Path>) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::Config("--threshold must lie in (0, 1)".into()).into());
    }
    let rows = parse_predictions_csv(&read(predictions)?)?;
    let truth = parse_truth_csv(&read(truth)?)?;
    let metrics = evaluate_tags(&rows, &truth, threshold)?;
    let text = serde_json::to_string_pretty(&metrics)? + "\n";
    match out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load_unchecked(p)?,
        None => ExperimentConfig::parse_unchecked("")?,
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(replications, seed, lambda, threshold, beta_method, beta01_method, anchor_quantile, output_dir);
    for (flag, slot) in [
        (args.user_beta10, &mut cfg.user_beta10),
        (args.user_beta00, &mut cfg.user_beta00),
        (args.user_beta01, &mut cfg.user_beta01),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    if args.n1.is_some() || args.n0.is_some() {
        let prev = cfg.synthetic.take();
        let n1 = args.n1.or(prev.as_ref().map(|s| s.n1));
        let n0 = args.n0.or(prev.as_ref().map(|s| s.n0));
        let (Some(n1), Some(n0)) = (n1, n0) else {
            return Err(CliError::Config("--n1 and --n0 go together".into()).into());
        };
        cfg.synthetic = Some(SyntheticSection {
            n1,
            n0,
            means: prev.and_then(|s| s.means),
        });
        cfg.pool = None;
    }
    if let Some(p) = &args.pool {
        cfg.pool = Some(PoolSection { path: p.clone() });
        cfg.synthetic = None;
    }
    if args.rate_a.is_some() || args.rate_b.is_some() || args.rate_c.is_some() {
        let prev = cfg.rates;
        let pick = |flag: Option<f64>, old: Option<f64>| {
            flag.or(old)
                .ok_or_else(|| CliError::Config("--rate-a, --rate-b and --rate-c go together".into()))
        };
        cfg.rates = Some(RatesSection {
            a: pick(args.rate_a, prev.map(|r| r.a))?,
            b: pick(args.rate_b, prev.map(|r| r.b))?,
            c: pick(args.rate_c, prev.map(|r| r.c))?,
        });
    }
    cfg.validate()?;

    let result = run_experiment(&cfg)?;
    write_outputs(&result, &cfg.output_dir)?;
    eprintln!(
        "{} replications ({} failed) -> {}",
        cfg.replications,
        result.failed(),
        cfg.output_dir.display()
    );
    for r in &result.replications {
        if let Err(e) = &r.outcome {
            eprintln!("  replication {} failed: {e}", r.rep);
        }
    }
    for tag in Tag::ALL {
        let acc = result.mean(tag, |m| m.accuracy).unwrap_or(f64::NAN);
        let f1 = result.mean(tag, |m| m.f1).unwrap_or(f64::NAN);
        eprintln!("  {:<5} accuracy {acc:.4}  f1 {f1:.4}", tag.name());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Simulate { n1, n0, seed, out } => simulate(n1, n0, seed, &out),
        Command::Split { pool, a, b, c, seed, out } => {
            split(&pool, [a, b, c], seed, &out).with_context(|| format!("splitting {}", pool.display()))
        }
        Command::Fit(args) => fit(&args).with_context(|| format!("fitting {}", args.data.display())),
        Command::Predict { model, data, out } => {
            predict(&model, &data, &out).with_context(|| format!("scoring {}", data.display()))
        }
        Command::Evaluate {
            predictions,
            truth,
            threshold,
            out,
        } => evaluate(&predictions, &truth, threshold, out.as_deref()),
        Command::Experiment(args) => experiment(&args),
    }
}

/// 1 usage, 2 data, 3 estimation.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.exit_code() as u8;
        }
        if cause.is::<DataError>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<EstimationError>() {
            return if matches!(e, EstimationError::Data(_)) { 2 } else { 3 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
