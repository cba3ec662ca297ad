//! `mogdp`: group-level privacy accounting for DP-SGD from the command line.

use clap::{Args, Parser, Subcommand, ValueEnum};
use mogdp::{
    group_delta, run_validation, sweep, vadhan_group_epsilon_from, AccountantConfig, ComposedPlds,
    SamplingScheme, SweepRow, ValidationOptions,
};
use serde_json::{json, Map, Value};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mogdp",
    version,
    about = "Group-level (epsilon, delta) accounting for DP-SGD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group-level epsilon at a target delta.
    Epsilon(EpsilonArgs),
    /// Group-level delta at a target epsilon.
    Delta(DeltaArgs),
    /// Epsilon for k = 1..=k-max under all three methods.
    Sweep(SweepArgs),
    /// Check the accountant against the independent oracles.
    Validate(ValidateArgs),
}

#[derive(Args)]
#[group(id = "scheme", required = true, multiple = false)]
struct SchemeArgs {
    /// Poisson sampling rate.
    #[arg(long, group = "scheme")]
    poisson_q: Option<f64>,
    /// Fixed batch size; requires --dataset-size.
    #[arg(long, group = "scheme", requires = "dataset_size")]
    batch_size: Option<u64>,
}

#[derive(Args)]
struct AccountingArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Dataset size for fixed-size batches.
    #[arg(long, requires = "batch_size")]
    dataset_size: Option<u64>,
    /// Noise multiplier.
    #[arg(long)]
    sigma: f64,
    /// Number of training rounds.
    #[arg(long)]
    rounds: u64,
    #[arg(long, default_value_t = 1e-4)]
    grid_spacing: f64,
    #[arg(long, default_value_t = 1e-12)]
    tail_mass: f64,
}

impl AccountingArgs {
    fn scheme(&self) -> SamplingScheme {
        match (
            self.scheme.poisson_q,
            self.scheme.batch_size,
            self.dataset_size,
        ) {
            (Some(q), _, _) => SamplingScheme::Poisson { q },
            (None, Some(batch_size), Some(dataset_size)) => SamplingScheme::FixedBatch {
                batch_size,
                dataset_size,
            },
            _ => unreachable!("clap enforces exactly one scheme"),
        }
    }

    fn config(&self, k: u32) -> mogdp::Result<AccountantConfig> {
        let mut config = AccountantConfig::new(self.sigma, self.rounds, k, self.scheme())?;
        config.grid_spacing = self.grid_spacing;
        config.tail_mass = self.tail_mass;
        config.validate()?;
        Ok(config)
    }

    fn params(&self) -> Map<String, Value> {
        let mut params = Map::new();
        match self.scheme() {
            SamplingScheme::Poisson { q } => {
                params.insert("scheme".into(), json!("poisson"));
                params.insert("poisson_q".into(), json!(q));
            }
            SamplingScheme::FixedBatch {
                batch_size,
                dataset_size,
            } => {
                params.insert("scheme".into(), json!("fixed_batch"));
                params.insert("batch_size".into(), json!(batch_size));
                params.insert("dataset_size".into(), json!(dataset_size));
            }
        }
        params.insert("sigma".into(), json!(self.sigma));
        params.insert("rounds".into(), json!(self.rounds));
        params.insert("grid_spacing".into(), json!(self.grid_spacing));
        params.insert("tail_mass".into(), json!(self.tail_mass));
        params
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Mixture-of-Gaussians group accountant.
    Mog,
    /// Group privacy applied to the single-example guarantee.
    Vadhan,
    /// k times the single-example epsilon; a heuristic, not a certified bound.
    Lower,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Mog => "mog",
            Method::Vadhan => "vadhan",
            Method::Lower => "lower_bound (heuristic)",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Csv,
    Json,
}

#[derive(Args)]
struct EpsilonArgs {
    #[command(flatten)]
    accounting: AccountingArgs,
    /// Group size.
    #[arg(long)]
    k: u32,
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = Method::Mog)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Output::Json)]
    output: Output,
}

#[derive(Args)]
struct DeltaArgs {
    #[command(flatten)]
    accounting: AccountingArgs,
    #[arg(long)]
    k: u32,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = Output::Json)]
    output: Output,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    accounting: AccountingArgs,
    #[arg(long, default_value_t = 16)]
    k_max: u32,
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = Output::Csv)]
    output: Output,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    grid_spacing: f64,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
}

/// Shortest round-trip decimal, or `inf` for non-finite values.
fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        "inf".into()
    }
}

fn real_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn epsilon(args: &EpsilonArgs) -> mogdp::Result<String> {
    let acc = &args.accounting;
    let (value, dominant) = match args.method {
        Method::Mog => {
            let report =
                ComposedPlds::build(&acc.config(args.k)?)?.epsilon_for_delta(args.delta)?;
            (report.epsilon, report.dominant)
        }
        Method::Vadhan | Method::Lower => {
            let single = ComposedPlds::build(&acc.config(1)?)?;
            let report = single.epsilon_for_delta(args.delta)?;
            let value = if args.method == Method::Vadhan {
                vadhan_group_epsilon_from(&single, args.k, args.delta)?
            } else {
                f64::from(args.k) * report.epsilon
            };
            (value, report.dominant)
        }
    };
    Ok(match args.output {
        Output::Json => {
            let mut params = acc.params();
            params.insert("method".into(), json!(args.method.label()));
            json!({
                "epsilon": real_json(value),
                "delta": args.delta,
                "k": args.k,
                "direction_dominant": dominant.as_str(),
                "params": params,
            })
            .to_string()
        }
        Output::Csv => format!(
            "epsilon,delta,k,direction_dominant,method\n{},{},{},{},{}",
            real(value),
            real(args.delta),
            args.k,
            dominant.as_str(),
            args.method.label()
        ),
    })
}

fn delta(args: &DeltaArgs) -> mogdp::Result<String> {
    let value = group_delta(&args.accounting.config(args.k)?, args.epsilon)?;
    Ok(match args.output {
        Output::Json => json!({
            "delta": value,
            "epsilon": real_json(args.epsilon),
            "k": args.k,
            "params": args.accounting.params(),
        })
        .to_string(),
        Output::Csv => format!(
            "delta,epsilon,k\n{},{},{}",
            real(value),
            real(args.epsilon),
            args.k
        ),
    })
}

fn sweep_output(args: &SweepArgs) -> mogdp::Result<String> {
    let rows = sweep(&args.accounting.config(1)?, args.delta, args.k_max)?;
    Ok(match args.output {
        Output::Csv => {
            let mut out = String::from("k,epsilon_mog,epsilon_vadhan,epsilon_lower_lb");
            for row in &rows {
                out.push_str(&format!(
                    "\n{},{},{},{}",
                    row.k,
                    real(row.epsilon_mog),
                    real(row.epsilon_vadhan),
                    real(row.epsilon_lower_lb)
                ));
            }
            out
        }
        Output::Json => {
            let rows: Vec<Value> = rows.iter().map(row_json).collect();
            json!({
                "delta": args.delta,
                "params": args.accounting.params(),
                "rows": rows,
            })
            .to_string()
        }
    })
}

fn row_json(row: &SweepRow) -> Value {
    json!({
        "k": row.k,
        "epsilon_mog": real_json(row.epsilon_mog),
        "epsilon_vadhan": real_json(row.epsilon_vadhan),
        "epsilon_lower_lb": real_json(row.epsilon_lower_lb),
        "direction_dominant": row.mog.dominant.as_str(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Epsilon(args) => epsilon(args),
        Command::Delta(args) => delta(args),
        Command::Sweep(args) => sweep_output(args),
        Command::Validate(args) => {
            let options = ValidationOptions {
                grid_spacing: args.grid_spacing,
                seed: args.seed,
                samples: args.samples,
            };
            match run_validation(&options) {
                Ok(report) => {
                    println!("{report}");
                    return if report.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    };
                }
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mogdp: {e}");
            ExitCode::FAILURE
        }
    }
}
