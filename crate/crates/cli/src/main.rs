use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use noisy_threshold::harness::{
    emit_report, load_input_file, aggregate, run_trials, write_raw_log, Algorithm, ExperimentSpec,
    LabSettings, ReportFormat, WeightPolicy,
};
use noisy_threshold::lowerbound::Regime;
use noisy_threshold::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Zeros,
    ExactlyKMinus1,
    ExactlyK,
    RandomWeight,
    ExplicitFile,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    NoisyThreshold,
    NoisyThresholdFixed,
    MaxHeapThresholdOnly,
    CheckBitOnly,
    LowerBoundLab,
    LeCam,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    ThetaLogK,
    SmallLogDelta,
}

/// Monte Carlo experiments for threshold computation from noisy bit queries.
///
/// Grid axes take comma-separated lists; every combination becomes a cell.
#[derive(Debug, Parser)]
#[command(name = "noisy-threshold", version)]
struct Cli {
    /// Input lengths (defaults to the length of --input-file).
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    /// Thresholds.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<u64>,
    /// Crossover probabilities in (0, 1/2).
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    /// Error tolerances in (0, 1).
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to explicit-file with --input-file, random-weight otherwise.
    #[arg(long, value_enum)]
    weight_policy: Option<PolicyArg>,
    #[arg(long, value_enum, default_value = "noisy-threshold")]
    algorithm: AlgorithmArg,
    /// Bitstring of 0/1 characters, newline-terminated.
    #[arg(long)]
    input_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Report destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every trial as newline-delimited JSON.
    #[arg(long)]
    raw_log: Option<PathBuf>,
    /// Clopper-Pearson radius instead of the normal approximation.
    #[arg(long)]
    exact_ci: bool,
    /// Lower-bound lab: which converse regime.
    #[arg(long, value_enum, default_value = "theta-log-k")]
    regime: RegimeArg,
    /// Lower-bound lab: slack override.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Lower-bound lab: readings per bit (needs --epsilon).
    #[arg(long)]
    alpha_rep: Option<usize>,
}

fn build_spec(cli: &Cli) -> Result<ExperimentSpec, Error> {
    let explicit_input = cli.input_file.as_deref().map(load_input_file).transpose()?;
    let ns = match (&explicit_input, cli.n.is_empty()) {
        (_, false) => cli.n.clone(),
        (Some(bits), true) => vec![bits.len() as u64],
        (None, true) => return Err(Error::InvalidSpec("--n is required without --input-file".into())),
    };
    let weight_policy = match (cli.weight_policy, explicit_input.is_some()) {
        (Some(p), _) => match p {
            PolicyArg::Zeros => WeightPolicy::Zeros,
            PolicyArg::ExactlyKMinus1 => WeightPolicy::ExactlyKMinus1,
            PolicyArg::ExactlyK => WeightPolicy::ExactlyK,
            PolicyArg::RandomWeight => WeightPolicy::RandomWeight,
            PolicyArg::ExplicitFile => WeightPolicy::ExplicitFile,
        },
        (None, true) => WeightPolicy::ExplicitFile,
        (None, false) => WeightPolicy::RandomWeight,
    };
    let algorithm = match cli.algorithm {
        AlgorithmArg::NoisyThreshold => Algorithm::NoisyThreshold,
        AlgorithmArg::NoisyThresholdFixed => Algorithm::NoisyThresholdFixed,
        AlgorithmArg::MaxHeapThresholdOnly => Algorithm::MaxHeapThresholdOnly,
        AlgorithmArg::CheckBitOnly => Algorithm::CheckBitOnly,
        AlgorithmArg::LowerBoundLab => Algorithm::LowerBoundLab,
        AlgorithmArg::LeCam => Algorithm::LeCam,
    };
    let mut spec = ExperimentSpec::new(
        ExperimentSpec::grid(&ns, &cli.k, &cli.p, &cli.delta),
        cli.trials,
        algorithm,
        weight_policy,
    )
    .with_seed(cli.seed);
    spec.explicit_input = explicit_input;
    spec.exact_ci = cli.exact_ci;
    spec.lab = LabSettings {
        regime: match cli.regime {
            RegimeArg::ThetaLogK => Regime::ThetaLogK,
            RegimeArg::SmallLogDelta => Regime::SmallLogDelta,
        },
        epsilon: cli.epsilon,
        alpha_rep: cli.alpha_rep,
    };
    spec.validate()?;
    Ok(spec)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let spec = build_spec(cli)?;
    let records = run_trials(&spec)?;
    if let Some(path) = &cli.raw_log {
        write_raw_log(&records, BufWriter::new(File::create(path)?))?;
    }
    let format = match cli.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let bytes = emit_report(&aggregate(&spec, &records), format)?;
    match &cli.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
