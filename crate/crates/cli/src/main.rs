mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Unpaired image translation with uncertainty-aware cycle consistency.
#[derive(Debug, Parser)]
#[command(name = "ugac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train both generators and discriminators.
    Train(TrainArgs),
    /// Translate a directory of images with a trained generator.
    Translate(TranslateArgs),
    /// Corrupt a directory of images with one noise family and level.
    Perturb(PerturbArgs),
    /// Robustness curves (AMSE/ASSIM) of a trained generator.
    Evaluate(EvaluateArgs),
    /// Correlate per-image uncertainty with residuals on a paired set.
    UncertaintyCorr(CorrArgs),
    /// Write the synthetic shapes dataset to disk.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    A2b,
    B2a,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Raw,
    Png,
}

impl From<OutputFormat> for ugac::data::ImageFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Raw => ugac::data::ImageFormat::Raw,
            OutputFormat::Png => ugac::data::ImageFormat::Png,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory with domainA/ and domainB/.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    pub data: Option<PathBuf>,
    /// Train on N synthetic images per domain instead of --data.
    #[arg(long)]
    pub synth: Option<usize>,
    /// Side length of synthetic images.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Direction::A2b)]
    pub direction: Direction,
    /// Also write α, β and σ maps.
    #[arg(long)]
    pub uncertainty: bool,
    /// Add MC-dropout epistemic variance from this many passes to σ².
    #[arg(long, requires = "uncertainty")]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write 8-bit PNG previews next to the raw outputs.
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// gaussian, uniform or impulse.
    #[arg(long)]
    pub family: String,
    /// NL0..NL3.
    #[arg(long)]
    pub level: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory of clean inputs, or a dataset directory with domainA/ and domainB/.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "gaussian,uniform,impulse")]
    pub families: Vec<String>,
    #[arg(long, value_enum, default_value_t = Direction::A2b)]
    pub direction: Direction,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON path; a CSV twin and plots are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Paired set: domainA/ inputs and domainB/ targets with matching order.
    #[arg(long)]
    pub paired_eval: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Images per domain.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write scenes with their own edge maps instead of an unpaired set.
    #[arg(long)]
    pub paired: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Raw)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 1.
    Usage(String),
    Core(ugac::Error),
}

impl From<ugac::Error> for CliError {
    fn from(e: ugac::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ugac::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::Config(_) => 1,
                E::Dimension(_) | E::Data(_) | E::Format { .. } | E::Io { .. } | E::Image { .. } => 2,
                E::NonFinite(_) | E::Domain(_) | E::Graph(_) => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Translate(a) => commands::translate(a),
        Command::Perturb(a) => commands::perturb(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::UncertaintyCorr(a) => commands::uncertainty_corr(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `ugac help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
