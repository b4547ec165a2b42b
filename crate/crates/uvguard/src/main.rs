use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use uvguard::commands::{self, GovernOptions, RunConfig, VerifyOptions};
use uvguard::config::RunFile;
use uvguard::csv_out::SCHEMA_HELP;
use uvguard::source::{ModelSource, VggWidth};
use uvguard::testset::TEST_SET_SIZE;
use uvguard_core::Scalar;

#[derive(Parser, Debug)]
#[command(
    name = "uvguard",
    version,
    about = "Checksum-guarded DNN inference on a simulated undervolted accelerator",
    after_help = SCHEMA_HELP,
    subcommand_required = false,
    arg_required_else_help = true
)]
struct Cli {
    /// Print the default calibration and governor settings as JSON and exit
    #[arg(long)]
    dump_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the checksum, linearity, conv and DMR property suites
    #[command(after_help = SCHEMA_HELP)]
    Verify {
        #[command(flatten)]
        common: Common,
        /// Relative tolerance for the soundness and linearity suites
        /// [default: 1e-10 at f64, 1e-4 at f32]
        #[arg(long)]
        tau: Option<f64>,
        /// Run the model suite with one forced bit flip per input
        #[arg(long)]
        force_faults: bool,
        /// Run a tenth of every suite
        #[arg(long)]
        quick: bool,
    },
    /// Step the voltage down from the start point until the simulator crashes;
    /// writes sweep.csv, sweep_breakdown.csv and power_curve.csv
    #[command(after_help = SCHEMA_HELP)]
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Test set size
        #[arg(long, default_value_t = TEST_SET_SIZE)]
        inputs: usize,
    },
    /// Run the closed-loop governor over a stream of inputs; writes
    /// governor_log.csv
    #[command(after_help = SCHEMA_HELP)]
    Govern {
        #[command(flatten)]
        common: Common,
        /// Number of inferences
        #[arg(long, default_value_t = 200)]
        inputs: usize,
        /// Start voltage in mV (default from the calibration file)
        #[arg(long)]
        start_mv: Option<u32>,
    },
    /// Wall-clock and analytic overhead of the checks; writes bench.csv
    #[command(after_help = SCHEMA_HELP)]
    Bench {
        #[command(flatten)]
        common: Common,
        /// Inputs timed per configuration
        #[arg(long, default_value_t = 20)]
        inputs: usize,
    },
    /// Print the default calibration and governor settings as JSON
    DumpDefaultConfig,
    /// Write the selected model as model.json plus SHVT weight files
    Export {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// lenet, vgg16, or a path to a model.json
    #[arg(long, default_value = "lenet")]
    model: ModelSource,
    /// Width of the built-in VGG-16
    #[arg(long, value_enum, default_value_t = VggWidth::Small)]
    vgg_width: VggWidth,
    /// Root seed for weights, inputs and faults
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Core frequency in MHz (default from the calibration file)
    #[arg(long)]
    freq: Option<u32>,
    /// JSON calibration file; see dump-default-config
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

impl Common {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            vgg_width: self.vgg_width,
            seed: self.seed,
            freq: self.freq,
            calib: self.calib.clone(),
            out: self.out.clone(),
        }
    }
}

fn run_typed<T: Scalar>(command: &Command, rc: &RunConfig) -> Result<ExitCode> {
    match command {
        Command::Verify {
            tau, force_faults, quick, ..
        } => {
            let mut opts = VerifyOptions {
                tau: tau.unwrap_or_else(VerifyOptions::default_tau::<T>),
                force_faults: *force_faults,
                ..VerifyOptions::default()
            };
            if *quick {
                opts = opts.quick();
            }
            let report = commands::verify::<T>(rc, &opts)?;
            println!("{report}");
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sweep { inputs, .. } => {
            let s = commands::sweep::<T>(rc, *inputs)?;
            println!("{s}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Govern { inputs, start_mv, .. } => {
            let opts = GovernOptions {
                inputs: *inputs,
                start_mv: *start_mv,
            };
            let s = commands::govern::<T>(rc, &opts)?;
            println!("{s}");
            if s.crashed {
                eprintln!("error: simulated crash; log kept in {}", s.log_csv.display());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { inputs, .. } => {
            println!("{}", commands::bench::<T>(rc, *inputs)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { .. } => {
            println!("{}", commands::export::<T>(rc)?.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpDefaultConfig => unreachable!("handled before dispatch"),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let command = match cli.command {
        None | Some(Command::DumpDefaultConfig) => {
            print!("{}", RunFile::default().to_json());
            return Ok(ExitCode::SUCCESS);
        }
        Some(c) => c,
    };
    if cli.dump_default_config {
        print!("{}", RunFile::default().to_json());
        return Ok(ExitCode::SUCCESS);
    }
    let common = match &command {
        Command::Verify { common, .. }
        | Command::Sweep { common, .. }
        | Command::Govern { common, .. }
        | Command::Bench { common, .. }
        | Command::Export { common } => common,
        Command::DumpDefaultConfig => unreachable!(),
    };
    let rc = common.run_config();
    match common.precision {
        Precision::F64 => run_typed::<f64>(&command, &rc),
        Precision::F32 => run_typed::<f32>(&command, &rc),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
