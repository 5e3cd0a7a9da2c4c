mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, SizeInputs, SizeKind};
use error::CliError;

/// Environment variable that overrides the configured output directory.
const OUT_DIR_ENV: &str = "GPIODAC_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "gpiodac",
    version,
    about = "GPIO DAC simulation, sizing and HDL generation"
)]
struct Cli {
    /// Project file (TOML). Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set dac.vdd=3.0`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (beats GPIODAC_OUT_DIR and `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the random per-pin skew mode of `transient`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transfer curve and linearity report.
    Simulate {
        /// Also write a gnuplot script for the curve.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Size linearization resistors.
    Size {
        #[command(subcommand)]
        kind: SizeCommand,
    },
    /// Device parameters from a transfer curve CSV.
    Extract {
        #[arg(long)]
        curve: PathBuf,
        /// Supply voltage of the measured curve; the configured vdd by default.
        #[arg(long)]
        vdd: Option<f64>,
    },
    /// Sweep parallel (and optionally series) resistances.
    Sweep,
    /// Replay a code sequence with per-pin switching skew.
    Transient {
        /// Also write a ramp-rendered waveform at this time step (seconds).
        #[arg(long)]
        ramp_step: Option<f64>,
    },
    /// Verilog, PCF and manifest for the configured DAC.
    Hdl {
        /// Emit the staircase pattern generator as top level.
        #[arg(long)]
        staircase: bool,
    },
}

#[derive(Args)]
struct ParamSource {
    /// Threshold voltage, volts (with --ron).
    #[arg(long, requires = "ron")]
    vth: Option<f64>,
    /// Mid-range unit resistance, ohms (with --vth).
    #[arg(long, requires = "vth")]
    ron: Option<f64>,
    /// Extract parameters from this standalone transfer curve instead.
    #[arg(long, conflicts_with_all = ["vth", "ron"])]
    curve: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SizeCommand {
    TwoResistor(ParamSource),
    FourResistor {
        #[command(flatten)]
        source: ParamSource,
        /// Target supply current, amperes.
        #[arg(long)]
        it_target: Option<f64>,
        /// Share of series resistance on the supply side.
        #[arg(long)]
        split: Option<f64>,
        /// Fixed total series resistance, ohms.
        #[arg(long)]
        rs_total: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let mut project = commands::load_project(cli.config.as_deref(), &cli.set)?;
    if let Command::Size {
        kind:
            SizeCommand::FourResistor {
                it_target,
                split,
                rs_total,
                ..
            },
    } = &cli.command
    {
        if let Some(v) = it_target {
            project.sizing.it_target = *v;
        }
        if let Some(v) = split {
            project.sizing.split = *v;
        }
        if rs_total.is_some() {
            project.sizing.rs_total = *rs_total;
        }
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| project.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("gpiodac-out"));
    let ctx = Context {
        digest: project.digest(),
        project,
        out_dir,
    };
    let inputs = |s: &ParamSource| SizeInputs {
        vth: s.vth,
        ron: s.ron,
        curve: s.curve.clone(),
    };
    match &cli.command {
        Command::Simulate { gnuplot } => commands::simulate(&ctx, *gnuplot),
        Command::Size { kind } => match kind {
            SizeCommand::TwoResistor(s) => commands::size(&ctx, SizeKind::TwoResistor, &inputs(s)),
            SizeCommand::FourResistor { source, .. } => {
                commands::size(&ctx, SizeKind::FourResistor, &inputs(source))
            }
        },
        Command::Extract { curve, vdd } => commands::extract(&ctx, curve, *vdd),
        Command::Sweep => commands::sweep(&ctx),
        Command::Transient { ramp_step } => commands::transient(&ctx, cli.seed, *ramp_step),
        Command::Hdl { staircase } => commands::hdl(&ctx, *staircase),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let err = CliError::config(first.trim_start_matches("error: "));
            eprintln!("{err}");
            return ExitCode::from(err.category.exit_code());
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.category.exit_code())
        }
    }
}
