use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rational_adversary::scenario::{
    load_scenario, run, Command, Format, ScenarioError, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK,
};

/// Relative output paths taken from a scenario file resolve against this
/// directory when it is set.
const OUTPUT_DIR_ENV: &str = "RADV_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "radv", version, about = "Rational-adversary model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Band thresholds and existence test for the payoff matrix
    Band(Common),
    /// Equilibrium phase along a sweep of the recognition ratio
    PhaseSweep(Common),
    /// Strategic regime of the adversary over a parameter grid
    RegimeMap(Common),
    /// One sampled surplus path under the configured stopping rule
    Simulate(Common),
    /// Perturbed mass-response trajectory around a fixed point
    MassSim(Common),
    /// Reference-shift value gaps against the analytic bound
    RefShiftCheck(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON)
    #[arg(long)]
    scenario: PathBuf,
    /// Output file; defaults to the scenario's output path, then stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress diagnostics on stderr
    #[arg(long)]
    quiet: bool,
}

fn split(sub: Sub) -> (Command, Common) {
    match sub {
        Sub::Band(c) => (Command::Band, c),
        Sub::PhaseSweep(c) => (Command::PhaseSweep, c),
        Sub::RegimeMap(c) => (Command::RegimeMap, c),
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::MassSim(c) => (Command::MassSim, c),
        Sub::RefShiftCheck(c) => (Command::RefShiftCheck, c),
    }
}

fn resolve_default(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn execute(command: Command, args: &Common) -> Result<i32, ScenarioError> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let format = match args.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => scenario.output.format,
    };
    let out = run(command, &scenario)?;
    let bytes = out.table.to_bytes(format)?;
    let target = match (&args.out, &scenario.output.path) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(p)) => Some(resolve_default(p)),
        (None, None) => None,
    };
    match &target {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, &bytes)?;
        }
        None => io::stdout().lock().write_all(&bytes)?,
    }
    if !args.quiet {
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(path) = &target {
            eprintln!(
                "{}: wrote {} rows to {}",
                command.as_str(),
                out.table.rows.len(),
                path.display()
            );
        }
    }
    Ok(if out.failed_checks > 0 {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors as 2, which is reserved for numerical failures
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID as u8 } else { EXIT_OK as u8 });
        }
    };
    let (command, args) = split(cli.command);
    let code = match execute(command, &args) {
        Ok(code) => code,
        Err(e) => {
            if !args.quiet {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
