use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manifold_maps::scenario::{self, RunOptions, Scenario, ScenarioError, DEMO_NAMES};

/// Run scenario files for transformation maps, Cartan forms and Kaehler checks.
///
/// Exit codes: 0 success, 1 parse or validation error, 2 numerical
/// divergence, 3 internal error.
#[derive(Parser)]
#[command(name = "manifold-maps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.txt and trajectory.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the grid step count.
        #[arg(long)]
        steps: Option<usize>,
        /// Estimate the convergence order of the target-equation residual.
        #[arg(long)]
        order_check: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a bundled scenario and print its report.
    Demo {
        #[arg(value_parser = DEMO_NAMES)]
        name: String,
        /// Also write the report and trajectory here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(
    scenario: &Scenario,
    options: RunOptions,
    out: Option<&PathBuf>,
) -> Result<i32, ScenarioError> {
    let report = scenario::run_scenario(scenario, options)?;
    print!("{}", report.to_text()?);
    if let Some(dir) = out {
        for path in report.write_to(dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    eprintln!("elapsed {:.3} s", report.duration.as_secs_f64());
    if let Some(f) = &report.failure {
        eprintln!("error: {}", f.message);
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            steps,
            order_check,
        } => scenario::parse_scenario(&scenario)
            .and_then(|s| run(&s, RunOptions { steps, order_check }, Some(&out))),
        Command::Validate { scenario } => scenario::parse_scenario(&scenario).map(|s| {
            println!("ok: {} scenario {}", s.kind, scenario.display());
            0
        }),
        Command::Demo { name, out } => scenario::demo_scenario(&name)
            .and_then(|s| run(&s, RunOptions::default(), out.as_ref())),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
