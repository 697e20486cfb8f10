use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fpspeed::error::exit;
use fpspeed::report::{render_table, summarize};
use fpspeed::{run_scenario, CliError, Mode, RunOptions, RunReport, Scenario};
use rayon::prelude::*;

/// Finite propagation speed checks for first-order systems and wave equations
/// on discrete metric measure spaces.
#[derive(Parser)]
#[command(name = "fpspeed", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every check of each scenario.
    Verify(RunArgs),
    /// Run the first-order checks only.
    Propagate(RunArgs),
    /// Run the space, operator and second-order checks.
    Huygens(RunArgs),
    /// Summarise run directories; exits 1 if any run failed or is unreadable.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON files.
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Output root; each scenario writes to OUT/<name>.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the eps ladder by a single value.
    #[arg(long)]
    eps: Option<f64>,
    /// Run scenarios in parallel.
    #[arg(long)]
    parallel: bool,
}

fn print_run(r: &RunReport, secs: f64) {
    for c in &r.checks {
        println!("{} {}/{}: {}", if c.pass { "PASS" } else { "FAIL" }, r.scenario, c.name, c.detail);
    }
    println!("{} {} ({secs:.1}s)", if r.pass { "PASS" } else { "FAIL" }, r.scenario);
}

fn run(args: RunArgs, mode: Mode) -> Result<bool, CliError> {
    if let Some(e) = args.eps {
        if !(e > 0.0 && e < 1.0) {
            return Err(CliError::config(format!("--eps must lie in (0, 1), got {e}")));
        }
    }
    let scenarios = args.configs.iter().map(|p| Scenario::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::config(format!("two scenarios are named {}", w[0])));
    }
    let opts = RunOptions { out: args.out, seed: args.seed, eps: args.eps, mode };
    let one = |s: &Scenario| {
        let start = Instant::now();
        run_scenario(s, &opts).map(|r| (r, start.elapsed().as_secs_f64()))
    };
    let results: Vec<_> = if args.parallel { scenarios.par_iter().map(one).collect() } else { scenarios.iter().map(one).collect() };
    let mut all = true;
    for r in results {
        let (r, secs) = r?;
        print_run(&r, secs);
        all &= r.pass;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Verify(a) => run(a, Mode::Verify),
        Cmd::Propagate(a) => run(a, Mode::Propagate),
        Cmd::Huygens(a) => run(a, Mode::Huygens),
        Cmd::Report { dirs, json } => {
            let s = summarize(&dirs);
            if json {
                println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
            } else {
                print!("{}", render_table(&s));
            }
            Ok(s.pass)
        }
    };
    let code = match outcome {
        Ok(true) => exit::PASS,
        Ok(false) => exit::CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit::USAGE
        }
    };
    ExitCode::from(code as u8)
}
