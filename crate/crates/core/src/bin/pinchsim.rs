use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pinchsim::harness::{run_experiment_logged, ExperimentPlan};
use pinchsim::{aggregate, validate, write_csv, PaSolver, ScenarioConfig, SchemeId, SweepAxis};

#[derive(Parser)]
#[command(name = "pinchsim", version, about = "Multi-waveguide pinching-antenna NOMA simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write one CSV row per trial and scheme.
    Run(RunArgs),
    /// Run the built-in oracle suites; exits nonzero on any failure.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PaArg {
    Mo,
    Sca,
    None,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON scenario file (field names as in ScenarioConfig).
    #[arg(long)]
    config: PathBuf,
    /// Swept parameter: pt, rmin, m or k.
    #[arg(long, value_parser = parse_axis)]
    sweep: Option<SweepAxis>,
    /// Sweep values, comma or space separated.
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Schemes to run (default: all).
    #[arg(long, num_args = 1.., value_delimiter = ',', value_parser = parse_scheme)]
    schemes: Vec<SchemeId>,
    /// Power allocation solver behind noma_cg_sca.
    #[arg(long, value_enum, default_value = "sca")]
    pa: PaArg,
    /// Coalition-game / power-allocation passes for noma_cg_sca.
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Master seed; defaults to the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write 0 in wall_ms so reruns produce identical files.
    #[arg(long)]
    no_timing: bool,
    /// Dump coalition-game moves as JSON lines on stderr.
    #[arg(short, long)]
    verbose: bool,
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

fn parse_scheme(s: &str) -> Result<SchemeId, String> {
    s.parse()
}

fn run(args: RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let base: ScenarioConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let mut plan = ExperimentPlan::new(base);
    if let Some(axis) = args.sweep {
        plan.axis = axis;
        plan.values = if args.values.is_empty() {
            anyhow::bail!("--sweep needs --values");
        } else {
            args.values.clone()
        };
    } else if !args.values.is_empty() {
        plan.values = args.values.clone();
    }
    plan.trials = args.trials;
    if !args.schemes.is_empty() {
        plan.schemes = args.schemes.clone();
    }
    plan.pa = match args.pa {
        PaArg::Mo => Some(PaSolver::Mo),
        PaArg::Sca => Some(PaSolver::Sca),
        PaArg::None => None,
    };
    plan.passes = args.passes;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    plan.record_wall_time = !args.no_timing;

    let (records, moves) = run_experiment_logged(&plan)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(BufWriter::new(file), &records)?;
        }
        None => write_csv(io::stdout().lock(), &records)?,
    }
    if args.verbose {
        let mut err = io::stderr().lock();
        for m in &moves {
            serde_json::to_writer(&mut err, m)?;
            err.write_all(b"\n")?;
        }
    }
    if args.out.is_some() {
        println!("{:<20} {:>10} {:>14} {:>10}", "scheme", plan.axis.name(), "mean_sum_rate", "outage");
        for row in aggregate(&records)? {
            println!(
                "{:<20} {:>10} {:>14.4} {:>10.4}",
                row.scheme.as_str(),
                row.sweep_value,
                row.mean_sum_rate,
                row.outage_probability
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Command::Validate { seed } => {
            let reports = validate::run_all(seed);
            let mut ok = true;
            for r in &reports {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!("{status} {} ({} cases)", r.name, r.cases);
                for f in r.failures.iter().take(10) {
                    println!("    {f}");
                }
                ok &= r.passed();
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
