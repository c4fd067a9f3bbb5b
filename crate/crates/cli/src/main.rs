use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracmetrics::commands::{self, Failure, ParamFlags};
use fracmetrics::load_case;
use fracmetrics_core::chamfer::Sampling;
use fracmetrics_core::metrics::StepOffMode;

#[derive(Parser)]
#[command(name = "fracmetrics", version, about = "Fracture reduction metrics on a fitted articular sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chamfer distance between two meshes (sum of both directed mean nearest-neighbor distances)
    Chamfer {
        a: PathBuf,
        b: PathBuf,
        /// `vertices` or `area:COUNT[:SEED]`
        #[arg(long, default_value = "vertices", value_parser = commands::parse_sampling)]
        sampling: Sampling,
    },
    /// Fit the articular sphere to a case's landmarks
    FitSphere { case: PathBuf },
    /// Gap, step-off and gap area for every fracture-line pair
    Metrics {
        case: PathBuf,
        #[arg(long)]
        arc_step: Option<f64>,
        #[arg(long)]
        target_edge: Option<f64>,
        /// `absolute` or `differential`
        #[arg(long, value_parser = parse_mode)]
        step_off_mode: Option<StepOffMode>,
    },
    /// Recover per-fragment transforms from a case to its reduced counterpart
    Register { case: PathBuf, reduced_case: PathBuf },
    /// Write a synthetic case with analytic ground truth
    Synth {
        preset: String,
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run metrics on every case in a list
    Batch {
        case_list: PathBuf,
        outdir: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
}

fn parse_mode(s: &str) -> Result<StepOffMode, String> {
    s.parse()
}

fn diagnostic(level: &str, message: &str) {
    let color = std::io::stderr().is_terminal() && std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty());
    if color {
        let code = if level == "error" { "31" } else { "33" };
        eprintln!("\x1b[1;{code}m{level}:\x1b[0m {message}");
    } else {
        eprintln!("{level}: {message}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Chamfer { a, b, sampling } => {
            println!("{:?}", commands::chamfer(&a, &b, sampling)?);
        }
        Command::FitSphere { case } => {
            let case = load_case(&case)?;
            let fit = commands::fit_sphere_report(&case)?;
            println!("{}", serde_json::to_string_pretty(&fit).expect("fit serializes"));
        }
        Command::Metrics { case, arc_step, target_edge, step_off_mode } => {
            let case = load_case(&case)?;
            let report = commands::metrics_report(&case, &ParamFlags { arc_step, target_edge, step_off_mode })?;
            for w in &report.warnings {
                diagnostic("warning", w);
            }
            print!("{}", report.to_json());
        }
        Command::Register { case, reduced_case } => {
            let (original, reduced) = (load_case(&case)?, load_case(&reduced_case)?);
            let (report, ok) = commands::register_report(&original, &reduced)?;
            print!("{}", report.to_json());
            if !ok {
                return Err(Failure::Computation("one or more fragments failed to register".into()));
            }
        }
        Command::Synth { preset, outdir, seed } => {
            let path = commands::synth(&preset, &outdir, seed)?;
            println!("{}", path.display());
        }
        Command::Batch { case_list, outdir, jobs } => {
            let entries = commands::batch(&case_list, &outdir, jobs as usize)?;
            print!("{}", commands::batch_summary(&entries));
            let failed: Vec<_> = entries.iter().filter_map(|e| e.outcome.as_ref().err().map(|f| (e, f))).collect();
            for (e, f) in &failed {
                diagnostic("error", &format!("case {} ({}): {f}", e.index + 1, e.case));
            }
            if !failed.is_empty() {
                return Err(Failure::Validation(format!("{} of {} cases failed", failed.len(), entries.len())));
            }
        }
    }
    Ok(())
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            diagnostic("error", &f.to_string());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
