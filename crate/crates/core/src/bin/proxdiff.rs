use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proxdiff::check::check_prox;
use proxdiff::experiment::{run_experiment, summary, write_outputs};
use proxdiff::scenario::{preset, preset_names, Scenario};

#[derive(Parser)]
#[command(
    version,
    about = "Multitask diffusion LMS with proximal coregularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, manifest or preset name.
    Run {
        scenario: String,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `<PROXDIFF_OUT>/<scenario name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, env = "PROXDIFF_OUT", default_value = "proxdiff-out")]
        out_root: PathBuf,
    },
    /// Compare the closed-form prox with the brute-force oracle.
    CheckProx {
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        cases: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    ListPresets,
    /// Print step-size bounds, ‖𝓑‖ and bias bounds per variant.
    Stability {
        scenario: String,
    },
}

fn run(cli: Cli) -> proxdiff::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            runs,
            seed,
            out,
            jobs,
            out_root,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(r) = runs {
                s.runs = r;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let dir = out
                .or_else(|| s.output.clone().map(PathBuf::from))
                .unwrap_or_else(|| out_root.join(&s.name));
            let result = run_experiment(&s, jobs)?;
            for p in write_outputs(&result, &dir)? {
                println!("wrote {}", p.display());
            }
            let sum = summary(&result);
            println!(
                "{:<24} {:>6} {:>9}  stage network MSD (dB)",
                "variant", "runs", "diverged"
            );
            for v in &sum.variants {
                let stages: Vec<String> = v
                    .stages
                    .iter()
                    .map(|s| format!("{:8.2}", s.network_db))
                    .collect();
                println!(
                    "{:<24} {:>6} {:>9}  {}",
                    v.name,
                    v.n_runs_effective,
                    v.diverged_runs,
                    stages.join(" ")
                );
            }
            if result.any_fully_diverged() {
                eprintln!("error: at least one variant diverged in every run");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckProx { cases, seed } => {
            let r = check_prox(cases as usize, seed)?;
            println!("cases                 {}", r.cases);
            println!("max |prox - oracle|   {:e}", r.max_deviation);
            println!("max objective excess  {:e}", r.max_objective_excess);
            println!(
                "soft threshold        {} cases, max rel. error {:e}",
                r.soft_threshold_cases, r.max_soft_threshold_error
            );
            println!("{}", if r.passed() { "PASS" } else { "FAIL" });
            Ok(if r.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::ListPresets => {
            for name in preset_names() {
                let s = preset(name)?;
                println!("{name:<10} {}", s.description.unwrap_or_default());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { scenario } => {
            let s = Scenario::load(&scenario)?;
            let resolved = s.resolve()?;
            let result = proxdiff::experiment::stability_reports(&resolved)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            let pass = result.iter().all(|(_, r)| r.all_pass());
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
