use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use airfeed::params::derive_constants;
use airfeed::plan::{load_plan, run_plan, SUMMARY_TXT};
use airfeed::scenario::ReferenceSpec;
use airfeed::tune::{suggest, TuneOptions};
use airfeed::{config, Result};

#[derive(Parser)]
#[command(
    name = "airfeed",
    version,
    about = "Model-free excess-ratio control of a fuel-cell air feed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefMode {
    Constant,
    Polynomial,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every run of a plan and write traces and summaries.
    Run {
        #[arg(long)]
        plan: PathBuf,
        /// Concurrent runs; defaults to the available cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, env = "AIRFEED_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
    },
    /// Load and check a plan without running it.
    Validate {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Suggest alpha, kp and tau from open-loop probes of the plant.
    Tune {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum, default_value = "constant")]
        reference: RefMode,
        /// Constant reference value.
        #[arg(long, default_value_t = 2.2)]
        lambda: f64,
        /// Settling band, fraction of the reference.
        #[arg(long, default_value_t = 0.02)]
        band: f64,
        /// Wanted restoration time, s.
        #[arg(long, default_value_t = 2.0)]
        target: f64,
        #[arg(long, default_value_t = 0.01)]
        ts: f64,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            plan,
            jobs,
            out_dir,
        } => {
            let plan = load_plan(&plan)?;
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let report = run_plan(&plan, &out_dir, jobs)?;
            let summary = std::fs::read_to_string(out_dir.join(SUMMARY_TXT)).map_err(|e| {
                airfeed::Error::Io {
                    path: out_dir.join(SUMMARY_TXT),
                    source: e,
                }
            })?;
            print!("{summary}");
            if report.any_aborted() {
                eprintln!(
                    "some runs aborted; see {}",
                    out_dir.join(SUMMARY_TXT).display()
                );
                return Ok(ExitCode::from(1));
            }
        }
        Command::Validate { plan } => {
            let plan = load_plan(&plan)?;
            for r in &plan.runs {
                println!(
                    "{:<24} {:<14} {} {}",
                    r.name,
                    r.reference.label(),
                    r.profile_path.display(),
                    if r.is_nominal() {
                        "nominal"
                    } else {
                        "uncertain"
                    }
                );
            }
            println!("{}: {} runs, ok", plan.source.display(), plan.runs.len());
        }
        Command::Tune {
            params,
            profile,
            reference,
            lambda,
            band,
            target,
            ts,
        } => {
            let p = config::load_params(&params)?;
            let c = derive_constants(&p)?;
            let prof = config::load_profile(&profile)?;
            let opts = TuneOptions {
                reference: match reference {
                    RefMode::Constant => ReferenceSpec::Constant {
                        lambda_const: lambda,
                    },
                    RefMode::Polynomial => ReferenceSpec::Polynomial,
                },
                band,
                target_restoration: target,
                ts,
                ..TuneOptions::default()
            };
            let s = suggest(&c, &prof, &opts)?;
            println!(
                "{:>8} {:>10} {:>10} {:>14} {:>8}",
                "xi, A", "lambda*", "u_trim, A", "gain, 1/(s A)", "peak, s"
            );
            for pr in &s.probes {
                println!(
                    "{:>8} {:>10.4} {:>10.2} {:>14.4} {:>8.2}",
                    pr.xi, pr.lambda_ref, pr.u_trim, pr.input_gain, pr.peak_time
                );
            }
            println!();
            println!("alpha = {}", s.alpha);
            println!("kp = {}", s.kp);
            println!("tau = {}", s.tau);
            println!("ts = {}", s.ts);
            println!(
                "# largest trim current {:.1} A; keep u_max well above it",
                s.u_trim_max
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
