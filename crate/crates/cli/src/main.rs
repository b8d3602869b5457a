use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gait_cli::artifacts::{to_json, write_file};
use gait_cli::nominal::cmd_nominal;
use gait_cli::simulate::cmd_simulate;
use gait_cli::verify::cmd_verify;
use gait_cli::{CliError, ConfigDocument, Result};

#[derive(Debug, Parser)]
#[command(name = "gait", version, about = "Centroidal walking and running gaits with step-timing adaptation")]
struct Cli {
    /// TOML configuration; the built-in run-to-walk scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Overrides the terrain and verification seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report the nominal gait, mode, Froude number and bound margins.
    Nominal,
    /// Run the scenario and write tick, step and summary artifacts.
    Simulate,
    /// Run the oracle suites and report measured residuals.
    Verify,
}

fn load(cli: &Cli) -> Result<ConfigDocument> {
    let doc = match &cli.config {
        Some(path) => ConfigDocument::load(path)?,
        None => ConfigDocument::default(),
    };
    Ok(doc.with_seed(cli.seed))
}

fn report(out_dir: &Path, name: &str, json: &str) -> Result<()> {
    print!("{json}");
    write_file(out_dir, name, json)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let doc = load(cli)?;
    match cli.command {
        Command::Nominal => {
            let r = cmd_nominal(&doc)?;
            for w in r.warnings() {
                eprintln!("warning: {w}");
            }
            report(&cli.out_dir, "nominal.json", &to_json(&r))
        }
        Command::Simulate => {
            let out = cmd_simulate(&doc, &cli.out_dir)?;
            let s = &out.summary;
            println!(
                "steps {} ticks {} relaxed {} succeeded {}",
                s.steps, s.ticks, s.relaxed_ticks, s.succeeded
            );
            if let Some(t) = out.solve_times {
                println!(
                    "qp solve time: median {:.1} us, p99 {:.1} us, max {:.1} us over {} ticks",
                    t.median * 1e6,
                    t.p99 * 1e6,
                    t.max * 1e6,
                    t.count
                );
            }
            if let Some(sw) = &out.sweep {
                match sw.onset {
                    Some(m) => println!("sweep: failure onset at {m}, monotone {}", sw.monotone),
                    None => println!("sweep: no failures"),
                }
            }
            println!("artifacts in {}", cli.out_dir.display());
            match &s.failure {
                Some(f) => Err(CliError::Run(format!("t = {}: {}", f.t, f.reason))),
                None => Ok(()),
            }
        }
        Command::Verify => {
            let r = cmd_verify(&doc);
            report(&cli.out_dir, "verify.json", &to_json(&r))?;
            if r.passed {
                Ok(())
            } else {
                let failed: Vec<&str> = r.suites.iter().filter(|s| !s.passed).map(|s| s.suite).collect();
                Err(CliError::Verify(failed.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
