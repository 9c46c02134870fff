use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tfluct_cli::{run, Command, ExperimentConfig};

/// Limit formulas and Monte Carlo checks for fluctuations of random band
/// Toeplitz, Hankel, sparse and Wishart-type matrices.
///
/// Every key of the config file is also a flag; flags win. Outputs go to
/// `--output`, else $TFLUCT_OUT, else ./tfluct-out.
#[derive(Parser)]
#[command(name = "tfluct", version)]
struct Cli {
    /// Command to run (overrides `command` in the config file).
    command: Option<Command>,
    /// Flat TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ExperimentConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| {
        let mut config = match &cli.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.overlay(&cli.flags);
        if cli.command.is_some() {
            config.command = cli.command;
        }
        run(&config)
    })();
    match outcome {
        Ok(out) => {
            for r in &out.records {
                match (r.analytic_reference, r.z_score) {
                    (Some(a), Some(z)) => println!("{:<40} {:>14.6} ± {:<10.3e} ref {:>12.6}  z {:+.2}", r.quantity, r.value, r.std_error, a, z),
                    (Some(a), None) => println!("{:<40} {:>14.6} ± {:<10.3e} ref {:>12.6}", r.quantity, r.value, r.std_error, a),
                    _ => println!("{:<40} {:>14.6} ± {:.3e}", r.quantity, r.value, r.std_error),
                }
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("check failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
