use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optomech::cli::{run, Command, Options};

#[derive(Parser)]
#[command(name = "optomech", version, about = "Multimode cavity optomechanics sweeps, fits and oracle checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Reflectance map over z and detuning.
    Spectrum(Common),
    /// Optical spring and damping versus detuning.
    Spring(Common),
    /// Brownian spectrum at the drive detuning.
    Psd(Common),
    /// Eigen-branches and quadratic coefficients at avoided crossings.
    Modes(Common),
    /// Parameter extraction from data files.
    Fit(Common),
    /// Time-domain ringdowns compared with the self-energy.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed, overrides the config value.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Write oracle trajectories as CSV.
    #[arg(long)]
    dump_trajectories: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Sub::Spectrum(c) => (Command::Spectrum, c),
        Sub::Spring(c) => (Command::Spring, c),
        Sub::Psd(c) => (Command::Psd, c),
        Sub::Modes(c) => (Command::Modes, c),
        Sub::Fit(c) => (Command::Fit, c),
        Sub::Oracle(c) => (Command::Oracle, c),
    };
    let opts = Options {
        config: c.config,
        out: c.out,
        seed: c.seed,
        dump_trajectories: c.dump_trajectories,
    };
    match run(cmd, &opts) {
        Ok(o) => {
            for line in &o.summary {
                eprintln!("{line}");
            }
            for f in &o.files {
                println!("{}", f.display());
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
