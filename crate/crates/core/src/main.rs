use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "globinv", version, about = "Global inversion of nonlinear maps by path lifting")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a JSON job file.
    Run {
        job: PathBuf,
        /// Output directory, overriding the job's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the registered maps.
    ListMaps,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { job, out } => {
            let code = globinv::cli::run_job_file(&job, out.as_deref());
            ExitCode::from(code as u8)
        }
        Cmd::ListMaps => {
            for name in globinv::map_model::list_maps() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}
