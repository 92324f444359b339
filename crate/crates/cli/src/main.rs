use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonlocal_lab::{load_config, resolve, run_config, Exit};

#[derive(Parser)]
#[command(name = "nonlocal-lab", version, about = "Experiments with nonlocal layer equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and resolve a configuration without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, threads } => load_config(config).and_then(|cfg| run_config(&cfg, out.as_deref(), *threads)).map(|o| {
            println!("{} -> {}", o.out_dir.display(), if o.exit == Exit::Success { "ok" } else { "divergence" });
            for (k, v) in &o.report.results {
                println!("  {k} = {v}");
            }
            o.exit
        }),
        Command::Validate { config } => load_config(config).and_then(|cfg| {
            let (setup, resolver) = resolve(&cfg)?;
            println!("# valid configuration for experiment {}", setup.experiment.name());
            print!("{}", resolver.resolved_text());
            Ok(Exit::Success)
        }),
    };
    match result {
        Ok(exit) => ExitCode::from(exit.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit().code() as u8)
        }
    }
}
