//! Command-line front end: `run` executes a configured experiment, `tune`
//! sizes one to a word budget, `gen-synthetic` writes benchmark matrices.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zpca_bench::dataset::{format_for_extension, save_dataset, synthetic_low_rank};
use zpca_bench::experiment::{run_experiment, RealClock};
use zpca_bench::{tune, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "zpca-bench", version, about = "Experiment harness for the zpca protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config file describes and emit its CSV report
    /// (to the config's `out` path, stdout otherwise).
    Run {
        /// Flat key=value experiment description.
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the largest sample count whose collection traffic fits a word
    /// budget on the config's dataset.
    Tune {
        /// Budget as a multiple of the s·n·d words the servers store.
        #[arg(long)]
        budget_ratio: f64,
        /// Config naming the dataset and server count.
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic low-rank-plus-noise benchmark matrix.
    #[command(name = "gen-synthetic")]
    GenSynthetic {
        /// Rows.
        #[arg(long)]
        n: usize,
        /// Columns.
        #[arg(long)]
        d: usize,
        /// Rank of the planted signal.
        #[arg(long)]
        rank: usize,
        /// Scale of the entrywise Gaussian noise added to the signal.
        #[arg(long)]
        noise: f64,
        /// Generator seed.
        #[arg(long)]
        seed: u64,
        /// Destination; a `.bin` extension selects binary-f64, anything
        /// else csv-dense.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, &mut RealClock)?;
            let text = report.render();
            match &cfg.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Tune {
            budget_ratio,
            config,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", tune(&cfg, budget_ratio)?.render());
        }
        Command::GenSynthetic {
            n,
            d,
            rank,
            noise,
            seed,
            out,
        } => {
            let m = synthetic_low_rank(n, d, rank, noise, seed)?;
            save_dataset(&m, &out, format_for_extension(&out))?;
            eprintln!("wrote {n}×{d} rank-{rank} matrix to {}", out.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn gen_synthetic_output_feeds_run() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("synth.bin");
        let out = dir.path().join("report.csv");
        dispatch(Cli::parse_from([
            "zpca-bench",
            "gen-synthetic",
            "--n",
            "24",
            "--d",
            "6",
            "--rank",
            "2",
            "--noise",
            "0.1",
            "--seed",
            "9",
            "--out",
            data.to_str().unwrap(),
        ]))
        .unwrap();

        let config = dir.path().join("exp.conf");
        std::fs::write(
            &config,
            format!(
                "dataset={}\nformat=binary-f64\npartition=row-split\nservers=2\n\
                 function=identity\nk=2\nepsilon=0.25\ndelta=0.9\nbudget_ratio=10\n\
                 repetitions=1\nseed=1\nsamples=8\nout={}\n",
                data.display(),
                out.display()
            ),
        )
        .unwrap();
        dispatch(Cli::parse_from([
            "zpca-bench",
            "run",
            "--config",
            config.to_str().unwrap(),
        ]))
        .unwrap();
        let report = std::fs::read_to_string(&out).unwrap();
        assert!(report.contains(zpca_bench::REPORT_HEADER));

        dispatch(Cli::parse_from([
            "zpca-bench",
            "tune",
            "--budget-ratio",
            "2",
            "--config",
            config.to_str().unwrap(),
        ]))
        .unwrap();
    }
}
