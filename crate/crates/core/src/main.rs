use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robust_effects::sim::{
    boxplot_export, load_records, mse_table, render_table, run_experiment, write_csv, SimulationConfig,
};
use robust_effects::{verify, Error};

#[derive(Parser)]
#[command(name = "robust-effects", version, about = "Standard and robustified Bayes estimates of parallel effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study and write one record per replication.
    Simulate {
        /// TOML configuration; defaults to the desk-scale study.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for records, manifests and timings.
        #[arg(long)]
        out: PathBuf,
        /// Full-scale study: p = 2000 with 100 replications.
        #[arg(long)]
        full: bool,
        /// Override the number of replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the number of parallel replications.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the MSE grid and write mse_table.csv next to the records.
    Table {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        i_max: usize,
    },
    /// Write boxplot.csv and boxplot_summary.csv next to the records.
    Boxplot {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the built-in oracle checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate { config, out, full, reps, workers } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    SimulationConfig::from_toml_str(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => SimulationConfig::default(),
            };
            if full {
                cfg = cfg.with_full_scale();
            }
            if let Some(n) = reps {
                cfg.n_reps = n;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            eprintln!(
                "p = {}, {} replications, priors [{}], {} methods",
                cfg.p,
                cfg.n_reps,
                cfg.true_priors.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "),
                cfg.methods.len()
            );
            let records = run_experiment(&cfg, &out, &|r| {
                let failed = r.methods.iter().filter(|m| m.reason.is_some()).count();
                eprintln!("{} rep {} done ({} failed)", r.prior.name(), r.rep, failed);
            })?;
            print_table(&records, cfg.i_max, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Table { input, i_max } => {
            let records = load_records(&input)?;
            print_table(&records, i_max, &input)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Boxplot { input } => {
            let records = load_records(&input)?;
            let (rows, summary) = boxplot_export(&records);
            write_csv(&rows, &input.join("boxplot.csv"))?;
            write_csv(&summary, &input.join("boxplot_summary.csv"))?;
            println!(
                "{:>7} {:>10} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8}",
                "prior", "method", "n", "min", "q1", "median", "q3", "max"
            );
            for s in summary {
                println!(
                    "{:>7} {:>10} {:>5} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                    s.prior, s.method, s.n, s.min, s.q1, s.median, s.q3, s.max
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed } => {
            let checks = verify::run_all(seed);
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn print_table(records: &[robust_effects::sim::ReplicationRecord], i_max: usize, dir: &Path) -> Result<(), Error> {
    let rows = mse_table(records, i_max);
    write_csv(&rows, &dir.join("mse_table.csv"))?;
    print!("{}", render_table(&rows));
    Ok(())
}
