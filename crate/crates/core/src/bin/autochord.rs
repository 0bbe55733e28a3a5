use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use autochord::matrix::{self, NormalizedRow, Report};
use autochord::{CellId, Error, MatrixConfig};

#[derive(Parser)]
#[command(name = "autochord", version, about = "Run and report autonomic Chord maintenance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment matrix.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run a single cell, written workload/churn/policy.
        #[arg(long)]
        only: Option<String>,
        /// Parallel workers.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print normalized tables for a finished matrix.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, only, jobs } => run(config, only, jobs),
        Command::Report { input, format } => report(input, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("autochord: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(config: PathBuf, only: Option<String>, jobs: usize) -> autochord::Result<()> {
    let cfg = MatrixConfig::load(&config)?;
    cfg.validate()?;
    let only: Option<CellId> = only.map(|s| s.parse()).transpose()?;
    let root = cfg.output_dir.clone().unwrap_or_else(matrix::default_output_dir);
    let started = std::time::Instant::now();
    let report = matrix::run_matrix(&cfg, only.as_ref(), jobs, &root)?;
    eprintln!(
        "{} cells, {} repeats each, written to {} in {:.1?}",
        report.summary.len(),
        cfg.repeats,
        root.display(),
        started.elapsed()
    );
    Ok(())
}

fn report(input: PathBuf, format: Format) -> autochord::Result<()> {
    let report = Report::load(&input)?;
    report.require_baselines()?;
    report.write(&input)?;
    let rows = report.normalized();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
        }
        Format::Table => print_table(&rows, &report),
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn print_table(rows: &[NormalizedRow], report: &Report) {
    println!(
        "{:<12} {:<9} {:<10} {:>10} {:>10} {:>10} {:>10}",
        "workload", "churn", "policy", "ELT win", "ELT single", "NU win", "NU single"
    );
    for r in rows {
        println!(
            "{:<12} {:<9} {:<10} {:>10} {:>10} {:>10} {:>10}",
            r.workload,
            r.churn,
            r.policy,
            cell(r.elt_window),
            cell(r.elt_single),
            cell(r.nu_window),
            cell(r.nu_single)
        );
    }
    println!();
    println!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "wins", "ELT", "NU", "both", "ELT*", "NU*", "both*");
    for w in &report.winners {
        println!(
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            w.policy, w.elt_window, w.nu_window, w.both_window, w.elt_single, w.nu_single, w.both_single
        );
    }
    println!("(* single-value metrics)");
    println!();
    match report.median_nsd() {
        Some(m) => println!("NSD: {} values, median {m:.3}", report.nsd.len()),
        None => println!("NSD: no values (fewer than two repeats?)"),
    }
}
