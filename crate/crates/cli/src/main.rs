use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use synclb::coordination::RcFormula;
use synclb::domain::validate_scenario;
use synclb::metrics::{build_report, Format, MetricsReport};
use synclb::simkernel::{Scenario, Simulation};
use synclb::sweep::run_sweep_file;
use synclb::Error;

/// Simulate a cluster of cooperating, fault-tolerant load balancers.
#[derive(Debug, Parser)]
#[command(name = "synclb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its trace and report.
    Run {
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Report formats to write next to the trace.
        #[arg(long, value_enum, default_value_t = Formats::Csv)]
        format: Formats,
    },
    /// Run every point of a sweep file.
    Sweep {
        spec: PathBuf,
        /// Output directory; defaults to the sweep file's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated time limit in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum)]
    rc_formula: Option<RcArg>,
    /// Swap the increase and reduction branches of the capacity correction.
    #[arg(long)]
    corrected_semantics: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RcArg {
    Printed,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Formats {
    Csv,
    Json,
    Both,
}

impl Formats {
    fn list(self) -> &'static [Format] {
        match self {
            Formats::Csv => &[Format::Csv],
            Formats::Json => &[Format::Json],
            Formats::Both => &[Format::Csv, Format::Json],
        }
    }
}

/// A failed command: exit code plus diagnostic.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Invalid(_) | Error::UnknownField(_) => 2,
            _ => 3,
        };
        Failure(code, e.to_string())
    }
}

fn load(path: &Path, o: &Overrides) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    if let Some(h) = o.horizon {
        s.horizon = Some(h);
    }
    if let Some(f) = o.rc_formula {
        s.flags.rc_formula = match f {
            RcArg::Printed => RcFormula::Printed,
            RcArg::Normalized => RcFormula::Normalized,
        };
    }
    if o.corrected_semantics {
        s.flags.corrected_semantics = true;
    }
    if let Some(v) = validate_scenario(&s).into_iter().next() {
        return Err(Failure(
            2,
            format!("{}: invalid scenario: {v}", path.display()),
        ));
    }
    Ok(s)
}

fn summarize(report: &MetricsReport) {
    let s = &report.summary;
    println!(
        "tasks: {} arrived, {} admitted, {} completed, {} lost ({} duplicate, {} too cheap, {} too slow)",
        s.arrived, s.admitted, s.completed, s.lost, s.duplicates, s.rejected_cost, s.rejected_time
    );
    println!(
        "response: mean {:.3}s, median {:.3}s, p95 {:.3}s; {} deadline violations",
        s.mean_response, s.median_response, s.p95_response, s.violations
    );
    println!(
        "completion {}%, fault {}%, mean capacity deviation {}%",
        s.completion_percent, s.fault_percent, s.mean_cd_percent
    );
    println!(
        "revenue {:.2}, provider cost {:.2}, penalties {:.2}, net benefit {:.2}",
        s.revenue, s.provider_cost, s.penalty_cost, s.net_benefit
    );
    if s.truncated {
        println!(
            "warning: horizon reached at t = {} with work outstanding",
            s.end_time
        );
    }
}

fn run_cmd(path: &Path, out: &Path, o: &Overrides, formats: Formats) -> Result<(), Failure> {
    let scenario = load(path, o)?;
    let trace = Simulation::new(&scenario)?.finish();
    let report = build_report(&trace);
    fs::create_dir_all(out).map_err(Error::from)?;
    let trace_path = out.join("trace.jsonl");
    let file = fs::File::create(&trace_path).map_err(Error::from)?;
    trace.write_jsonl(std::io::BufWriter::new(file))?;
    println!("wrote {}", trace_path.display());
    for &f in formats.list() {
        let p = out.join(format!("report.{}", f.extension()));
        report.write(&p, f)?;
        println!("wrote {}", p.display());
    }
    summarize(&report);
    Ok(())
}

fn sweep_cmd(spec: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let outcome = run_sweep_file(spec, out).map_err(|e| match e {
        Error::UnknownField(f) if f == "output_dir" => Failure(
            1,
            format!(
                "{}: no output_dir in the sweep file; pass --out",
                spec.display()
            ),
        ),
        e => e.into(),
    })?;
    let total = outcome.results.len();
    let failed = outcome.failures();
    for r in outcome.results.iter() {
        if let Err(msg) = &r.outcome {
            eprintln!("point {:03}: {msg}", r.point.index);
        }
    }
    println!(
        "{} of {total} points succeeded; results in {}",
        total - failed,
        outcome.output_dir.display()
    );
    if failed > 0 {
        return Err(Failure(3, format!("{failed} grid points failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            overrides,
            format,
        } => run_cmd(scenario, out, overrides, *format),
        Command::Sweep { spec, out } => sweep_cmd(spec, out.as_deref()),
        Command::Validate {
            scenario,
            overrides,
        } => load(scenario, overrides).map(|s| {
            println!(
                "{}: ok ({} processors, {} schedulers)",
                scenario.display(),
                s.processors.len(),
                s.schedulers.len()
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
