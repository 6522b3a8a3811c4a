use clap::{Parser, Subcommand};
use filtered_fock_core::runner::{ito_table_lines, run, RunOptions};
use filtered_fock_core::scenario::{compile, parse_scenario, Calculus, TaskDecl};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "filtered-fock",
    about = "Batch verification driver for filtered stochastic calculus scenarios",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// Scenario file.
    scenario: PathBuf,
    /// Report format.
    #[arg(long, default_value = "csv")]
    report: ReportFormat,
    /// Seed for the randomized suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Abort on the first failing task.
    #[arg(long)]
    strict: bool,
    /// Override the particle-number cutoff of the scenario grid.
    #[arg(long)]
    nmax: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a scenario.
    Run(CommonArgs),
    /// Run only the solve tasks of a scenario.
    Solve(CommonArgs),
    /// Run only the verify-ito tasks of a scenario.
    VerifyIto(CommonArgs),
    /// Run only the check-unitarity and mfree-unitarity tasks.
    CheckUnitarity(CommonArgs),
    /// Run only the sweep-m tasks.
    SweepM(CommonArgs),
    /// Print the boson and m-free Itô tables (m = 1..3).
    Tables,
    /// Print one Itô table.
    ItoTable {
        /// `boson` or `mfree:m`.
        #[arg(long)]
        calculus: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Tables => {
            for line in ito_table_lines(&Calculus::Boson) {
                println!("{line}");
            }
            for m in 1..=3 {
                println!();
                for line in ito_table_lines(&Calculus::MFree(m)) {
                    println!("{line}");
                }
            }
            ExitCode::SUCCESS
        }
        Command::ItoTable { calculus } => {
            let parsed = match calculus.as_str() {
                "boson" => Calculus::Boson,
                other => match other.strip_prefix("mfree:").and_then(|m| m.parse().ok()) {
                    Some(m) => Calculus::MFree(m),
                    None => {
                        eprintln!("unknown calculus `{other}` (use boson or mfree:m)");
                        return ExitCode::from(2);
                    }
                },
            };
            for line in ito_table_lines(&parsed) {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => execute(args, None),
        Command::Solve(args) => execute(args, Some(&|t| matches!(t, TaskDecl::Solve { .. }))),
        Command::VerifyIto(args) => {
            execute(args, Some(&|t| matches!(t, TaskDecl::VerifyIto { .. })))
        }
        Command::CheckUnitarity(args) => execute(
            args,
            Some(&|t| {
                matches!(t, TaskDecl::CheckUnitarity { .. } | TaskDecl::MFreeUnitarity { .. })
            }),
        ),
        Command::SweepM(args) => execute(args, Some(&|t| matches!(t, TaskDecl::SweepM { .. }))),
    }
}

fn execute(args: CommonArgs, task_filter: Option<&dyn Fn(&TaskDecl) -> bool>) -> ExitCode {
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    let mut ast = match parse_scenario(&text) {
        Ok(a) => a,
        Err(d) => {
            eprintln!("{}: {d}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    if let Some(nmax) = args.nmax {
        ast.grid.nmax = nmax;
    }
    if let Some(filter) = task_filter {
        ast.tasks.retain(|t| filter(t));
    }
    let compiled = match compile(&ast) {
        Ok(c) => c,
        Err(d) => {
            eprintln!("{}: {d}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { seed: args.seed, strict: args.strict, threads: 1 };
    let report = match run(&compiled, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(2);
        }
    };
    let body = match args.report {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    if let Some(path) = args.out {
        if let Err(e) = std::fs::write(&path, body) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    } else {
        print!("{body}");
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        for row in report.rows.iter().filter(|r| !r.pass) {
            eprintln!("FAIL {} {} value={} bound={}", row.task, row.id, row.value, row.bound);
        }
        ExitCode::from(1)
    }
}
