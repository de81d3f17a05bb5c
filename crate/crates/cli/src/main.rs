use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ciw_core::config::RunConfig;
use ciw_core::dump::decode;
use ciw_core::geometry::{DirectionSet, GeometrySummary};
use ciw_core::report::SCHEMA_VERSION;
use ciw_core::scenario::run;
use ciw_core::CiwError;
use clap::{Parser, Subcommand};

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "workbench_cli", about = "Convex-integration workbench", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run { config: PathBuf },
    /// Print the direction set of dimension `dim` as JSON.
    Geometry {
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Summarise a field dump, given by path or as `<dir>/dumps/<field-id>.ciwf`.
    Dump {
        field_id: String,
        #[arg(long, default_value = "out")]
        dir: PathBuf,
    },
    /// Print version information.
    Version,
}

fn exit_code(err: &CiwError) -> u8 {
    match err {
        CiwError::Config(_) | CiwError::Ledger(_) | CiwError::Unresolvable { .. } => EXIT_CONFIG,
        CiwError::Io(_) | CiwError::Serialize(_) => EXIT_IO,
        _ => EXIT_ASSERTION,
    }
}

fn configure_threads() -> Result<(), CiwError> {
    let Ok(value) = std::env::var("CIW_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CiwError::Config(format!("CIW_THREADS = `{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CiwError::Config(format!("cannot size the thread pool: {e}")))
}

fn run_config(path: &Path) -> Result<bool, CiwError> {
    let cfg = RunConfig::load(path).map_err(|e| match e {
        CiwError::Io(io) => CiwError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    let summary = run(&cfg)?;
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    let failures = summary.failures();
    for r in &failures {
        let tol = r.tolerance.map(|t| format!("{t:.3e}")).unwrap_or_else(|| "-".into());
        eprintln!("FAIL q={} {} = {:.6e} (tolerance {tol})", r.q, r.quantity, r.value);
    }
    println!("{}: {} records, {} failed", summary.scenario.name(), summary.records.len(), failures.len());
    Ok(summary.passed)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CiwError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn geometry(dim: usize) -> Result<(), CiwError> {
    let ds = DirectionSet::build(dim).map_err(|e| CiwError::Config(e.to_string()))?;
    print_json(&GeometrySummary::from(&ds))
}

fn dump(field_id: &str, dir: &Path) -> Result<(), CiwError> {
    let direct = PathBuf::from(field_id);
    let path = if direct.is_file() { direct } else { dir.join("dumps").join(format!("{field_id}.ciwf")) };
    let bytes = std::fs::read(&path)
        .map_err(|e| CiwError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let (header, coeffs) = decode(&bytes)?;
    let per_sample = coeffs.len() / header.n_t.max(1) as usize;
    let l2: Vec<f64> =
        coeffs.chunks(per_sample.max(1)).map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()).collect();
    print_json(&serde_json::json!({
        "path": path.display().to_string(),
        "version": header.version,
        "dim": header.dim,
        "n": header.n,
        "n_t": header.n_t,
        "components": header.ncomp,
        "coefficients": coeffs.len(),
        "coefficient_l2_per_sample": l2,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config } => run_config(&config),
        Command::Geometry { dim } => geometry(dim).map(|()| true),
        Command::Dump { field_id, dir } => dump(&field_id, &dir).map(|()| true),
        Command::Version => {
            println!("workbench_cli {} (report schema {SCHEMA_VERSION})", env!("CARGO_PKG_VERSION"));
            Ok(true)
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
