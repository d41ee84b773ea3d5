use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use critset::experiments::{core_error, score_row, SCORE_COLUMNS};
use critset::{load_scenario, resolve_threads, run_scenario, thread_pool, CliError};
use critset_core::criticality::{criticality_score, SearchOptions};
use critset_core::dynamics::MapDef;
use critset_core::geometry::{Mat2, Vec2};

#[derive(Parser)]
#[command(name = "critset", version, about = "Critical points of the projective derivative cocycle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapName {
    Henon,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its outputs.
    Run { scenario: PathBuf },
    /// Parse and validate a scenario file without computing anything.
    Validate { scenario: PathBuf },
    /// Criticality score of a single point, printed as one CSV row.
    Score {
        #[arg(long, value_enum)]
        map: MapName,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        b: Option<f64>,
        /// Row-major entries `m11,m12,m21,m22` of a linear map.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        matrix: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long)]
        window: usize,
    },
}

fn score(map: MapName, a: Option<f64>, b: Option<f64>, matrix: Option<Vec<f64>>, p: Vec2, window: usize) -> Result<(), CliError> {
    let invalid = |m: &str| CliError::Validation(m.to_string());
    let map = match map {
        MapName::Henon => {
            let (Some(a), Some(b)) = (a, b) else {
                return Err(invalid("--map henon needs --a and --b"));
            };
            MapDef::henon(a, b)
        }
        MapName::Linear => match matrix.as_deref() {
            Some(&[m11, m12, m21, m22]) => MapDef::linear(Mat2::new(m11, m12, m21, m22)),
            _ => return Err(invalid("--map linear needs --matrix m11,m12,m21,m22")),
        },
    }
    .map_err(|e| CliError::Validation(format!("map: {e}")))?;
    if window == 0 {
        return Err(invalid("window must be positive"));
    }
    let pool = thread_pool(resolve_threads(Default::default())?)?;
    let report = pool
        .install(|| criticality_score(&map, p, window, &SearchOptions::default()))
        .map_err(core_error)?;
    println!("{}", SCORE_COLUMNS.join(","));
    println!("{}", score_row(&report).join(","));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario } => run_scenario(&scenario).map(|s| {
            for w in &s.manifest.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {} files to {}", s.manifest.outputs.len() + 1, s.dir.display());
        }),
        Command::Validate { scenario } => load_scenario(&scenario).map(|s| {
            eprintln!("ok: {} scenario", s.experiment.name());
        }),
        Command::Score {
            map,
            a,
            b,
            matrix,
            x,
            y,
            window,
        } => score(map, a, b, matrix, Vec2::new(x, y), window),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
