//! Scenario-driven front end for `critset-core`: one JSON scenario in, CSV
//! tables, a JSON report and a run manifest out.

pub mod experiments;
pub mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::experiments::{Outcome, Stage, Table};
use crate::scenario::{parse_scenario, Scenario, Threads};

pub use scenario::ExperimentKind;

pub const THREADS_ENV: &str = "CRITSET_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub scenario_sha256: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub wall_time_s: f64,
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputHash>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    parse_scenario(&read(path)?)
}

/// Thread count: `CRITSET_THREADS` when set, otherwise the scenario's.
pub fn resolve_threads(scenario: Threads) -> Result<Threads, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => Threads::parse(&v).map_err(|e| CliError::Validation(format!("{THREADS_ENV}: {e}"))),
        Err(_) => Ok(scenario),
    }
}

pub fn thread_pool(threads: Threads) -> Result<rayon::ThreadPool, CliError> {
    let n = match threads {
        Threads::Auto => 0,
        Threads::Count(n) => n,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))
}

pub fn csv_bytes(table: &Table) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes every file or none: files written before a failure are removed.
fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(CliError::Io(format!("{}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(())
}

fn output_dir(scenario_path: &Path, dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        dir.to_path_buf()
    } else {
        scenario_path.parent().unwrap_or(Path::new(".")).join(dir)
    }
}

/// Parses, validates and runs a scenario file, then writes its outputs.
pub fn run_scenario(path: &Path) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let text = read(path)?;
    let scenario = parse_scenario(&text)?;
    let threads = resolve_threads(scenario.threads)?;
    let pool = thread_pool(threads)?;
    let Outcome {
        tables,
        report,
        warnings,
        stages,
    } = pool.install(|| experiments::run(&scenario))?;

    let mut files = Vec::new();
    if scenario.output.csv {
        for t in &tables {
            files.push((t.file.to_string(), csv_bytes(t)?));
        }
    }
    if scenario.output.json {
        files.push((REPORT_FILE.to_string(), json_bytes(&report)?));
    }
    let outputs = files
        .iter()
        .map(|(file, bytes)| OutputHash {
            file: file.clone(),
            sha256: sha256_hex(bytes),
        })
        .collect();
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario_sha256: sha256_hex(text.as_bytes()),
        experiment: scenario.experiment,
        seed: scenario.seed,
        threads: pool.current_num_threads(),
        started_unix_ms,
        wall_time_s: start.elapsed().as_secs_f64(),
        stages,
        warnings,
        outputs,
    };
    files.push((MANIFEST_FILE.to_string(), json_bytes(&manifest)?));
    let dir = output_dir(path, &scenario.output.dir);
    write_all(&dir, &files)?;
    Ok(RunSummary { dir, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::Io(String::new()).exit_code(), 1);
        assert_eq!(CliError::Validation(String::new()).exit_code(), 2);
        assert_eq!(CliError::Numerical(String::new()).exit_code(), 3);
    }

    #[test]
    fn csv_has_header_and_rows_only() {
        let t = Table {
            file: "t.csv",
            header: &["a", "b"],
            rows: vec![vec!["1.0".into(), "2.5e-9".into()]],
        };
        assert_eq!(String::from_utf8(csv_bytes(&t).unwrap()).unwrap(), "a,b\n1.0,2.5e-9\n");
    }

    #[test]
    fn failed_writes_leave_nothing_behind() {
        let tmp = std::env::temp_dir().join(format!("critset-write-{}", std::process::id()));
        let _ = fs::remove_dir_all(&tmp);
        let files = vec![("a.csv".to_string(), b"x\n".to_vec()), ("sub/b.csv".to_string(), b"y\n".to_vec())];
        assert!(matches!(write_all(&tmp, &files), Err(CliError::Io(_))));
        assert!(!tmp.join("a.csv").exists());
        let _ = fs::remove_dir_all(&tmp);
    }

    #[test]
    fn relative_output_dirs_follow_the_scenario_file() {
        assert_eq!(output_dir(Path::new("/s/x.json"), Path::new("out")), PathBuf::from("/s/out"));
        assert_eq!(output_dir(Path::new("/s/x.json"), Path::new("/abs")), PathBuf::from("/abs"));
    }
}
