//! Config-driven campaigns on top of the `spinmet` library.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod report;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use artifacts::{sha256_hex, Artifacts, FileEntry};
use config::LoadedConfig;
pub use error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub cli_version: String,
    pub core_version: String,
    pub task: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
    pub unconverged_rows: usize,
    pub files: Vec<FileEntry>,
}

pub struct RunSummary {
    pub output_dir: PathBuf,
    pub lines: Vec<String>,
    pub unconverged_rows: usize,
}

/// Parses and validates a config, loading every file it references.
pub fn validate(config_path: &Path) -> Result<String, CliError> {
    let loaded = LoadedConfig::read(config_path)?;
    tasks::prepare(&loaded)?;
    Ok(loaded.config.task.kind().to_string())
}

/// Runs a config and writes its artifacts and manifest.
pub fn run(config_path: &Path) -> Result<RunSummary, CliError> {
    let loaded = LoadedConfig::read(config_path)?;
    let prepared = tasks::prepare(&loaded)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(loaded.config.threads.unwrap_or(0))
        .build()
        .map_err(CliError::internal)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let dir = loaded.output_dir();
    let mut out = Artifacts::create(&dir)?;
    let executed = pool.install(|| tasks::execute(prepared, &mut out))?;
    let manifest = Manifest {
        tool: "spinmet".into(),
        cli_version: env!("CARGO_PKG_VERSION").into(),
        core_version: spinmet::VERSION.into(),
        task: loaded.config.task.kind().into(),
        config_path: config_path.display().to_string(),
        config_sha256: sha256_hex(&loaded.raw),
        seed: loaded.config.seed,
        threads: pool.current_num_threads(),
        started_unix_s: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        unconverged_rows: executed.unconverged_rows,
        files: out.files.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(CliError::internal)? + "\n";
    std::fs::write(dir.join(MANIFEST), text).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))?;
    Ok(RunSummary { output_dir: dir, lines: executed.lines, unconverged_rows: executed.unconverged_rows })
}
