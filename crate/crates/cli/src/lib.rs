//! Batch driver for the Kochergin flow laboratory: configuration, the
//! diagnostic battery and the full pipeline with a hashed manifest.

pub mod checks;
pub mod config;
pub mod pipeline;

pub use checks::{run_checks, CheckKind, CheckResult, ChecksReport};
pub use config::ExperimentConfig;
pub use pipeline::{run, Manifest};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "KOCHERGIN_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error ({1}): {0}")]
    ConfigCore(kochergin_core::Error, String),
    #[error("{module} failed ({params}): {source}")]
    Module {
        module: &'static str,
        params: String,
        source: kochergin_core::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn module(module: &'static str, source: kochergin_core::Error, params: impl std::fmt::Display) -> Self {
        CliError::Module { module, params: params.to_string(), source }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for configuration problems, 1 for everything that fails later.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigCore(..) => 2,
            _ => 1,
        }
    }
}

/// Sizes the global rayon pool from the environment; the first call wins.
pub fn init_workers() -> Result<usize, CliError> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer")))?,
        Err(_) => 0,
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}
