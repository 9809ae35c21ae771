//! Configuration-driven experiments on top of the `varbpr` library.

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;

/// Process exit code for a failed command: 2 for configuration and input
/// problems, 3 for numeric failures.
pub fn exit_code(err: &varbpr::Error) -> i32 {
    use varbpr::Error::*;
    match err {
        Config(_) | Io { .. } | Parse { .. } => 2,
        Domain(_) | LengthMismatch(..) | Divergence { .. } => 3,
    }
}
