//! File formats, artifact persistence and the `tubo` command line on top of
//! `tubo-core`.

pub mod commands;
pub mod config;
pub mod dmcsv;
pub mod error;
pub mod persist;
pub mod report;
pub mod topology;

use std::path::Path;

pub use error::{Error, Result};

/// Environment variable naming the report directory.
pub const REPORT_DIR_ENV: &str = "TUBO_REPORT_DIR";

/// Write `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(Error::io(path))
}
