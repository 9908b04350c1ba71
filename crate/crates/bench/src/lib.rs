//! Fixtures shared by the benchmarks.

use std::path::PathBuf;
use vdd_core::project::Project;

pub fn corpus(dir: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(dir)
}

/// A corpus project; panics if it does not load.
pub fn project(dir: &str) -> Project {
    Project::load(&corpus(dir)).unwrap_or_else(|e| panic!("{dir}: {e}"))
}
