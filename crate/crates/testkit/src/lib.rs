//! Test support shared across the workspace: the checked-in fixture
//! repository, a seeded generator for straight-line Python functions, and
//! brute-force oracles that re-implement the dataflow rules with none of the
//! production machinery.

pub mod gen;
pub mod oracle;
pub mod randgraph;

use std::path::PathBuf;

/// Root of the canonical fixture repository (pkg/util.py, pkg/main.py).
pub fn f1_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/f1")
}
