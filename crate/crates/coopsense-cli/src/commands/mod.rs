pub mod cpm;
pub mod scenario;
pub mod sweep;
pub mod transform;

use crate::error::CliError;
use std::path::Path;

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

/// Compact float for file names: `0.05` → `0p05`.
pub(crate) fn slug(v: f64) -> String {
    let mut s = format!("{v}");
    if s.starts_with('-') {
        s = format!("m{}", &s[1..]);
    }
    s.replace('.', "p")
}
