//! Configuration, presets, matrix files and result emission.

pub mod config;
pub mod emit;
pub mod matrix;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use config::{
    apply_override, parse_config, parse_override, preset_plan, resolve_preset, DataSpec, ExperimentPlan, Preset, Run,
    Scale,
};
pub use emit::{emit_results, read_results_json, Format, ResultDocument, RunMetadata};
pub use matrix::{ingest_matrix, write_matrix, write_matrix_csv, Encoding};

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
