use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DRONEWATCH_OUT_DIR";

/// `--out` if given, else the environment default, else the working
/// directory.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Writes through a temporary file in the same directory, then renames it
/// into place so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(target)
}
