//! Atomic file output.
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{io_error, FormatResult};

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> FormatResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_error(path, e));
    }
    Ok(())
}

pub fn read(path: &Path) -> FormatResult<Vec<u8>> {
    fs::read(path).map_err(|e| io_error(path, e))
}

pub fn read_to_string(path: &Path) -> FormatResult<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}
