//! Writing output files: overwrite protection, JSON formatting, hashing.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Fails if `path` exists and `force` is not set.
pub fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::validation(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

/// Writes through a temporary sibling and renames, creating parent
/// directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    ensure_writable(path, force)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::at_path(parent, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::at_path(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::at_path(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::at_path(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T, force: bool) -> Result<()> {
    write_atomic(path, &json_bytes(value)?, force)
}
