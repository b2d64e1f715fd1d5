//! Crash-safe file replacement and durable appends.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Environment variable naming a failpoint; `save-before-rename` aborts the
/// process after a replacement file is fully written but before it is
/// renamed into place.
pub const FAILPOINT_ENV: &str = "CLEAN_FAILPOINT";

pub(crate) fn failpoint(name: &str) {
    if std::env::var_os(FAILPOINT_ENV).is_some_and(|v| v == name) {
        log::error!("failpoint {name} hit, aborting");
        std::process::abort();
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

pub fn is_temp_file(path: &Path) -> bool {
    path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.') && n.ends_with(".tmp"))
}

/// A replacement for `target` being written next to it.
///
/// Nothing at `target` changes until [`AtomicFile::commit`]; dropping the
/// value without committing leaves the old file untouched and the temp file
/// behind, exactly as a crash would.
pub struct AtomicFile {
    target: PathBuf,
    temp: PathBuf,
    file: File,
}

impl AtomicFile {
    pub fn create(target: impl Into<PathBuf>) -> io::Result<Self> {
        let target = target.into();
        let temp = temp_path(&target);
        let file = File::create(&temp)?;
        Ok(AtomicFile { target, temp, file })
    }

    pub fn write_all(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.file.write_all(bytes)
    }

    pub fn commit(self) -> io::Result<()> {
        self.file.sync_all()?;
        drop(self.file);
        failpoint("save-before-rename");
        fs::rename(&self.temp, &self.target)?;
        sync_dir(&self.target)
    }
}

pub fn write_atomic(target: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = AtomicFile::create(target)?;
    f.write_all(bytes)?;
    f.commit()
}

fn sync_dir(path: &Path) -> io::Result<()> {
    #[cfg(unix)]
    if let Some(dir) = path.parent() {
        File::open(dir)?.sync_all()?;
    }
    #[cfg(not(unix))]
    let _ = path;
    Ok(())
}

/// Append and flush to stable storage before returning.
pub fn append_durable(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(bytes)?;
    f.sync_data()
}

/// Remove leftover temp files in `dir`; returns how many were removed.
pub fn remove_stale_temps(dir: &Path) -> io::Result<usize> {
    let mut removed = 0;
    if !dir.is_dir() {
        return Ok(0);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if is_temp_file(&path) {
            fs::remove_file(&path)?;
            removed += 1;
        }
    }
    Ok(removed)
}
