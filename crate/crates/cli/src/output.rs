//! All-or-nothing output. Files are staged next to their destination and
//! renamed into place only after every file of a command has been written.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn add(&mut self, dest: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("staging {}", dest.display()))?;
        {
            let mut w = io::BufWriter::new(tmp.as_file_mut());
            write(&mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("writing {}", dest.display()))?;
        }
        self.files.push((tmp, dest.to_owned()));
        Ok(())
    }

    /// Moves every staged file into place; on failure removes the ones
    /// already moved so no partial output remains.
    pub fn commit(self) -> Result<()> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, dest) in self.files {
            if let Err(e) = tmp.persist(&dest) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e.error).with_context(|| format!("writing {}", dest.display()));
            }
            done.push(dest);
        }
        Ok(())
    }
}

/// Writes to `path` atomically, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut staged = Staged::default();
            staged.add(p, write)?;
            staged.commit()
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).and_then(|_| lock.flush()).context("writing to stdout")
        }
    }
}
