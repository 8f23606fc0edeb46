use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// An output directory whose artifacts were checked for clobbering up front,
/// so a refused run writes nothing.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn prepare(root: &Path, force: bool, artifacts: &[&str]) -> Result<Self, CliError> {
        if !force {
            if let Some(p) = artifacts.iter().map(|a| root.join(a)).find(|p| p.exists()) {
                return Err(CliError::Exists(p));
            }
        }
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.root.join(name);
        let run = || -> io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            f(&mut w)?;
            w.flush()
        };
        run().map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        })
    }
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
