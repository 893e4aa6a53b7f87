//! Output directory bookkeeping. Every file written through [`Outputs`] is
//! removed again if the command fails.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// Rows are written as given; floats should already be formatted with [`fmt`].
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&p, text)?;
        Ok(())
    }

    /// Removes what this run wrote, and the directory if this run created it.
    pub fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn state_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    h.extend((1..=d).map(|i| format!("rho{i}")));
    h.push("u".into());
    h
}

pub fn state_row(s: &mixflow::AugmentedState) -> Vec<String> {
    s.x.iter().chain(&s.rho).chain(std::iter::once(&s.u)).map(|v| fmt(*v)).collect()
}
