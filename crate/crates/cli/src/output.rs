use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

/// Fixed notation with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return format!("{:.11}", 0.0);
    }
    // exponent after rounding, so 0.99999999999999 counts as 1
    let sci = format!("{x:.11e}");
    let magnitude: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Files staged in memory and written at the end of a command.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn add_csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        self.add(name, s);
    }

    pub fn add_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// Writes every file through a temporary file in `dir` and a rename.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();
        for (name, contents) in self.files {
            let path = dir.join(&name);
            let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(&contents).map_err(io)?;
            tmp.persist(&path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}
