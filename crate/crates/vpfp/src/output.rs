//! Run artifacts. Every file carries the code version and config hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::spectral::{write_snapshot, SpectralField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output directory of one run.
#[derive(Clone, Debug)]
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
}

impl Artifacts {
    pub fn create(dir: impl Into<PathBuf>, hash: impl Into<String>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Artifacts { dir, hash: hash.into() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// `# vpfp <version> config=<hash>`
    pub fn header(&self) -> String {
        format!("# vpfp {VERSION} config={}", self.hash)
    }

    /// CSV with the header comment, a column line and one record per row.
    pub fn write_csv<R: AsRef<[String]>>(&self, name: &str, columns: &[&str], rows: &[R]) -> Result<PathBuf> {
        let mut text = String::new();
        text.push_str(&self.header());
        text.push('\n');
        text.push_str(&columns.join(","));
        text.push('\n');
        for r in rows {
            text.push_str(&r.as_ref().join(","));
            text.push('\n');
        }
        self.write_text(name, &text)
    }

    /// Numeric CSV, every value in full precision.
    pub fn write_table(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&x| sci(x)).collect()).collect();
        self.write_csv(name, columns, &rows)
    }

    /// Pretty JSON with `version` and `config_hash` fields added at the top
    /// level when `value` is an object.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value)?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("version".into(), VERSION.into());
            obj.insert("config_hash".into(), self.hash.clone().into());
        }
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    /// Binary snapshot followed by the header line as a trailer, which
    /// [`crate::spectral::read_snapshot`] never reads.
    pub fn write_snapshot(&self, name: &str, field: &SpectralField) -> Result<PathBuf> {
        let p = self.path(name);
        let mut w = std::io::BufWriter::new(fs::File::create(&p)?);
        write_snapshot(field, &mut w)?;
        writeln!(w, "\n{}", self.header())?;
        w.flush()?;
        Ok(p)
    }
}
