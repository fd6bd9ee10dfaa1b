//! Deterministic CSV emission.
//!
//! Every file opens with provenance comments (config hash, code version,
//! seed) so artifacts are traceable, and all floats are written in Rust's
//! shortest-round-trip form: identical runs produce identical bytes, which
//! the determinism acceptance check compares directly.

use anyhow::{Context, Result};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            version: shearlab_core::VERSION.to_string(),
            seed,
        }
    }
}

/// One open CSV file; rows are written through a single handle so concurrent
/// sweep workers hand their results to the owner instead of interleaving.
pub struct CsvFile {
    path: PathBuf,
    w: BufWriter<File>,
    columns: usize,
}

impl CsvFile {
    pub fn create(path: impl AsRef<Path>, columns: &[&str], prov: &Provenance) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file =
            File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# config_hash = {}", prov.config_hash)?;
        writeln!(w, "# version = {}", prov.version)?;
        writeln!(w, "# seed = {}", prov.seed)?;
        writeln!(w, "{}", columns.join(","))?;
        Ok(Self {
            path,
            w,
            columns: columns.len(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// All-numeric row.
    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), self.columns, "row width mismatch");
        let mut line = String::new();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{}", canon(*v)).unwrap();
        }
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    /// Row with a leading label column.
    pub fn labeled_row(&mut self, label: &str, values: &[f64]) -> Result<()> {
        assert_eq!(values.len() + 1, self.columns, "row width mismatch");
        let mut line = String::from(label);
        for v in values {
            line.push(',');
            write!(line, "{}", canon(*v)).unwrap();
        }
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Shortest round-trip float text; non-finite values get stable spellings.
fn canon(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}
