//! Output files and the run manifest.
//!
//! Numbers in CSV files use Rust's `Display` for `f64`, the shortest decimal
//! string that parses back to the same value; it does not depend on locale.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Collects the files written by one invocation.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> CliResult<PathBuf> {
        self.write(name, &table.to_bytes())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// A CSV table built from preformatted cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

/// Round-trip decimal formatting.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Provenance of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub master_seed: u64,
    pub tool_version: String,
    pub arguments: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(subcommand: &str, config: Option<&Path>, seed: u64, out: &mut OutDir) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_path: config.map(|p| p.display().to_string()),
            master_seed: seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            arguments: std::env::args().skip(1).collect(),
            outputs: out
                .written()
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
        };
        out.write_json(&format!("manifest.{subcommand}.json"), &manifest)
    }
}
