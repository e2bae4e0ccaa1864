//! On-disk formats shared by the subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mrfdpm::ingest::ShotSummary;
use mrfdpm::{Grid, PointPattern};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A point pattern plus optional metadata. A bare `{region, points}` object
/// is also a valid pattern file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternFile {
    #[serde(flatten)]
    pub pattern: PointPattern,
    /// Suggested grid for fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
    /// Shots read from the source but outside the region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<ShotSummary>,
}

/// Generating surface of a simulated pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub setting: u32,
    pub component_values: Vec<f64>,
    /// Component of each box of `grid`.
    pub labels: Vec<usize>,
    pub surface: Vec<f64>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}
