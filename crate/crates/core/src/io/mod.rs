//! File formats: dataset text/JSON, LAMMPS dump, atomic writes.

pub mod atomic;
pub mod dump;
pub mod xyz;

use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Dataset;

/// Dataset file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    XyzExtended,
    JsonFrames,
}

impl DatasetFormat {
    /// Infer the format from a file extension (.xyz / .json).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("xyz") => Ok(Self::XyzExtended),
            Some("json") => Ok(Self::JsonFrames),
            other => Err(Error::Config(format!(
                "cannot infer dataset format from extension {other:?} (use .xyz or .json)"
            ))),
        }
    }
}

pub fn read_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let ds = match format {
        DatasetFormat::XyzExtended => xyz::read_dataset(&text)?,
        DatasetFormat::JsonFrames => serde_json::from_str(&text)?,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<()> {
    ds.validate()?;
    let text = match format {
        DatasetFormat::XyzExtended => xyz::write_dataset(ds),
        DatasetFormat::JsonFrames => serde_json::to_string_pretty(ds)?,
    };
    atomic::write_atomic(path, text.as_bytes())
}

/// Read a dataset, inferring the format from the extension.
pub fn read_dataset_auto(path: &Path) -> Result<Dataset> {
    read_dataset(path, DatasetFormat::from_path(path)?)
}

/// Write a dataset, inferring the format from the extension.
pub fn write_dataset_auto(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, path, DatasetFormat::from_path(path)?)
}
