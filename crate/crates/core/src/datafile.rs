//! Shared plumbing for the whitespace-separated data files shipped in
//! `data/` (catalogs and tables). `#` starts a comment line.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataFileError {
    #[error("{file}:{line}: {reason}")]
    Malformed { file: String, line: usize, reason: String },
    #[error("{0} is listed both as a source and as a sink")]
    SourceSinkConflict(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Non-blank, non-comment lines with their 1-based numbers, split on
/// whitespace.
pub(crate) fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

pub(crate) fn read(path: &Path) -> Result<String, DataFileError> {
    std::fs::read_to_string(path).map_err(|e| DataFileError::Io { path: path.to_path_buf(), source: e })
}

pub(crate) fn malformed(file: &str, line: usize, reason: impl Into<String>) -> DataFileError {
    DataFileError::Malformed { file: file.to_string(), line, reason: reason.into() }
}
