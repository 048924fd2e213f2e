use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AppRecord, IntentDb, IntentSummaryRow};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema_version: u32,
    #[serde(flatten)]
    row: IntentSummaryRow,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    apps: BTreeMap<String, AppRecord>,
}

/// Path of the per-app metadata file stored next to `db`.
pub fn meta_path(db: &Path) -> PathBuf {
    let mut s = OsString::from(db.as_os_str());
    s.push(".meta.json");
    PathBuf::from(s)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DbError + '_ {
    move |source| DbError::Io { path: path.to_path_buf(), source }
}

/// Writes one JSON record per row in canonical order, plus the metadata
/// sidecar. The same database always produces the same bytes.
pub fn save_db(db: &IntentDb, path: &Path) -> Result<(), DbError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let mut out = Vec::new();
    for row in db.rows() {
        let rec = Record { schema_version: SCHEMA_VERSION, row: row.clone() };
        serde_json::to_writer(&mut out, &rec).expect("row serializes");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(io(path))?;

    let sidecar = Sidecar { schema_version: SCHEMA_VERSION, apps: db.apps().clone() };
    let meta = meta_path(path);
    let mut f = fs::File::create(&meta).map_err(io(&meta))?;
    serde_json::to_writer_pretty(&mut f, &sidecar).expect("metadata serializes");
    f.write_all(b"\n").map_err(io(&meta))?;
    Ok(())
}

fn check_version(v: &serde_json::Value, path: &Path, line: usize) -> Result<(), DbError> {
    let found = v.get("schema_version").and_then(|x| x.as_u64()).ok_or_else(|| DbError::Malformed {
        path: path.to_path_buf(),
        line,
        reason: "missing schema_version".into(),
    })?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(DbError::SchemaVersionMismatch { found, expected: SCHEMA_VERSION });
    }
    Ok(())
}

/// Reads a store written by [`save_db`]. A missing sidecar yields a
/// database without per-app metadata.
pub fn load_db(path: &Path) -> Result<IntentDb, DbError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut db = IntentDb::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| DbError::Malformed { path: path.to_path_buf(), line: i + 1, reason };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        check_version(&value, path, i + 1)?;
        let rec: Record = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        db.insert_row(rec.row);
    }
    let meta = meta_path(path);
    if meta.is_file() {
        let text = fs::read_to_string(&meta).map_err(io(&meta))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| DbError::Malformed {
            path: meta.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        check_version(&value, &meta, 1)?;
        let sidecar: Sidecar = serde_json::from_value(value).map_err(|e| DbError::Malformed {
            path: meta.clone(),
            line: 1,
            reason: e.to_string(),
        })?;
        for (package, record) in sidecar.apps {
            db.insert_app_record(package, record);
        }
    }
    Ok(db)
}
