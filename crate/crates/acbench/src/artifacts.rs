//! CSV and JSON files shared between stages. Every file carries the config
//! hash and seed: CSVs in a leading `#` comment line, JSON documents as
//! fields of the envelope.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn header(&self) -> String {
        format!("# acbench config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

/// Versioned JSON envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub data: T,
}

impl<T> Document<T> {
    pub fn new(format: &str, stamp: &Stamp, data: T) -> Self {
        Document {
            format: format.to_string(),
            version: FORMAT_VERSION,
            config_hash: stamp.config_hash.clone(),
            seed: stamp.seed,
            data,
        }
    }
}

fn create(path: &Path) -> AppResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| AppError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, stamp: Option<&Stamp>, rows: impl IntoIterator<Item = T>) -> AppResult<()> {
    let mut file = create(path)?;
    if let Some(s) = stamp {
        file.write_all(s.header().as_bytes()).map_err(|e| AppError::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| AppError::io(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Read typed rows; any row that does not fit the schema is an error.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> AppResult<Vec<T>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => AppError::io(path, &e),
            _ => AppError::schema(path, &e),
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| AppError::io(path, e))?;
    file.write_all(b"\n").and_then(|_| file.flush()).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::schema(path, e))
}

/// Read a document and check its format tag.
pub fn read_document<T: DeserializeOwned>(path: &Path, format: &str) -> AppResult<Document<T>> {
    let doc: Document<T> = read_json(path)?;
    if doc.format != format || doc.version != FORMAT_VERSION {
        return Err(AppError::schema(
            path,
            format!("expected {format} v{FORMAT_VERSION}, found {} v{}", doc.format, doc.version),
        ));
    }
    Ok(doc)
}
