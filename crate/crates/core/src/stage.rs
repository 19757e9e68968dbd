//! Stage files: a JSON header line followed by one JSON object per line.
//!
//! The header names the format, its version, and the SHA-256 digests of the
//! inputs the stage was computed from, so a later stage can refuse to run
//! against different inputs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const CORPUS_FORMAT: &str = "quizdim-corpus";
pub const SCORED_FORMAT: &str = "quizdim-scored";
pub const REPORT_FORMAT: &str = "quizdim-report";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHeader {
    pub format: String,
    pub format_version: u32,
    /// Input name -> SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl StageHeader {
    pub fn new(format: &str) -> Self {
        StageHeader {
            format: format.to_string(),
            format_version: FORMAT_VERSION,
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            summary: serde_json::Value::Null,
        }
    }

    pub fn input(&self, name: &str) -> Option<&str> {
        self.inputs.get(name).map(String::as_str)
    }

    /// Error unless the header recorded `digest` for input `name`.
    pub fn require_input(&self, name: &str, digest: &str) -> Result<()> {
        match self.input(name) {
            Some(d) if d == digest => Ok(()),
            Some(d) => Err(Error::Schema(format!(
                "{name} digest mismatch: stage file was built from {d}, supplied file is {digest}"
            ))),
            None => Err(Error::Schema(format!("stage header does not record input `{name}`"))),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_stage<W: Write, T: Serialize>(mut out: W, header: &StageHeader, items: &[T]) -> Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_stage<R: Read, T: DeserializeOwned>(source: R, expected_format: &str) -> Result<(StageHeader, Vec<T>)> {
    let mut reader = BufReader::new(source);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: StageHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Schema(format!("unreadable stage header: {e}")))?;
    if header.format != expected_format {
        return Err(Error::Schema(format!(
            "expected a {expected_format} file, found {}",
            header.format
        )));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported {expected_format} version {}",
            header.format_version
        )));
    }
    let mut items = Vec::new();
    let mut offset = line.len() as u64;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if !line.trim().is_empty() {
            let item = serde_json::from_str(line.trim_end())
                .map_err(|e| Error::format(offset, format!("bad {expected_format} record: {e}")))?;
            items.push(item);
        }
        offset += n as u64;
    }
    Ok((header, items))
}
