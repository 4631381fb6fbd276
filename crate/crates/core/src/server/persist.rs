//! Append-only operation log. Each line is the wire request that mutated the
//! store, so replay goes through the same code as live traffic.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::wire::Request;

pub struct OpLog {
    path: PathBuf,
    file: File,
}

impl OpLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(OpLog { path: path.to_path_buf(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record straight to the file; nothing is buffered in-process,
    /// so an acknowledged operation survives the process being killed.
    pub fn append(&mut self, record: &Request) -> Result<()> {
        let mut line = record.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        Ok(())
    }
}

/// Reads every record of a log. A missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<Request>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    }
    let mut records = Vec::new();
    let mut rest = text.as_str();
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let Some(end) = rest.find('\n') else {
            return Err(Error::CorruptLog { line: line_no, reason: "truncated final line".into() });
        };
        let line = &rest[..end];
        rest = &rest[end + 1..];
        let record =
            Request::from_line(line).map_err(|e| Error::CorruptLog { line: line_no, reason: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}
