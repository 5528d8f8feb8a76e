//! Streaming newline-delimited JSON codec for corpus records.
//!
//! Reading is single-cursor sequential; yielded records are immutable values
//! safe to hand to parallel downstream stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::record::{content_digest, FileRecord, RepoMeta};

/// A record kind that can live in a JSONL stream.
///
/// `finalize` runs after deserialization with the 1-based line number and is
/// where per-kind integrity checks live.
pub trait JsonlRecord: Serialize + DeserializeOwned {
    fn finalize(self, _line: usize) -> Result<Self>
    where
        Self: Sized,
    {
        Ok(self)
    }
}

impl JsonlRecord for FileRecord {
    /// Verify the stored hash against the content bytes, or fill it in when
    /// the input stream omitted it. Size is treated the same way.
    fn finalize(mut self, line: usize) -> Result<Self> {
        let computed = content_digest(self.content.as_bytes());
        if self.content_hash.is_empty() {
            self.content_hash = computed;
        } else if self.content_hash != computed {
            return Err(Error::HashMismatch {
                line,
                path: self.path,
                stored: self.content_hash,
                computed,
            });
        }
        if self.size_bytes == 0 {
            self.size_bytes = self.content.len() as u64;
        }
        self.validate().map(|_| self)
    }
}

impl JsonlRecord for RepoMeta {}

/// Iterator over a JSONL stream, tracking 1-based line numbers.
pub struct JsonlReader<T, R> {
    reader: R,
    line: usize,
    _kind: PhantomData<T>,
}

impl<T: JsonlRecord, R: BufRead> JsonlReader<T, R> {
    pub fn new(reader: R) -> Self {
        JsonlReader {
            reader,
            line: 0,
            _kind: PhantomData,
        }
    }
}

impl<T: JsonlRecord, R: BufRead> Iterator for JsonlReader<T, R> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = String::new();
        loop {
            buf.clear();
            match self.reader.read_line(&mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            if buf.trim().is_empty() {
                continue;
            }
            let parsed: std::result::Result<T, _> = serde_json::from_str(buf.trim_end());
            return Some(match parsed {
                Ok(record) => record.finalize(self.line),
                Err(source) => Err(Error::MalformedLine {
                    line: self.line,
                    source,
                }),
            });
        }
    }
}

/// Read a whole stream into memory, stopping at the first error.
pub fn read_jsonl<T: JsonlRecord, R: BufRead>(reader: R) -> Result<Vec<T>> {
    JsonlReader::new(reader).collect()
}

pub fn read_jsonl_file<T: JsonlRecord>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(BufReader::new(File::open(path)?))
}

/// Serialize records one JSON object per line.
pub fn write_jsonl<'a, T: Serialize + 'a, W: Write>(
    writer: &mut W,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut *writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl_file<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_jsonl(&mut writer, records)?;
    writer.flush()?;
    Ok(())
}
