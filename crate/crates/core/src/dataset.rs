//! Line-oriented dataset files.
//!
//! The first line is a JSON header, every following line one JSON sample:
//!
//! ```text
//! {"format":"pednav-dataset","version":1,"size_log":[{"iteration":0,"meta":..,"sub":[..]}]}
//! {"observation":{..},"target":{"kind":"action",..},"scenario":"Cross","provenance":"expert","iteration":0}
//! ```
//!
//! Samples appear in [`DatasetStore::iter_all`] order: `D_h`, then each `D_g`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algos::{DatasetStore, SizeLogEntry};
use crate::error::{Error, Result};
use crate::policy::LabeledSample;

pub const FORMAT: &str = "pednav-dataset";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    size_log: Vec<SizeLogEntry>,
}

pub fn write_samples<'a, W: Write>(
    mut w: W,
    samples: impl IntoIterator<Item = &'a LabeledSample>,
) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_store<W: Write>(mut w: W, store: &DatasetStore) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        size_log: store.size_log().to_vec(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    write_samples(&mut w, store.iter_all())
}

pub fn read_store<R: BufRead>(r: R) -> Result<DatasetStore> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let header: Header = serde_json::from_str(&first)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Parse(format!(
            "unsupported dataset header {} v{}",
            header.format, header.version
        )));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSample = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
        samples.push(s);
    }
    DatasetStore::from_parts(samples, header.size_log)
}

pub fn save_store(store: &DatasetStore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_store(&mut w, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_store(path: impl AsRef<Path>) -> Result<DatasetStore> {
    read_store(BufReader::new(File::open(path)?))
}
