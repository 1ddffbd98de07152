//! Embedding file formats: a CSV dialect and the `NEGT` binary container.
//!
//! CSV header: `subject_id,capture_id[,attr:<name>...],f0,f1,...,f{d-1}`.
//!
//! Binary layout (little-endian): magic `NEGT`, version `u16`, `d: u32`,
//! record count `u64`, then per record the length-prefixed subject and
//! capture ids, an attribute count `u32` with length-prefixed name/label
//! pairs, and `d` `f32` values.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::Embedding;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"NEGT";
pub const EMBEDDING_VERSION: u16 = 1;
pub const ATTRIBUTE_PREFIX: &str = "attr:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Csv,
    Binary,
}

impl EmbeddingFormat {
    /// `.csv` selects CSV; anything else is treated as binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

/// Loads embeddings and unit-normalizes each one.
pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<Vec<Embedding>> {
    Ok(load_embeddings_raw(path, format)?
        .iter()
        .map(Embedding::normalized)
        .collect())
}

/// Loads embeddings exactly as stored.
pub fn load_embeddings_raw(path: &Path, format: EmbeddingFormat) -> Result<Vec<Embedding>> {
    let data = fs::read(path)?;
    match format {
        EmbeddingFormat::Csv => parse_csv(&data),
        EmbeddingFormat::Binary => decode_binary(&data),
    }
}

pub fn save_embeddings(path: &Path, embeddings: &[Embedding], format: EmbeddingFormat) -> Result<()> {
    let bytes = match format {
        EmbeddingFormat::Csv => encode_csv(embeddings)?,
        EmbeddingFormat::Binary => encode_binary(embeddings)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

fn check_dims(embeddings: &[Embedding]) -> Result<usize> {
    match embeddings.first() {
        None => Ok(0),
        Some(_) => crate::model::common_dim(embeddings),
    }
}

pub fn encode_csv(embeddings: &[Embedding]) -> Result<Vec<u8>> {
    let d = check_dims(embeddings)?;
    let names: BTreeSet<&str> = embeddings
        .iter()
        .flat_map(|e| e.attributes().keys().map(String::as_str))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id".to_string(), "capture_id".to_string()];
    header.extend(names.iter().map(|n| format!("{ATTRIBUTE_PREFIX}{n}")));
    header.extend((0..d).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(csv_err)?;

    for e in embeddings {
        let mut row = vec![e.subject_id().to_string(), e.capture_id().to_string()];
        row.extend(
            names
                .iter()
                .map(|n| e.attribute(n).unwrap_or_default().to_string()),
        );
        row.extend(e.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn csv_err(e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "unknown position".into());
    Error::parse(location, e.to_string())
}

pub fn parse_csv(data: &[u8]) -> Result<Vec<Embedding>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(data);
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() < 2 || &header[0] != "subject_id" || &header[1] != "capture_id" {
        return Err(Error::parse(
            "line 1",
            "header must start with subject_id,capture_id",
        ));
    }

    let mut attr_names = Vec::new();
    let mut col = 2;
    while col < header.len() {
        match header[col].strip_prefix(ATTRIBUTE_PREFIX) {
            Some(name) => attr_names.push(name.to_string()),
            None => break,
        }
        col += 1;
    }
    let first_feature = col;
    for (i, name) in header.iter().enumerate().skip(first_feature) {
        if name != format!("f{}", i - first_feature) {
            return Err(Error::parse(
                "line 1",
                format!("column {} is `{name}`; expected f{}", i + 1, i - first_feature),
            ));
        }
    }
    let d = header.len() - first_feature;

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let location = format!("line {line}");
        if record.len() < 2 {
            return Err(Error::parse(location, "missing id columns"));
        }
        let found = record.len().saturating_sub(first_feature);
        if record.len() < first_feature || found != d {
            return Err(Error::DimensionMismatch {
                context: format!("record {}/{} ({location})", &record[0], &record[1]),
                expected: d,
                found,
            });
        }
        let values = record
            .iter()
            .skip(first_feature)
            .enumerate()
            .map(|(i, s)| {
                s.trim().parse::<f32>().map_err(|_| {
                    Error::parse(location.clone(), format!("feature f{i}: `{s}` is not a number"))
                })
            })
            .collect::<Result<Vec<f32>>>()?;
        let mut attributes = BTreeMap::new();
        for (name, value) in attr_names.iter().zip(record.iter().skip(2)) {
            if !value.is_empty() {
                attributes.insert(name.clone(), value.to_string());
            }
        }
        let e = Embedding::new(&record[0], &record[1], values)
            .map_err(|e| Error::parse(location.clone(), e.to_string()))?;
        out.push(e.with_attributes(attributes));
    }
    Ok(out)
}

pub fn encode_binary(embeddings: &[Embedding]) -> Result<Vec<u8>> {
    let d = check_dims(embeddings)?;
    let mut w = ByteWriter::new();
    w.bytes(EMBEDDING_MAGIC)
        .u16(EMBEDDING_VERSION)
        .u32(d as u32)
        .u64(embeddings.len() as u64);
    for e in embeddings {
        w.str(e.subject_id()).str(e.capture_id());
        w.u32(e.attributes().len() as u32);
        for (k, v) in e.attributes() {
            w.str(k).str(v);
        }
        for &v in e.values() {
            w.f32(v);
        }
    }
    Ok(w.finish())
}

pub fn decode_binary(data: &[u8]) -> Result<Vec<Embedding>> {
    let mut r = ByteReader::new(data);
    r.expect_magic(EMBEDDING_MAGIC, "NEGT embedding")?;
    let version = r.header("version", |r| r.u16("version"))?;
    if version != EMBEDDING_VERSION {
        return Err(Error::VersionMismatch {
            format: "NEGT",
            found: version,
            supported: EMBEDDING_VERSION,
        });
    }
    let d = r.header("dimension", |r| r.u32("dimension"))? as usize;
    let count = r.header("record count", |r| r.u64("record count"))?;

    let mut out = Vec::with_capacity(count.min(1 << 20) as usize);
    for index in 0..count {
        let at = r.position();
        let ctx = |e: Error| match e {
            Error::CorruptedEntry(m) => Error::CorruptedEntry(format!("record {index} (offset {at}): {m}")),
            other => other,
        };
        let subject = r.str("subject id").map_err(ctx)?;
        let capture = r.str("capture id").map_err(ctx)?;
        let n_attr = r.u32("attribute count").map_err(ctx)?;
        let mut attributes = BTreeMap::new();
        for _ in 0..n_attr {
            let k = r.str("attribute name").map_err(ctx)?;
            let v = r.str("attribute label").map_err(ctx)?;
            attributes.insert(k, v);
        }
        let mut values = Vec::with_capacity(d);
        for _ in 0..d {
            values.push(r.f32("feature").map_err(ctx)?);
        }
        let e = Embedding::new(subject, capture, values).map_err(|e| {
            Error::parse(format!("record {index} (offset {at})"), e.to_string())
        })?;
        out.push(e.with_attributes(attributes));
    }
    if !r.is_empty() {
        return Err(Error::CorruptedEntry(format!(
            "{} trailing bytes after {count} records",
            r.remaining()
        )));
    }
    Ok(out)
}
