//! Persisted gallery of negative templates.
//!
//! Layout (little-endian): magic `NGAL`, version `u16`, `k: u8`, `L: u32`,
//! quantizer fingerprint (32 bytes), model fingerprint (32 bytes), seed
//! policy (`u8` tag, `u64` seed), then entries until end of file, each a
//! length-prefixed subject id followed by `L` label octets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{Fingerprint, NegativeTemplate, MAX_BINS};

pub const GALLERY_MAGIC: &[u8; 4] = b"NGAL";
pub const GALLERY_VERSION: u16 = 1;

/// How the negative templates in a gallery were randomized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    Entropy,
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GalleryMetadata {
    pub k: usize,
    pub length: usize,
    pub quantizer_fingerprint: Fingerprint,
    pub model_fingerprint: Fingerprint,
    pub version: u16,
    pub seed_policy: SeedPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gallery {
    metadata: GalleryMetadata,
    entries: BTreeMap<String, NegativeTemplate>,
}

impl Gallery {
    pub fn new(
        k: usize,
        length: usize,
        quantizer_fingerprint: Fingerprint,
        model_fingerprint: Fingerprint,
        seed_policy: SeedPolicy,
    ) -> Result<Self> {
        if !(2..=MAX_BINS).contains(&k) {
            return Err(Error::invalid(format!("gallery k={k} must be in 2..=255")));
        }
        if length == 0 || length > u32::MAX as usize {
            return Err(Error::invalid(format!("gallery template length {length}")));
        }
        Ok(Self {
            metadata: GalleryMetadata {
                k,
                length,
                quantizer_fingerprint,
                model_fingerprint,
                version: GALLERY_VERSION,
                seed_policy,
            },
            entries: BTreeMap::new(),
        })
    }

    pub fn metadata(&self) -> &GalleryMetadata {
        &self.metadata
    }

    pub fn k(&self) -> usize {
        self.metadata.k
    }

    pub fn template_len(&self) -> usize {
        self.metadata.length
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, subject_id: &str) -> Option<&NegativeTemplate> {
        self.entries.get(subject_id)
    }

    /// Entries in subject-id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &NegativeTemplate)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Adds or replaces the template for its subject.
    pub fn insert(&mut self, template: NegativeTemplate) -> Result<Option<NegativeTemplate>> {
        if template.k() != self.metadata.k || template.len() != self.metadata.length {
            return Err(Error::MetadataMismatch(format!(
                "template for {} has k={}, L={}; gallery has k={}, L={}",
                template.subject_id(),
                template.k(),
                template.len(),
                self.metadata.k,
                self.metadata.length
            )));
        }
        Ok(self
            .entries
            .insert(template.subject_id().to_string(), template))
    }

    /// Fails unless the gallery was enrolled with exactly these components.
    pub fn check_fingerprints(&self, quantizer: &Fingerprint, model: &Fingerprint) -> Result<()> {
        if &self.metadata.quantizer_fingerprint != quantizer {
            return Err(Error::FingerprintMismatch(format!(
                "gallery quantizer {} != supplied quantizer {}",
                self.metadata.quantizer_fingerprint, quantizer
            )));
        }
        if &self.metadata.model_fingerprint != model {
            return Err(Error::FingerprintMismatch(format!(
                "gallery model {} != supplied model {}",
                self.metadata.model_fingerprint, model
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.metadata;
        let mut w = ByteWriter::new();
        w.bytes(GALLERY_MAGIC)
            .u16(m.version)
            .u8(m.k as u8)
            .u32(m.length as u32)
            .bytes(m.quantizer_fingerprint.as_bytes())
            .bytes(m.model_fingerprint.as_bytes());
        match m.seed_policy {
            SeedPolicy::Entropy => w.u8(0).u64(0),
            SeedPolicy::Seeded(s) => w.u8(1).u64(s),
        };
        for (id, t) in &self.entries {
            w.str(id).bytes(t.labels());
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.expect_magic(GALLERY_MAGIC, "NGAL gallery")?;
        let version = r.header("version", |r| r.u16("version"))?;
        if version != GALLERY_VERSION {
            return Err(Error::VersionMismatch {
                format: "NGAL",
                found: version,
                supported: GALLERY_VERSION,
            });
        }
        let k = r.header("k", |r| r.u8("k"))? as usize;
        let length = r.header("template length", |r| r.u32("L"))? as usize;
        let qfp = r.header("quantizer fingerprint", |r| r.fixed::<32>("fingerprint"))?;
        let mfp = r.header("model fingerprint", |r| r.fixed::<32>("fingerprint"))?;
        let tag = r.header("seed policy", |r| r.u8("seed policy"))?;
        let seed = r.header("seed policy", |r| r.u64("seed"))?;
        let seed_policy = match tag {
            0 => SeedPolicy::Entropy,
            1 => SeedPolicy::Seeded(seed),
            t => return Err(Error::CorruptedEntry(format!("unknown seed policy tag {t}"))),
        };
        let mut gallery = Gallery::new(k, length, Fingerprint(qfp), Fingerprint(mfp), seed_policy)?;

        let mut index = 0usize;
        while !r.is_empty() {
            let at = r.position();
            let id = r.str("subject id").map_err(|e| entry_err(e, index, at))?;
            if r.remaining() < length {
                return Err(Error::CorruptedEntry(format!(
                    "entry {index} ({id}) at offset {at}: {} label octets, expected {length}",
                    r.remaining()
                )));
            }
            let labels = r.take(length, "labels")?.to_vec();
            let t = NegativeTemplate::new(labels, k, id.clone())
                .map_err(|e| Error::CorruptedEntry(format!("entry {index} ({id}): {e}")))?;
            if gallery.insert(t)?.is_some() {
                return Err(Error::CorruptedEntry(format!("duplicate subject {id}")));
            }
            index += 1;
        }
        Ok(gallery)
    }
}

fn entry_err(e: Error, index: usize, at: usize) -> Error {
    match e {
        Error::CorruptedEntry(m) => Error::CorruptedEntry(format!("entry {index} at offset {at}: {m}")),
        other => other,
    }
}

pub fn save_gallery(gallery: &Gallery, path: &Path) -> Result<()> {
    fs::write(path, gallery.to_bytes())?;
    Ok(())
}

pub fn load_gallery(path: &Path) -> Result<Gallery> {
    Gallery::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Gallery {
        let mut g = Gallery::new(
            3,
            8,
            Fingerprint::of(b"q"),
            Fingerprint::of(b"m"),
            SeedPolicy::Seeded(7),
        )
        .unwrap();
        for s in 0..n {
            let labels = (0..8).map(|i| ((i + s) % 3 + 1) as u8).collect();
            g.insert(NegativeTemplate::new(labels, 3, format!("subject-{s}")).unwrap())
                .unwrap();
        }
        g
    }

    #[test]
    fn empty_gallery_is_header_only() {
        let g = sample(0);
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), 4 + 2 + 1 + 4 + 32 + 32 + 1 + 8);
        assert_eq!(Gallery::from_bytes(&bytes).unwrap(), g);
    }

    #[test]
    fn three_subject_round_trip() {
        let g = sample(3);
        let back = Gallery::from_bytes(&g.to_bytes()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.metadata().seed_policy, SeedPolicy::Seeded(7));
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn short_entry_is_corrupted() {
        let g = sample(1);
        let bytes = g.to_bytes();
        let err = Gallery::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::CorruptedEntry(_)), "{err}");
    }

    #[test]
    fn missing_fingerprint_is_truncated_header() {
        let bytes = sample(0).to_bytes();
        let err = Gallery::from_bytes(&bytes[..4 + 2 + 1 + 4 + 10]).unwrap_err();
        assert!(matches!(err, Error::TruncatedHeader("quantizer fingerprint")), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample(0).to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            Gallery::from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn insert_checks_shape_and_fingerprints() {
        let mut g = sample(0);
        let wrong = NegativeTemplate::new(vec![1; 7], 3, "x").unwrap();
        assert!(matches!(g.insert(wrong), Err(Error::MetadataMismatch(_))));
        assert!(g
            .check_fingerprints(&Fingerprint::of(b"q"), &Fingerprint::of(b"m"))
            .is_ok());
        assert!(matches!(
            g.check_fingerprints(&Fingerprint::of(b"other"), &Fingerprint::of(b"m")),
            Err(Error::FingerprintMismatch(_))
        ));
    }
}
