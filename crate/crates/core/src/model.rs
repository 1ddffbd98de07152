//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest supported bin count; gallery files store one octet per label.
pub const MAX_BINS: usize = 255;

/// A real-valued face embedding for one capture of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    subject_id: String,
    capture_id: String,
    values: Vec<f32>,
    attributes: BTreeMap<String, String>,
}

impl Embedding {
    pub fn new(
        subject_id: impl Into<String>,
        capture_id: impl Into<String>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let capture_id = capture_id.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding {subject_id}/{capture_id}, feature {i}"
            )));
        }
        Ok(Self {
            subject_id,
            capture_id,
            values,
            attributes: BTreeMap::new(),
        })
    }

    pub fn with_attribute(mut self, name: impl Into<String>, label: impl Into<String>) -> Self {
        self.attributes.insert(name.into(), label.into());
        self
    }

    pub fn with_attributes(mut self, attributes: BTreeMap<String, String>) -> Self {
        self.attributes = attributes;
        self
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn capture_id(&self) -> &str {
        &self.capture_id
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn attributes(&self) -> &BTreeMap<String, String> {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Returns a unit-length copy.
    ///
    /// Vectors already within `1e-6` of unit length and all-zero vectors are
    /// returned unchanged, so normalizing twice is bit-exact.
    pub fn normalized(&self) -> Self {
        let norm = self.l2_norm();
        if norm == 0.0 || (norm - 1.0).abs() <= 1e-6 {
            return self.clone();
        }
        let values = self
            .values
            .iter()
            .map(|&v| (f64::from(v) / norm) as f32)
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }

    /// Cosine similarity between two embeddings of equal dimension.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let mut dot = 0.0;
        for (&a, &b) in self.values.iter().zip(&other.values) {
            dot += f64::from(a) * f64::from(b);
        }
        let denom = self.l2_norm() * other.l2_norm();
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }
}

/// Output of the enlargement network: `L` values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnlargedEmbedding {
    values: Vec<f64>,
}

impl EnlargedEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || !(-1.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!(
                "enlarged feature {i} = {} outside [-1, 1]",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_labels(labels: &[u8], k: usize) -> Result<()> {
    if !(2..=MAX_BINS).contains(&k) {
        return Err(Error::invalid(format!("bin count k={k} must be in 2..=255")));
    }
    if let Some(i) = labels.iter().position(|&l| l == 0 || usize::from(l) > k) {
        return Err(Error::invalid(format!(
            "label {} at position {i} outside 1..={k}",
            labels[i]
        )));
    }
    Ok(())
}

/// Discretized enlarged embedding; every label is in `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveTemplate {
    labels: Vec<u8>,
    k: usize,
    subject_id: String,
    capture_id: String,
}

impl PositiveTemplate {
    pub fn new(
        labels: Vec<u8>,
        k: usize,
        subject_id: impl Into<String>,
        capture_id: impl Into<String>,
    ) -> Result<Self> {
        check_labels(&labels, k)?;
        Ok(Self {
            labels,
            k,
            subject_id: subject_id.into(),
            capture_id: capture_id.into(),
        })
    }

    /// Template without source ids; handy for tests and theory checks.
    pub fn anonymous(labels: Vec<u8>, k: usize) -> Result<Self> {
        Self::new(labels, k, "", "")
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn capture_id(&self) -> &str {
        &self.capture_id
    }
}

/// Complementary template: stored at rest in place of the positive one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeTemplate {
    labels: Vec<u8>,
    k: usize,
    subject_id: String,
}

impl NegativeTemplate {
    pub fn new(labels: Vec<u8>, k: usize, subject_id: impl Into<String>) -> Result<Self> {
        check_labels(&labels, k)?;
        Ok(Self {
            labels,
            k,
            subject_id: subject_id.into(),
        })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }
}

/// SHA-256 content hash identifying a fitted model or quantizer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(bytes: &[u8]) -> Self {
        Fingerprint(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Checks that all embeddings share one dimension and returns it.
pub fn common_dim(embeddings: &[Embedding]) -> Result<usize> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::insufficient("no embeddings"))?;
    let d = first.dim();
    for e in embeddings {
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                context: format!("embedding {}/{}", e.subject_id, e.capture_id),
                expected: d,
                found: e.dim(),
            });
        }
    }
    Ok(d)
}

/// Distinct subject ids in sorted order.
pub fn distinct_subjects(embeddings: &[Embedding]) -> Vec<String> {
    let mut ids: Vec<String> = embeddings.iter().map(|e| e.subject_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        assert!(matches!(
            Embedding::new("s", "c", vec![0.0, f32::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Embedding::new("s", "c", vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn normalization_is_idempotent() {
        let e = Embedding::new("s", "c", vec![3.0, 4.0, 12.0]).unwrap();
        let once = e.normalized();
        assert!((once.l2_norm() - 1.0).abs() < 1e-6);
        assert_eq!(once.normalized(), once);
        let zero = Embedding::new("s", "c", vec![0.0; 3]).unwrap();
        assert_eq!(zero.normalized(), zero);
    }

    #[test]
    fn template_labels_validated() {
        assert!(PositiveTemplate::anonymous(vec![1, 2, 3], 3).is_ok());
        assert!(PositiveTemplate::anonymous(vec![0, 1], 3).is_err());
        assert!(PositiveTemplate::anonymous(vec![4], 3).is_err());
        assert!(NegativeTemplate::new(vec![1], 1, "s").is_err());
    }

    #[test]
    fn enlarged_range_enforced() {
        assert!(EnlargedEmbedding::new(vec![-1.0, 0.0, 1.0]).is_ok());
        assert!(EnlargedEmbedding::new(vec![1.5]).is_err());
    }
}
