//! Per-feature quantile binning of enlarged embeddings.
//!
//! Edge `m` of a feature is the `m/k` quantile of its training values, using
//! linear interpolation between order statistics. A value maps to
//! `1 + #{edges strictly below it}`, so values equal to an edge take the
//! lower bin. Features that were constant in training always map to label 1.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{EnlargedEmbedding, Fingerprint, PositiveTemplate, MAX_BINS};

pub const QUANTIZER_MAGIC: &[u8; 4] = b"NQNT";
pub const QUANTIZER_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    k: usize,
    edges: Vec<Vec<f64>>,
    constant: Vec<bool>,
    fingerprint: Fingerprint,
}

/// Linear-interpolation quantile of pre-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn feature_edges(column: ArrayView1<f64>, k: usize) -> (Vec<f64>, bool) {
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let constant = sorted.first() == sorted.last();
    let edges = (1..k)
        .map(|m| quantile_sorted(&sorted, m as f64 / k as f64))
        .collect();
    (edges, constant)
}

impl Quantizer {
    /// Fits edges on a sample-by-feature matrix.
    pub fn fit_matrix(train: &Array2<f64>, k: usize) -> Result<Self> {
        if !(2..=MAX_BINS).contains(&k) {
            return Err(Error::invalid(format!("bin count k={k} must be in 2..=255")));
        }
        if train.nrows() == 0 || train.ncols() == 0 {
            return Err(Error::insufficient("empty quantizer training set"));
        }
        if train.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quantizer training data".into()));
        }
        let (edges, constant) = train
            .columns()
            .into_iter()
            .map(|c| feature_edges(c, k))
            .unzip();
        Ok(Self::from_parts(k, edges, constant))
    }

    fn from_parts(k: usize, edges: Vec<Vec<f64>>, constant: Vec<bool>) -> Self {
        let mut q = Quantizer {
            k,
            edges,
            constant,
            fingerprint: Fingerprint::default(),
        };
        q.fingerprint = Fingerprint::of(&q.body_bytes());
        q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of features (the template length `L`).
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self, feature: usize) -> &[f64] {
        &self.edges[feature]
    }

    pub fn is_constant(&self, feature: usize) -> bool {
        self.constant[feature]
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    #[inline]
    pub fn label(&self, feature: usize, value: f64) -> u8 {
        if self.constant[feature] {
            return 1;
        }
        1 + self.edges[feature].partition_point(|&e| e < value) as u8
    }

    pub fn labels(&self, values: &[f64]) -> Result<Vec<u8>> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "discretize".into(),
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(j, &v)| self.label(j, v))
            .collect())
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(QUANTIZER_MAGIC)
            .u16(QUANTIZER_VERSION)
            .u8(self.k as u8)
            .u32(self.edges.len() as u32);
        for (edges, &constant) in self.edges.iter().zip(&self.constant) {
            w.u8(u8::from(constant));
            for &e in edges {
                w.f64(e);
            }
        }
        w.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.body_bytes();
        bytes.extend_from_slice(self.fingerprint.as_bytes());
        bytes
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.expect_magic(QUANTIZER_MAGIC, "NQNT quantizer")?;
        let version = r.header("version", |r| r.u16("version"))?;
        if version != QUANTIZER_VERSION {
            return Err(Error::VersionMismatch {
                format: "NQNT",
                found: version,
                supported: QUANTIZER_VERSION,
            });
        }
        let k = r.header("k", |r| r.u8("k"))? as usize;
        if k < 2 {
            return Err(Error::CorruptedEntry(format!("quantizer k={k}")));
        }
        let len = r.header("feature count", |r| r.u32("L"))? as usize;
        let mut edges = Vec::with_capacity(len.min(1 << 20));
        let mut constant = Vec::with_capacity(len.min(1 << 20));
        for j in 0..len {
            constant.push(r.u8("constant flag")? != 0);
            let mut e = Vec::with_capacity(k - 1);
            for _ in 1..k {
                e.push(r.f64("edge")?);
            }
            if e.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::CorruptedEntry(format!("feature {j}: edges not sorted")));
            }
            edges.push(e);
        }
        let stored = Fingerprint(r.header("fingerprint", |r| r.fixed::<32>("fingerprint"))?);
        if !r.is_empty() {
            return Err(Error::CorruptedEntry("trailing bytes after fingerprint".into()));
        }
        let q = Self::from_parts(k, edges, constant);
        if q.fingerprint != stored {
            return Err(Error::FingerprintMismatch(format!(
                "quantizer content hashes to {}, file records {}",
                q.fingerprint, stored
            )));
        }
        Ok(q)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn fit_quantizer(train: &[EnlargedEmbedding], k: usize) -> Result<Quantizer> {
    let first = train
        .first()
        .ok_or_else(|| Error::insufficient("empty quantizer training set"))?;
    let l = first.len();
    let mut m = Array2::zeros((train.len(), l));
    for (i, v) in train.iter().enumerate() {
        if v.len() != l {
            return Err(Error::DimensionMismatch {
                context: format!("quantizer training vector {i}"),
                expected: l,
                found: v.len(),
            });
        }
        m.row_mut(i).assign(&ArrayView1::from(v.values()));
    }
    Quantizer::fit_matrix(&m, k)
}

pub fn discretize(q: &Quantizer, v: &EnlargedEmbedding) -> Result<PositiveTemplate> {
    PositiveTemplate::anonymous(q.labels(v.values())?, q.k())
}
