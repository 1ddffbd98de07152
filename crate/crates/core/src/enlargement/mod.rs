//! Enlargement networks map a `d`-dimensional embedding to `L` bounded
//! features in `[-1, 1]`.
//!
//! Two constructions are available: a feed-forward network trained as an
//! identity classifier (see [`train_enlargement`]) and a seeded single-layer
//! random projection (see [`random_enlargement`]).

mod train;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{EnlargedEmbedding, Embedding, Fingerprint};

pub use train::{
    train_enlargement, DropoutMasks, Gradients, LayerGradients, TrainedEnlargement,
    TrainingConfig, TrainingModel,
};

pub const NETWORK_MAGIC: &[u8; 4] = b"NENL";
pub const NETWORK_VERSION: u16 = 1;

/// Running-statistics momentum for batch normalization.
pub const NORM_MOMENTUM: f64 = 0.9;
pub const NORM_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            c => Err(Error::CorruptedEntry(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Layer widths of a network; hidden layers use ReLU, the output layer tanh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    /// 128 → 256 → 512 → 4096.
    pub fn paper() -> Self {
        Architecture {
            input_dim: 128,
            hidden: vec![256, 512],
            output_dim: 4096,
        }
    }

    /// Two hidden layers of 2d and 4d units, for small synthetic runs.
    pub fn desk(input_dim: usize, output_dim: usize) -> Self {
        Architecture {
            input_dim,
            hidden: vec![2 * input_dim, 4 * input_dim],
            output_dim,
        }
    }

    pub fn layer_specs(&self) -> Vec<(usize, usize, Activation)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.output_dim);
        let last = widths.len() - 2;
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    Activation::Tanh
                } else {
                    Activation::Relu
                };
                (w[0], w[1], act)
            })
            .collect()
    }
}

/// Per-feature batch normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn identity(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            epsilon: NORM_EPSILON,
        }
    }

    /// Affine map equivalent to normalization with running statistics.
    fn folded(&self) -> (Array1<f64>, Array1<f64>) {
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + self.epsilon).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        (scale, shift)
    }
}

/// Fully connected layer `act(norm(x W + b))`.
///
/// The additive bias is omitted when the layer is normalized; the
/// normalization shift plays that role.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn forward_inference(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights);
        if let Some(b) = &self.bias {
            z += b;
        }
        if let Some(norm) = &self.norm {
            let (scale, shift) = norm.folded();
            z *= &scale;
            z += &shift;
        }
        let act = self.activation;
        z.mapv_inplace(|v| act.apply(v));
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnlargementNetwork {
    layers: Vec<DenseLayer>,
    dropout: f64,
    mode: Mode,
}

impl EnlargementNetwork {
    /// Builds an inference-mode network, validating layer chaining and the
    /// final tanh activation.
    pub fn from_layers(layers: Vec<DenseLayer>, dropout: f64) -> Result<Self> {
        let net = EnlargementNetwork {
            layers,
            dropout,
            mode: Mode::Inference,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::invalid("network has no layers"))?;
        if last.activation != Activation::Tanh {
            return Err(Error::invalid("final layer must use tanh"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::invalid(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            let w = l.fan_out();
            let bias_ok = l.bias.as_ref().is_none_or(|b| b.len() == w);
            let norm_ok = l.norm.as_ref().is_none_or(|n| {
                n.gamma.len() == w
                    && n.beta.len() == w
                    && n.running_mean.len() == w
                    && n.running_var.len() == w
            });
            if !bias_ok || !norm_ok {
                return Err(Error::invalid(format!("layer {i} parameter shapes inconsistent")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub(crate) fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(&self.body_bytes())
    }

    /// Deterministic inference on a batch (one embedding per row).
    pub fn enlarge_matrix(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if self.mode != Mode::Inference {
            return Err(Error::invalid("network is not in inference mode"));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "enlarge".into(),
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = layer.forward_inference(&h);
        }
        Ok(h)
    }

    pub fn enlarge_all<'a, I>(&self, embeddings: I) -> Result<Array2<f64>>
    where
        I: IntoIterator<Item = &'a Embedding>,
    {
        self.enlarge_matrix(&embedding_matrix(embeddings)?)
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(NETWORK_MAGIC)
            .u16(NETWORK_VERSION)
            .u8(match self.mode {
                Mode::Training => 0,
                Mode::Inference => 1,
            })
            .f64(self.dropout)
            .u32(self.layers.len() as u32);
        for l in &self.layers {
            w.u32(l.fan_in() as u32)
                .u32(l.fan_out() as u32)
                .u8(l.activation.code())
                .u8(u8::from(l.bias.is_some()))
                .u8(u8::from(l.norm.is_some()));
            for &v in l.weights.iter() {
                w.f64(v);
            }
            if let Some(b) = &l.bias {
                b.iter().for_each(|&v| {
                    w.f64(v);
                });
            }
            if let Some(n) = &l.norm {
                w.f64(n.epsilon);
                for arr in [&n.gamma, &n.beta, &n.running_mean, &n.running_var] {
                    arr.iter().for_each(|&v| {
                        w.f64(v);
                    });
                }
            }
        }
        w.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.body_bytes();
        bytes.extend_from_slice(self.fingerprint().as_bytes());
        bytes
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.expect_magic(NETWORK_MAGIC, "NENL network")?;
        let version = r.header("version", |r| r.u16("version"))?;
        if version != NETWORK_VERSION {
            return Err(Error::VersionMismatch {
                format: "NENL",
                found: version,
                supported: NETWORK_VERSION,
            });
        }
        let mode = match r.header("mode", |r| r.u8("mode"))? {
            0 => Mode::Training,
            1 => Mode::Inference,
            m => return Err(Error::CorruptedEntry(format!("unknown mode {m}"))),
        };
        let dropout = r.header("dropout", |r| r.f64("dropout"))?;
        let n_layers = r.header("layer count", |r| r.u32("layer count"))? as usize;
        let read_vec = |r: &mut ByteReader, n: usize, what: &str| -> Result<Array1<f64>> {
            (0..n).map(|_| r.f64(what)).collect::<Result<Vec<_>>>().map(Array1::from)
        };
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let fan_in = r.u32("fan_in")? as usize;
            let fan_out = r.u32("fan_out")? as usize;
            let activation = Activation::from_code(r.u8("activation")?)?;
            let has_bias = r.u8("bias flag")? != 0;
            let has_norm = r.u8("norm flag")? != 0;
            if fan_in.saturating_mul(fan_out).saturating_mul(8) > r.remaining() {
                return Err(Error::CorruptedEntry(format!(
                    "layer {fan_in}x{fan_out} exceeds file size"
                )));
            }
            let weights = Array2::from_shape_vec(
                (fan_in, fan_out),
                read_vec(&mut r, fan_in * fan_out, "weights")?.to_vec(),
            )
            .map_err(|e| Error::CorruptedEntry(e.to_string()))?;
            let bias = if has_bias {
                Some(read_vec(&mut r, fan_out, "bias")?)
            } else {
                None
            };
            let norm = if has_norm {
                let epsilon = r.f64("epsilon")?;
                Some(BatchNorm {
                    gamma: read_vec(&mut r, fan_out, "gamma")?,
                    beta: read_vec(&mut r, fan_out, "beta")?,
                    running_mean: read_vec(&mut r, fan_out, "running mean")?,
                    running_var: read_vec(&mut r, fan_out, "running variance")?,
                    epsilon,
                })
            } else {
                None
            };
            layers.push(DenseLayer {
                weights,
                bias,
                norm,
                activation,
            });
        }
        let stored = Fingerprint(r.header("fingerprint", |r| r.fixed::<32>("fingerprint"))?);
        if !r.is_empty() {
            return Err(Error::CorruptedEntry("trailing bytes after fingerprint".into()));
        }
        let mut net = EnlargementNetwork::from_layers(layers, dropout)
            .map_err(|e| Error::CorruptedEntry(e.to_string()))?;
        net.mode = mode;
        if net.fingerprint() != stored {
            return Err(Error::FingerprintMismatch(format!(
                "network content hashes to {}, file records {}",
                net.fingerprint(),
                stored
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Stacks embedding values into a row-per-embedding matrix.
pub fn embedding_matrix<'a, I>(embeddings: I) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let embeddings: Vec<&Embedding> = embeddings.into_iter().collect();
    let d = embeddings.first().map_or(0, |e| e.dim());
    let mut m = Array2::zeros((embeddings.len(), d));
    for (i, e) in embeddings.iter().enumerate() {
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                context: format!("embedding {}/{}", e.subject_id(), e.capture_id()),
                expected: d,
                found: e.dim(),
            });
        }
        for (dst, &v) in m.row_mut(i).iter_mut().zip(e.values()) {
            *dst = f64::from(v);
        }
    }
    Ok(m)
}

pub fn enlarge(net: &EnlargementNetwork, e: &Embedding) -> Result<EnlargedEmbedding> {
    let x = Array2::from_shape_vec(
        (1, e.dim()),
        e.values().iter().map(|&v| f64::from(v)).collect(),
    )
    .expect("row vector shape");
    let out = net.enlarge_matrix(&x)?;
    EnlargedEmbedding::new(out.index_axis(Axis(0), 0).to_vec())
}

/// Single tanh layer with `N(0, 1/d)` weights and no bias.
pub fn random_enlargement(d: usize, l: usize, seed: u64) -> Result<EnlargementNetwork> {
    if d < 1 || l < d {
        return Err(Error::invalid(format!("random enlargement needs L >= d >= 1 (d={d}, L={l})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("valid std");
    let weights = Array2::from_shape_simple_fn((d, l), || normal.sample(&mut rng));
    EnlargementNetwork::from_layers(
        vec![DenseLayer {
            weights,
            bias: None,
            norm: None,
            activation: Activation::Tanh,
        }],
        0.0,
    )
}


#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: &[f32]) -> Embedding {
        Embedding::new("s", "c", values.to_vec()).unwrap()
    }

    #[test]
    fn zero_network_outputs_zeros() {
        let net = EnlargementNetwork::from_layers(
            vec![DenseLayer {
                weights: Array2::zeros((3, 5)),
                bias: Some(Array1::zeros(5)),
                norm: None,
                activation: Activation::Tanh,
            }],
            0.0,
        )
        .unwrap();
        let out = enlarge(&net, &emb(&[0.3, -0.2, 0.9])).unwrap();
        assert_eq!(out.values(), &[0.0; 5]);
    }

    #[test]
    fn random_projection_determinism_and_seed_sensitivity() {
        let a = random_enlargement(4, 16, 7).unwrap();
        let b = random_enlargement(4, 16, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = random_enlargement(4, 16, 8).unwrap();
        let x = emb(&[0.5, -0.5, 0.5, 0.5]);
        let ya = enlarge(&a, &x).unwrap();
        assert_eq!(ya, enlarge(&a, &x).unwrap());
        assert_ne!(ya, enlarge(&c, &x).unwrap());
        assert!(ya.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn random_projection_preconditions() {
        assert!(random_enlargement(0, 4, 1).is_err());
        assert!(random_enlargement(8, 4, 1).is_err());
        let mut net = random_enlargement(1, 1, 1).unwrap();
        net.layers_mut()[0].weights.fill(0.0);
        assert_eq!(enlarge(&net, &emb(&[0.7])).unwrap().values(), &[0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = random_enlargement(4, 8, 1).unwrap();
        assert!(matches!(
            enlarge(&net, &emb(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_tanh_output_and_bad_chaining() {
        let relu = DenseLayer {
            weights: Array2::zeros((2, 3)),
            bias: None,
            norm: None,
            activation: Activation::Relu,
        };
        assert!(EnlargementNetwork::from_layers(vec![relu.clone()], 0.0).is_err());
        let tanh = DenseLayer {
            weights: Array2::zeros((4, 3)),
            activation: Activation::Tanh,
            ..relu.clone()
        };
        assert!(EnlargementNetwork::from_layers(vec![relu, tanh], 0.0).is_err());
    }

    #[test]
    fn serialization_round_trip_with_norm() {
        let mut norm = BatchNorm::identity(3);
        norm.running_mean = Array1::from(vec![0.1, -0.2, 0.3]);
        norm.running_var = Array1::from(vec![1.5, 0.5, 2.0]);
        let net = EnlargementNetwork::from_layers(
            vec![
                DenseLayer {
                    weights: Array2::from_shape_fn((2, 3), |(i, j)| (i + j) as f64 * 0.1),
                    bias: None,
                    norm: Some(norm),
                    activation: Activation::Relu,
                },
                DenseLayer {
                    weights: Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - j as f64) * 0.2),
                    bias: Some(Array1::from(vec![0.0, 0.1, 0.2, 0.3])),
                    norm: None,
                    activation: Activation::Tanh,
                },
            ],
            0.5,
        )
        .unwrap();
        let bytes = net.to_bytes();
        let back = EnlargementNetwork::from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        let mut tampered = bytes;
        let n = tampered.len();
        tampered[n - 40] ^= 0x10;
        assert!(EnlargementNetwork::from_bytes(&tampered).is_err());
    }

    #[test]
    fn paper_architecture() {
        let specs = Architecture::paper().layer_specs();
        assert_eq!(
            specs,
            vec![
                (128, 256, Activation::Relu),
                (256, 512, Activation::Relu),
                (512, 4096, Activation::Tanh)
            ]
        );
    }
}
