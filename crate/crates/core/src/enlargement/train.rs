//! Identity-classification training of the enlargement network.
//!
//! A softmax head over the training identities is stacked on the network and
//! the whole stack is trained with categorical cross-entropy and AdaDelta.
//! Every layer applies batch normalization (optional) before its activation
//! and inverted dropout after it. The head is dropped once training ends.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    embedding_matrix, Activation, Architecture, BatchNorm, DenseLayer, EnlargementNetwork, Mode,
    NORM_MOMENTUM,
};
use crate::error::{Error, Result};
use crate::model::Embedding;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub batch_norm: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 50,
            learning_rate: 0.5,
            rho: 0.95,
            epsilon: 1e-6,
            dropout: 0.5,
            batch_size: 64,
            batch_norm: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.rho) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("AdaDelta needs lr > 0, 0 <= rho < 1, epsilon > 0"));
        }
        Ok(())
    }
}

/// Dropout keep-masks per layer, pre-scaled by `1 / (1 - p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    masks: Vec<Array2<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(widths: &[usize], batch: usize, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - p);
        let masks = widths
            .iter()
            .map(|&w| {
                Array2::from_shape_simple_fn((batch, w), || {
                    if p > 0.0 && rng.random::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                })
            })
            .collect();
        DropoutMasks { masks }
    }

    pub fn none(widths: &[usize], batch: usize) -> Self {
        DropoutMasks {
            masks: widths.iter().map(|&w| Array2::ones((batch, w))).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl Gradients {
    /// Flat views in the same order as [`TrainingModel::parameters_mut`].
    pub fn as_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("contiguous"));
            for a in [&l.bias, &l.gamma, &l.beta].into_iter().flatten() {
                out.push(a.as_slice().expect("contiguous"));
            }
        }
        out.push(self.head_weights.as_slice().expect("contiguous"));
        out.push(self.head_bias.as_slice().expect("contiguous"));
        out
    }
}

struct LayerCache {
    input: Array2<f64>,
    normalized: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
    activated: Array2<f64>,
}

/// Network plus softmax classification head, in training mode.
#[derive(Debug, Clone)]
pub struct TrainingModel {
    network: EnlargementNetwork,
    head_weights: Array2<f64>,
    head_bias: Array1<f64>,
}

fn init_weights(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, act: Activation) -> Array2<f64> {
    let var = match act {
        Activation::Relu => 2.0 / fan_in as f64,
        Activation::Tanh => 2.0 / (fan_in + fan_out) as f64,
    };
    let normal = Normal::new(0.0, var.sqrt()).expect("valid std");
    Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(rng))
}

impl TrainingModel {
    pub fn new(
        architecture: &Architecture,
        classes: usize,
        batch_norm: bool,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::insufficient("identity classifier needs >= 2 classes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = architecture
            .layer_specs()
            .into_iter()
            .map(|(fan_in, fan_out, activation)| DenseLayer {
                weights: init_weights(&mut rng, fan_in, fan_out, activation),
                bias: (!batch_norm).then(|| Array1::zeros(fan_out)),
                norm: batch_norm.then(|| BatchNorm::identity(fan_out)),
                activation,
            })
            .collect();
        let mut network = EnlargementNetwork::from_layers(layers, dropout)?;
        network.set_mode(Mode::Training);
        let l = architecture.output_dim;
        Ok(TrainingModel {
            network,
            head_weights: init_weights(&mut rng, l, classes, Activation::Tanh),
            head_bias: Array1::zeros(classes),
        })
    }

    pub fn network(&self) -> &EnlargementNetwork {
        &self.network
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.network.layers().iter().map(DenseLayer::fan_out).collect()
    }

    pub fn classes(&self) -> usize {
        self.head_bias.len()
    }

    /// Mutable flat views over every trainable parameter.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.network.layers_mut() {
            out.push(l.weights.as_slice_mut().expect("contiguous"));
            if let Some(b) = l.bias.as_mut() {
                out.push(b.as_slice_mut().expect("contiguous"));
            }
            if let Some(n) = l.norm.as_mut() {
                out.push(n.gamma.as_slice_mut().expect("contiguous"));
                out.push(n.beta.as_slice_mut().expect("contiguous"));
            }
        }
        out.push(self.head_weights.as_slice_mut().expect("contiguous"));
        out.push(self.head_bias.as_slice_mut().expect("contiguous"));
        out
    }

    /// Returns per-layer caches, the final hidden output and the logits.
    fn forward(
        &self,
        x: &Array2<f64>,
        masks: &DropoutMasks,
    ) -> (Vec<LayerCache>, Array2<f64>, Array2<f64>) {
        let mut caches = Vec::with_capacity(self.network.layers().len());
        let mut h = x.to_owned();
        for (layer, mask) in self.network.layers().iter().zip(&masks.masks) {
            let mut z = h.dot(&layer.weights);
            if let Some(b) = &layer.bias {
                z += b;
            }
            let (mut normalized, mut inv_std, mut batch_mean, mut batch_var) = (None, None, None, None);
            if let Some(norm) = &layer.norm {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = &z - &mean;
                let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                let istd = var.mapv(|v| 1.0 / (v + norm.epsilon).sqrt());
                let xhat = &centered * &istd;
                z = &xhat * &norm.gamma + &norm.beta;
                normalized = Some(xhat);
                inv_std = Some(istd);
                batch_mean = Some(mean);
                batch_var = Some(var);
            }
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            let out = &z * mask;
            caches.push(LayerCache {
                input: h,
                normalized,
                inv_std,
                batch_mean,
                batch_var,
                activated: z,
            });
            h = out;
        }
        let logits = h.dot(&self.head_weights) + &self.head_bias;
        (caches, h, logits)
    }

    /// Mean cross-entropy over the batch, using batch statistics and the
    /// given dropout masks.
    pub fn loss(&self, x: &Array2<f64>, labels: &[usize], masks: &DropoutMasks) -> f64 {
        let (_, _, logits) = self.forward(x, masks);
        cross_entropy(&logits, labels).0
    }

    pub fn loss_and_gradients(
        &self,
        x: &Array2<f64>,
        labels: &[usize],
        masks: &DropoutMasks,
    ) -> (f64, Gradients) {
        let (loss, grads, _) = self.backprop(x, labels, masks);
        (loss, grads)
    }

    #[allow(clippy::type_complexity)]
    fn backprop(
        &self,
        x: &Array2<f64>,
        labels: &[usize],
        masks: &DropoutMasks,
    ) -> (f64, Gradients, Vec<(Option<Array1<f64>>, Option<Array1<f64>>)>) {
        let (caches, last, logits) = self.forward(x, masks);
        let (loss, d_logits) = cross_entropy(&logits, labels);

        let head_weights = last.t().dot(&d_logits);
        let head_bias = d_logits.sum_axis(Axis(0));
        let mut d_out = d_logits.dot(&self.head_weights.t());

        let n = x.nrows() as f64;
        let mut layer_grads = Vec::with_capacity(caches.len());
        let mut stats = Vec::with_capacity(caches.len());
        for ((layer, cache), mask) in self
            .network
            .layers()
            .iter()
            .zip(&caches)
            .zip(&masks.masks)
            .rev()
        {
            let mut d_pre = d_out * mask;
            match layer.activation {
                Activation::Relu => Zip::from(&mut d_pre)
                    .and(&cache.activated)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    }),
                Activation::Tanh => Zip::from(&mut d_pre)
                    .and(&cache.activated)
                    .for_each(|d, &a| *d *= 1.0 - a * a),
            }
            let (d_z, gamma, beta) = match (&layer.norm, &cache.normalized, &cache.inv_std) {
                (Some(norm), Some(xhat), Some(istd)) => {
                    let d_gamma = (&d_pre * xhat).sum_axis(Axis(0));
                    let d_beta = d_pre.sum_axis(Axis(0));
                    let d_xhat = &d_pre * &norm.gamma;
                    let sum_dx = d_xhat.sum_axis(Axis(0));
                    let sum_dx_xhat = (&d_xhat * xhat).sum_axis(Axis(0));
                    let d_z = (&(&d_xhat * n - &sum_dx) - &(xhat * &sum_dx_xhat)) * &(istd / n);
                    (d_z, Some(d_gamma), Some(d_beta))
                }
                _ => (d_pre, None, None),
            };
            let weights = cache.input.t().dot(&d_z);
            let bias = layer.bias.as_ref().map(|_| d_z.sum_axis(Axis(0)));
            d_out = d_z.dot(&layer.weights.t());
            layer_grads.push(LayerGradients {
                weights,
                bias,
                gamma,
                beta,
            });
            stats.push((cache.batch_mean.clone(), cache.batch_var.clone()));
        }
        layer_grads.reverse();
        stats.reverse();
        (
            loss,
            Gradients {
                layers: layer_grads,
                head_weights,
                head_bias,
            },
            stats,
        )
    }

    fn update_running_stats(&mut self, stats: Vec<(Option<Array1<f64>>, Option<Array1<f64>>)>) {
        for (layer, (mean, var)) in self.network.layers_mut().iter_mut().zip(stats) {
            if let (Some(norm), Some(mean), Some(var)) = (layer.norm.as_mut(), mean, var) {
                norm.running_mean = &norm.running_mean * NORM_MOMENTUM + &mean * (1.0 - NORM_MOMENTUM);
                norm.running_var = &norm.running_var * NORM_MOMENTUM + &var * (1.0 - NORM_MOMENTUM);
            }
        }
    }

    /// Drops the classification head and switches to inference mode.
    pub fn into_network(self) -> EnlargementNetwork {
        let mut net = self.network;
        net.set_mode(Mode::Inference);
        net
    }
}

/// Mean categorical cross-entropy and its gradient w.r.t. the logits.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut grad = logits.to_owned();
    let mut loss = 0.0;
    for (mut row, &y) in grad.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss -= (row[y] / sum).ln();
        row.mapv_inplace(|v| v / sum / n);
        row[y] -= 1.0 / n;
    }
    (loss / n, grad)
}

struct AdaDelta {
    rho: f64,
    epsilon: f64,
    learning_rate: f64,
    grad_sq: Vec<Vec<f64>>,
    delta_sq: Vec<Vec<f64>>,
}

impl AdaDelta {
    fn new(model: &mut TrainingModel, config: &TrainingConfig) -> Self {
        let shapes: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
        AdaDelta {
            rho: config.rho,
            epsilon: config.epsilon,
            learning_rate: config.learning_rate,
            grad_sq: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            delta_sq: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn step(&mut self, model: &mut TrainingModel, grads: &Gradients) {
        let (rho, eps, lr) = (self.rho, self.epsilon, self.learning_rate);
        for (((param, grad), gsq), dsq) in model
            .parameters_mut()
            .into_iter()
            .zip(grads.as_slices())
            .zip(&mut self.grad_sq)
            .zip(&mut self.delta_sq)
        {
            for i in 0..param.len() {
                let g = grad[i];
                gsq[i] = rho * gsq[i] + (1.0 - rho) * g * g;
                let delta = ((dsq[i] + eps).sqrt() / (gsq[i] + eps).sqrt()) * g;
                dsq[i] = rho * dsq[i] + (1.0 - rho) * delta * delta;
                param[i] -= lr * delta;
            }
        }
    }
}

/// A trained network with its per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainedEnlargement {
    pub network: EnlargementNetwork,
    pub loss_history: Vec<f64>,
    pub classes: Vec<String>,
}

/// Trains an enlargement network as an identity classifier over the
/// subjects present in `train`, then removes the classification head.
pub fn train_enlargement(
    train: &[&Embedding],
    architecture: &Architecture,
    config: &TrainingConfig,
) -> Result<TrainedEnlargement> {
    config.validate()?;
    let x = embedding_matrix(train.iter().copied())?;
    if x.ncols() != architecture.input_dim {
        return Err(Error::DimensionMismatch {
            context: "enlargement training input".into(),
            expected: architecture.input_dim,
            found: x.ncols(),
        });
    }
    let mut class_index: BTreeMap<&str, usize> = BTreeMap::new();
    for e in train {
        let next = class_index.len();
        class_index.entry(e.subject_id()).or_insert(next);
    }
    if class_index.len() < 2 {
        return Err(Error::insufficient(format!(
            "enlargement training needs >= 2 subjects, found {}",
            class_index.len()
        )));
    }
    // Stable class order: sorted subject ids.
    let classes: Vec<String> = class_index.keys().map(|s| s.to_string()).collect();
    let order: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels: Vec<usize> = train.iter().map(|e| order[e.subject_id()]).collect();

    let mut model = TrainingModel::new(
        architecture,
        classes.len(),
        config.batch_norm,
        config.dropout,
        config.seed,
    )?;
    let widths = model.layer_widths();
    let mut optimizer = AdaDelta::new(&mut model, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_da7a);
    let mut indices: Vec<usize> = (0..x.nrows()).collect();
    let min_batch = if config.batch_norm { 2 } else { 1 };

    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in indices.chunks(config.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let masks = DropoutMasks::sample(&widths, chunk.len(), config.dropout, &mut rng);
            let (loss, grads, stats) = model.backprop(&xb, &yb, &masks);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            optimizer.step(&mut model, &grads);
            model.update_running_stats(stats);
            total += loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::insufficient("no training batch of usable size"));
        }
        let mean = total / batches as f64;
        log::debug!("enlargement epoch {epoch}: loss {mean:.5}");
        loss_history.push(mean);
    }

    Ok(TrainedEnlargement {
        network: model.into_network(),
        loss_history,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enlargement::enlarge;

    fn two_clusters(per: usize, d: usize, seed: u64) -> Vec<Embedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.3).unwrap();
        (0..2 * per)
            .map(|i| {
                let s = i % 2;
                let values = (0..d)
                    .map(|j| {
                        let center = if j % 2 == s { 2.0 } else { -2.0 };
                        (center + normal.sample(&mut rng)) as f32
                    })
                    .collect();
                Embedding::new(format!("s{s}"), format!("c{i}"), values).unwrap()
            })
            .collect()
    }

    #[test]
    fn loss_decreases_on_two_clusters() {
        let data = two_clusters(20, 16, 3);
        let refs: Vec<&Embedding> = data.iter().collect();
        let config = TrainingConfig {
            epochs: 20,
            batch_size: 8,
            seed: 5,
            ..TrainingConfig::default()
        };
        let trained = train_enlargement(&refs, &Architecture::desk(16, 64), &config).unwrap();
        assert_eq!(trained.loss_history.len(), 20);
        let first = trained.loss_history[0];
        let last = *trained.loss_history.last().unwrap();
        assert!(last < first, "{first} -> {last}");
        assert_eq!(trained.network.mode(), Mode::Inference);
        assert_eq!(trained.network.output_dim(), 64);
        let out = enlarge(&trained.network, &data[0]).unwrap();
        assert!(out.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn training_is_deterministic() {
        let data = two_clusters(6, 4, 1);
        let refs: Vec<&Embedding> = data.iter().collect();
        let config = TrainingConfig {
            epochs: 3,
            batch_size: 4,
            seed: 11,
            ..TrainingConfig::default()
        };
        let a = train_enlargement(&refs, &Architecture::desk(4, 8), &config).unwrap();
        let b = train_enlargement(&refs, &Architecture::desk(4, 8), &config).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn precondition_errors() {
        let data = two_clusters(3, 4, 1);
        let refs: Vec<&Embedding> = data.iter().collect();
        let zero_epochs = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(matches!(
            train_enlargement(&refs, &Architecture::desk(4, 8), &zero_epochs),
            Err(Error::InvalidParameter(_))
        ));
        let single: Vec<&Embedding> = data.iter().filter(|e| e.subject_id() == "s0").collect();
        assert!(matches!(
            train_enlargement(&single, &Architecture::desk(4, 8), &TrainingConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let data = two_clusters(4, 4, 2);
        let refs: Vec<&Embedding> = data.iter().collect();
        let config = TrainingConfig {
            epochs: 5,
            learning_rate: f64::MAX,
            dropout: 0.0,
            batch_norm: false,
            ..TrainingConfig::default()
        };
        match train_enlargement(&refs, &Architecture::desk(4, 8), &config) {
            Err(Error::NonFiniteLoss { epoch }) => assert!(epoch < 5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
