//! Multinomial logistic regression on standardized features, fit by
//! full-batch gradient descent with an L2 penalty.

use ndarray::{Array1, Array2, Axis};

use super::{AttackDataset, Attacker, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Stops once the gradient's max-norm falls below this.
    pub tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-2,
            learning_rate: 0.5,
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogRegModel {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub fn train_logreg(data: &AttackDataset, config: &LogRegConfig) -> Result<LogRegModel> {
    if data.is_empty() {
        return Err(Error::insufficient("empty training set"));
    }
    if data.present_classes().len() < 2 {
        return Err(Error::insufficient("logistic regression needs >= 2 classes"));
    }
    if !(config.learning_rate > 0.0 && config.l2 >= 0.0) {
        return Err(Error::invalid("learning rate must be > 0 and L2 >= 0"));
    }
    let x = data.matrix();
    let (n, d) = x.dim();
    let c = data.class_count();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x.std_axis(Axis(0), 0.0);
    let scale = std.mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
    let xs = (&x - &mean) * &scale;

    let mut target = Array2::<f64>::zeros((n, c));
    for (i, &y) in data.labels().iter().enumerate() {
        target[[i, y]] = 1.0;
    }
    let mut weights = Array2::<f64>::zeros((d, c));
    let mut bias = Array1::<f64>::zeros(c);
    for _ in 0..config.max_iter {
        let mut p = xs.dot(&weights) + &bias;
        softmax_rows(&mut p);
        let g = (p - &target) / n as f64;
        let grad_w = xs.t().dot(&g) + &weights * config.l2;
        let grad_b = g.sum_axis(Axis(0));
        let largest = grad_w
            .iter()
            .chain(grad_b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        weights.scaled_add(-config.learning_rate, &grad_w);
        bias.scaled_add(-config.learning_rate, &grad_b);
        if largest < config.tolerance {
            break;
        }
    }
    Ok(LogRegModel {
        mean,
        scale,
        weights,
        bias,
    })
}

impl LogRegModel {
    pub fn decision(&self, features: &[f32]) -> Array1<f64> {
        let x: Array1<f64> = features.iter().map(|&v| f64::from(v)).collect();
        let xs = (x - &self.mean) * &self.scale;
        xs.dot(&self.weights) + &self.bias
    }
}

impl Classifier for LogRegModel {
    fn predict(&self, features: &[f32]) -> usize {
        let scores = self.decision(features);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Default)]
pub struct LogRegAttacker {
    pub config: LogRegConfig,
}

impl Attacker for LogRegAttacker {
    fn name(&self) -> String {
        "logreg".into()
    }

    fn fit(&self, data: &AttackDataset) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(train_logreg(data, &self.config)?))
    }
}
