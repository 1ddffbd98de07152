//! Brute-force Euclidean k-nearest-neighbour voting.

use super::{AttackDataset, Attacker, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KnnModel {
    features: Vec<Vec<f32>>,
    labels: Vec<usize>,
    classes: usize,
    n_neighbors: usize,
}

pub fn train_knn(data: &AttackDataset, n_neighbors: usize) -> Result<KnnModel> {
    if data.is_empty() {
        return Err(Error::insufficient("empty training set"));
    }
    if n_neighbors == 0 || n_neighbors > data.len() {
        return Err(Error::invalid(format!(
            "n_neighbors {n_neighbors} outside 1..={}",
            data.len()
        )));
    }
    Ok(KnnModel {
        features: data.features().to_vec(),
        labels: data.labels().to_vec(),
        classes: data.class_count(),
        n_neighbors,
    })
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

impl Classifier for KnnModel {
    /// Majority label among the nearest neighbours; ties go to the label
    /// with the smallest summed distance, then to the smallest label.
    fn predict(&self, features: &[f32]) -> usize {
        let mut dist: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (squared_distance(features, f), i))
            .collect();
        // (distance, index) is a total order, so neighbour choice is deterministic.
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.classes];
        let mut summed = vec![0.0f64; self.classes];
        for &(d, i) in &dist[..self.n_neighbors] {
            votes[self.labels[i]] += 1;
            summed[self.labels[i]] += d.sqrt();
        }
        let mut best = 0;
        for c in 1..self.classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] < summed[best]) {
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct KnnAttacker {
    pub n_neighbors: usize,
}

impl Default for KnnAttacker {
    fn default() -> Self {
        KnnAttacker { n_neighbors: 5 }
    }
}

impl Attacker for KnnAttacker {
    fn name(&self) -> String {
        format!("knn{}", self.n_neighbors)
    }

    fn fit(&self, data: &AttackDataset) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(train_knn(data, self.n_neighbors)?))
    }
}
