//! Function-creep attack harness: attribute classifiers trained on original
//! embeddings, positive templates or negative templates.

mod knn;
mod logreg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use knn::{train_knn, KnnAttacker, KnnModel};
pub use logreg::{train_logreg, LogRegAttacker, LogRegConfig, LogRegModel};

use crate::codec::negate;
use crate::error::{Error, Result};
use crate::folds::DatasetSplit;
use crate::io::{save_embeddings, EmbeddingFormat};
use crate::model::Embedding;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::rng::{derive_seed, RandomSource};

pub trait Classifier: Send + Sync {
    fn predict(&self, features: &[f32]) -> usize;

    fn predict_all(&self, data: &AttackDataset) -> Vec<usize> {
        data.features().iter().map(|f| self.predict(f)).collect()
    }
}

/// A trainable attribute estimator.
pub trait Attacker: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, data: &AttackDataset) -> Result<Box<dyn Classifier>>;
}

/// The built-in attackers: logistic regression and 5-NN.
pub fn default_attackers() -> Vec<Box<dyn Attacker>> {
    vec![Box::new(LogRegAttacker::default()), Box::new(KnnAttacker::default())]
}

/// Unit-normalized feature vectors with categorical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackDataset {
    features: Vec<Vec<f32>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    subject_ids: Vec<String>,
    capture_ids: Vec<String>,
}

fn unit(values: &[f64]) -> Vec<f32> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter().map(|v| (v / norm) as f32).collect()
    } else {
        values.iter().map(|&v| v as f32).collect()
    }
}

impl AttackDataset {
    /// Normalizes every feature vector to unit length; class indices follow
    /// the sorted label names.
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
        subject_ids: Vec<String>,
        capture_ids: Vec<String>,
    ) -> Result<Self> {
        let class_names: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::with_classes(features, labels, subject_ids, capture_ids, class_names)
    }

    /// Like [`AttackDataset::new`] with a fixed class list, which may include
    /// classes absent from `labels`.
    pub fn with_classes(
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
        subject_ids: Vec<String>,
        capture_ids: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.len();
        for (what, len) in [("labels", labels.len()), ("subject ids", subject_ids.len()), ("capture ids", capture_ids.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context: format!("attack dataset {what}"),
                    expected: n,
                    found: len,
                });
            }
        }
        if let Some(first) = features.first() {
            for f in &features {
                if f.len() != first.len() {
                    return Err(Error::DimensionMismatch {
                        context: "attack feature vector".into(),
                        expected: first.len(),
                        found: f.len(),
                    });
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("attack feature vector".into()));
                }
            }
        }
        let index: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let labels = labels
            .iter()
            .map(|l| {
                index
                    .get(l.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("label {l} not among the classes")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AttackDataset {
            features: features.iter().map(|f| unit(f)).collect(),
            labels,
            class_names,
            subject_ids,
            capture_ids,
        })
    }

    /// Raw embeddings labelled by `attribute`.
    pub fn from_embeddings(embeddings: &[Embedding], attribute: &str) -> Result<Self> {
        let labels = attribute_labels(embeddings.iter(), attribute)?;
        Self::new(
            embeddings
                .iter()
                .map(|e| e.values().iter().map(|&v| f64::from(v)).collect())
                .collect(),
            labels,
            embeddings.iter().map(|e| e.subject_id().to_string()).collect(),
            embeddings.iter().map(|e| e.capture_id().to_string()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f32>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn capture_ids(&self) -> &[String] {
        &self.capture_ids
    }

    pub fn present_classes(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }

    pub fn matrix(&self) -> Array2<f64> {
        let d = self.features.first().map_or(0, Vec::len);
        Array2::from_shape_fn((self.len(), d), |(i, j)| f64::from(self.features[i][j]))
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        AttackDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            subject_ids: indices.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            capture_ids: indices.iter().map(|&i| self.capture_ids[i].clone()).collect(),
        }
    }

    /// Seeded class-stratified downsampling to the smallest class count.
    pub fn balanced(&self, seed: u64) -> Result<Self> {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.class_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let per_class = by_class.iter().map(Vec::len).min().unwrap_or(0);
        if per_class == 0 {
            return Err(Error::insufficient("a class has no samples to balance"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::with_capacity(per_class * by_class.len());
        for mut members in by_class {
            members.shuffle(&mut rng);
            keep.extend_from_slice(&members[..per_class]);
        }
        keep.sort_unstable();
        Ok(self.subset(&keep))
    }

    /// Embeddings carrying the normalized features and the label as the
    /// attribute `attribute`.
    pub fn to_embeddings(&self, attribute: &str) -> Result<Vec<Embedding>> {
        (0..self.len())
            .map(|i| {
                Ok(Embedding::new(
                    self.subject_ids[i].clone(),
                    self.capture_ids[i].clone(),
                    self.features[i].clone(),
                )?
                .with_attribute(attribute, self.class_names[self.labels[i]].clone()))
            })
            .collect()
    }
}

fn attribute_labels<'a>(embeddings: impl Iterator<Item = &'a Embedding>, attribute: &str) -> Result<Vec<String>> {
    embeddings
        .map(|e| {
            e.attribute(attribute).map(str::to_string).ok_or_else(|| {
                Error::invalid(format!(
                    "embedding {}/{} lacks attribute {attribute}",
                    e.subject_id(),
                    e.capture_id()
                ))
            })
        })
        .collect()
}

/// Writes the dataset in the embedding CSV dialect.
pub fn export_attack_dataset(data: &AttackDataset, attribute: &str, path: &Path) -> Result<()> {
    save_embeddings(path, &data.to_embeddings(attribute)?, EmbeddingFormat::Csv)
}

/// Mean per-class recall over classes `0..classes`.
pub fn balanced_accuracy(predictions: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs truth".into(),
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if t >= classes {
            return Err(Error::invalid(format!("label {t} outside {classes} classes")));
        }
        totals[t] += 1;
        hits[t] += usize::from(p == t);
    }
    if let Some(c) = totals.iter().position(|&n| n == 0) {
        return Err(Error::insufficient(format!("class {c} absent from truth")));
    }
    Ok(hits.iter().zip(&totals).map(|(&h, &n)| h as f64 / n as f64).sum::<f64>() / classes as f64)
}

/// Relative accuracy reduction `(unprotected - protected) / unprotected`.
pub fn suppression_rate(unprotected: f64, protected: f64) -> Result<f64> {
    if !(unprotected > 0.0 && unprotected <= 1.0) || !(0.0..=1.0).contains(&protected) {
        return Err(Error::invalid(format!(
            "accuracies must satisfy 0 < unprotected <= 1 and 0 <= protected <= 1 (got {unprotected}, {protected})"
        )));
    }
    Ok((unprotected - protected) / unprotected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Representation {
    Original,
    Positive,
    Negative,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Self::Original, Self::Positive, Self::Negative];

    pub fn name(self) -> &'static str {
        match self {
            Self::Original => "original",
            Self::Positive => "positive",
            Self::Negative => "negative",
        }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-fold balanced accuracies of one attacker on each representation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerResult {
    pub attacker: String,
    pub accuracies: BTreeMap<Representation, Vec<f64>>,
}

impl AttackerResult {
    pub fn mean_std(&self, representation: Representation) -> (f64, f64) {
        mean_std(&self.accuracies[&representation])
    }

    /// Suppression of the negative templates relative to `baseline`.
    pub fn suppression(&self, baseline: Representation) -> Result<f64> {
        suppression_rate(
            self.mean_std(baseline).0,
            self.mean_std(Representation::Negative).0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attribute: String,
    pub classes: Vec<String>,
    pub folds: usize,
    pub results: Vec<AttackerResult>,
}

impl AttackReport {
    pub fn result(&self, attacker: &str) -> Option<&AttackerResult> {
        self.results.iter().find(|r| r.attacker == attacker)
    }

    /// One row per attacker: accuracies, suppression rates and absolute deltas.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "attacker,original_mean,original_std,positive_mean,positive_std,negative_mean,negative_std,\
             suppression_vs_positive,suppression_vs_original,delta_vs_positive,delta_vs_original\n",
        );
        for r in &self.results {
            let (om, os) = r.mean_std(Representation::Original);
            let (pm, ps) = r.mean_std(Representation::Positive);
            let (nm, ns) = r.mean_std(Representation::Negative);
            let sp = r.suppression(Representation::Positive).unwrap_or(f64::NAN);
            let so = r.suppression(Representation::Original).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "{},{om},{os},{pm},{ps},{nm},{ns},{sp},{so},{},{}",
                r.attacker,
                pm - nm,
                om - nm
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "attribute {} ({} classes, {} folds)\n{:<10} {:>15} {:>15} {:>15} {:>12}\n",
            self.attribute,
            self.classes.len(),
            self.folds,
            "attacker",
            "original",
            "positive",
            "negative",
            "suppression"
        );
        for r in &self.results {
            let cell = |rep| {
                let (m, sd) = r.mean_std(rep);
                format!("{m:.3} ± {sd:.3}")
            };
            let _ = writeln!(
                s,
                "{:<10} {:>15} {:>15} {:>15} {:>12.3}",
                r.attacker,
                cell(Representation::Original),
                cell(Representation::Positive),
                cell(Representation::Negative),
                r.suppression(Representation::Positive).unwrap_or(f64::NAN)
            );
        }
        s
    }
}

/// Original, positive and negative representations of `embeddings` under a
/// fitted pipeline. Negations are seeded per embedding position.
pub fn representations(
    embeddings: &[&Embedding],
    pipeline: &Pipeline,
    attribute: &str,
    classes: &[String],
    seed: u64,
) -> Result<BTreeMap<Representation, AttackDataset>> {
    let labels = attribute_labels(embeddings.iter().copied(), attribute)?;
    let subjects: Vec<String> = embeddings.iter().map(|e| e.subject_id().to_string()).collect();
    let captures: Vec<String> = embeddings.iter().map(|e| e.capture_id().to_string()).collect();
    let positives = pipeline.positive_templates(embeddings)?;
    let negatives = positives
        .iter()
        .enumerate()
        .map(|(i, t)| negate(t, &mut RandomSource::seeded_stream(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let features = [
        (
            Representation::Original,
            embeddings.iter().map(|e| e.values().iter().map(|&v| f64::from(v)).collect()).collect(),
        ),
        (
            Representation::Positive,
            positives.iter().map(|t| t.labels().iter().map(|&l| f64::from(l)).collect()).collect(),
        ),
        (
            Representation::Negative,
            negatives.iter().map(|t| t.labels().iter().map(|&l| f64::from(l)).collect()).collect(),
        ),
    ];
    features
        .into_iter()
        .map(|(rep, f): (Representation, Vec<Vec<f64>>)| {
            let data = AttackDataset::with_classes(f, labels.clone(), subjects.clone(), captures.clone(), classes.to_vec())?;
            Ok((rep, data))
        })
        .collect()
}

/// Distinct values of `attribute`, sorted; errors if any embedding lacks it.
pub fn attribute_classes(embeddings: &[Embedding], attribute: &str) -> Result<Vec<String>> {
    Ok(attribute_labels(embeddings.iter(), attribute)?
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect())
}

fn fold_datasets(
    embeddings: &[Embedding],
    config: &PipelineConfig,
    attribute: &str,
    split: &DatasetSplit,
    fold: usize,
    classes: &[String],
    seed: u64,
) -> Result<BTreeMap<Representation, (AttackDataset, AttackDataset)>> {
    let (train, test) = split.partition(embeddings, fold);
    if train.is_empty() || test.is_empty() {
        return Err(Error::insufficient(format!("fold {fold} has an empty side")));
    }
    let pipeline = Pipeline::fit(&train, config)?.pipeline;
    let all: Vec<&Embedding> = train.iter().chain(&test).copied().collect();
    let sets = representations(&all, &pipeline, attribute, classes, derive_seed(seed, "attack-negation", fold as u64))?;
    let train_idx: Vec<usize> = (0..train.len()).collect();
    let test_idx: Vec<usize> = (train.len()..all.len()).collect();
    let balance_seed = derive_seed(seed, "attack-balance", fold as u64);
    let mut out = BTreeMap::new();
    for (rep, data) in sets {
        let train_set = data.subset(&train_idx);
        let test_set = data.subset(&test_idx).balanced(balance_seed).map_err(|_| {
            Error::insufficient(format!("test fold {fold} lacks samples of some {attribute} class"))
        })?;
        if train_set.present_classes().len() < 2 {
            return Err(Error::insufficient(format!("training side of fold {fold} has < 2 classes")));
        }
        out.insert(rep, (train_set, test_set));
    }
    Ok(out)
}

/// Runs every attacker on every representation of every fold. For each fold
/// the pipeline is fit on the training subjects only, and test accuracy is
/// measured on class-balanced test samples.
pub fn run_attack(
    embeddings: &[Embedding],
    config: &PipelineConfig,
    attribute: &str,
    split: &DatasetSplit,
    attackers: &[Box<dyn Attacker>],
    seed: u64,
) -> Result<AttackReport> {
    if attackers.is_empty() {
        return Err(Error::invalid("no attackers given"));
    }
    let classes = attribute_classes(embeddings, attribute)?;
    if classes.len() < 2 {
        return Err(Error::insufficient(format!("attribute {attribute} has < 2 classes")));
    }
    let per_fold: Vec<Vec<BTreeMap<Representation, f64>>> = (0..split.fold_count())
        .into_par_iter()
        .map(|fold| {
            let sets = fold_datasets(embeddings, config, attribute, split, fold, &classes, seed)?;
            attackers
                .iter()
                .map(|attacker| {
                    sets.iter()
                        .map(|(&rep, (train, test))| {
                            let model = attacker.fit(train)?;
                            let acc = balanced_accuracy(&model.predict_all(test), test.labels(), classes.len())?;
                            Ok((rep, acc))
                        })
                        .collect::<Result<BTreeMap<_, _>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let results = attackers
        .iter()
        .enumerate()
        .map(|(a, attacker)| AttackerResult {
            attacker: attacker.name(),
            accuracies: Representation::ALL
                .iter()
                .map(|&rep| (rep, per_fold.iter().map(|f| f[a][&rep]).collect()))
                .collect(),
        })
        .collect();
    Ok(AttackReport {
        attribute: attribute.to_string(),
        classes,
        folds: split.fold_count(),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, separation: f64, seed: u64) -> AttackDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let centre = if class == 0 { -separation / 2.0 } else { separation / 2.0 };
            // offset keeps both blobs away from the origin before normalization
            features.push(vec![centre + noise.sample(&mut rng), 20.0 + noise.sample(&mut rng)]);
            labels.push(class.to_string());
        }
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        AttackDataset::new(features, labels, ids.clone(), ids).unwrap()
    }

    fn held_out_accuracy(attacker: &dyn Attacker, train: &AttackDataset, test: &AttackDataset) -> f64 {
        let model = attacker.fit(train).unwrap();
        balanced_accuracy(&model.predict_all(test), test.labels(), test.class_count()).unwrap()
    }

    #[test]
    fn balanced_accuracy_arithmetic() {
        let truth = [0, 0, 1, 1, 2, 2];
        assert_eq!(balanced_accuracy(&truth, &truth, 3).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[0, 0, 1, 0, 0, 1], &truth, 3).unwrap(), 0.5);
        assert_eq!(balanced_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap(), 0.5);
        assert!(balanced_accuracy(&[0, 0], &[0, 0], 2).is_err());
        assert!(balanced_accuracy(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn suppression_arithmetic() {
        assert_eq!(suppression_rate(0.9, 0.9).unwrap(), 0.0);
        assert!((suppression_rate(0.9, 0.45).unwrap() - 0.5).abs() < 1e-15);
        assert!(suppression_rate(0.6, 0.7).unwrap() < 0.0);
        assert!(suppression_rate(0.0, 0.5).is_err());
    }

    #[test]
    fn separable_blobs() {
        // 4 sigma margin along the first axis, scaled to survive normalization
        let train = blobs(200, 12.0, 1);
        let test = blobs(200, 12.0, 2);
        assert!(held_out_accuracy(&LogRegAttacker::default(), &train, &test) >= 0.99);
        assert!(held_out_accuracy(&KnnAttacker { n_neighbors: 3 }, &train, &test) >= 0.99);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = AttackDataset::new(vec![vec![1.0], vec![2.0]], vec!["a".into(), "a".into()], vec!["x".into(); 2], vec!["y".into(); 2]).unwrap();
        assert!(train_logreg(&d, &LogRegConfig::default()).is_err());
    }

    #[test]
    fn zero_features_give_chance() {
        let n = 400;
        let labels: Vec<String> = (0..n).map(|i| (i % 2).to_string()).collect();
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let d = AttackDataset::new(vec![vec![0.0; 3]; n], labels, ids.clone(), ids).unwrap();
        let acc = held_out_accuracy(&LogRegAttacker::default(), &d, &d);
        assert!((acc - 0.5).abs() <= 0.05);
    }

    #[test]
    fn knn_rules() {
        let d = blobs(20, 12.0, 3);
        let model = train_knn(&d, 1).unwrap();
        for (f, &l) in d.features().iter().zip(d.labels()) {
            assert_eq!(model.predict(f), l);
        }
        // balanced data with k = n: votes tie, the closer class wins
        let all = train_knn(&d, d.len()).unwrap();
        let q = &d.features()[0];
        let mut summed = [0.0; 2];
        for (f, &l) in d.features().iter().zip(d.labels()) {
            summed[l] += squared(q, f).sqrt();
        }
        let expected = if summed[1] < summed[0] { 1 } else { 0 };
        assert_eq!(all.predict(q), expected);
        assert!(train_knn(&d, 0).is_err());
        assert!(train_knn(&d, 21).is_err());
    }

    fn squared(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum()
    }

    #[test]
    fn balancing_downsamples_to_smallest_class() {
        let labels: Vec<String> = ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let d = AttackDataset::new(vec![vec![1.0]; 4], labels, ids.clone(), ids).unwrap();
        let b = d.balanced(7).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.present_classes().len(), 2);
        assert_eq!(b, d.balanced(7).unwrap());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let r = AttackDataset::new(vec![vec![1.0]; 3], vec!["a".into(); 2], vec!["s".into(); 3], vec!["c".into(); 3]);
        assert!(r.is_err());
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attack.csv");
        let d = blobs(10, 4.0, 5);
        export_attack_dataset(&d, "gender", &path).unwrap();
        let back = crate::io::load_embeddings_raw(&path, EmbeddingFormat::Csv).unwrap();
        assert_eq!(AttackDataset::from_embeddings(&back, "gender").unwrap(), d);

        let empty = d.subset(&[]);
        export_attack_dataset(&empty, "gender", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
