//! Subject-disjoint cross-validation folds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{distinct_subjects, Embedding};

/// Assignment of every subject to exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    folds: BTreeMap<String, usize>,
    fold_count: usize,
}

impl DatasetSplit {
    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn fold_of(&self, subject_id: &str) -> Option<usize> {
        self.folds.get(subject_id).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.folds
    }

    pub fn subjects_in(&self, fold: usize) -> BTreeSet<&str> {
        self.folds
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Splits embeddings into (train, test) for the given test fold.
    ///
    /// Panics if a subject would appear on both sides or is unassigned.
    pub fn partition<'a>(
        &self,
        embeddings: &'a [Embedding],
        test_fold: usize,
    ) -> (Vec<&'a Embedding>, Vec<&'a Embedding>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for e in embeddings {
            let fold = self
                .fold_of(e.subject_id())
                .unwrap_or_else(|| panic!("subject {} has no fold", e.subject_id()));
            if fold == test_fold {
                test.push(e);
            } else {
                train.push(e);
            }
        }
        let train_ids: BTreeSet<&str> = train.iter().map(|e| e.subject_id()).collect();
        assert!(
            test.iter().all(|e| !train_ids.contains(e.subject_id())),
            "fold {test_fold} leaks a subject between train and test"
        );
        (train, test)
    }
}

/// Shuffles subjects with a seeded RNG and deals them round-robin into
/// `fold_count` folds, so fold sizes differ by at most one subject.
pub fn make_subject_disjoint_folds(
    embeddings: &[Embedding],
    fold_count: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if fold_count < 2 {
        return Err(Error::invalid(format!("fold count {fold_count} < 2")));
    }
    let mut subjects = distinct_subjects(embeddings);
    if subjects.len() < fold_count {
        return Err(Error::insufficient(format!(
            "{} subjects cannot fill {fold_count} folds",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let folds = subjects
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i % fold_count))
        .collect();
    Ok(DatasetSplit { folds, fold_count })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subjects(n: usize, captures: usize) -> Vec<Embedding> {
        (0..n)
            .flat_map(|s| {
                (0..captures).map(move |c| {
                    Embedding::new(format!("s{s}"), format!("c{c}"), vec![1.0]).unwrap()
                })
            })
            .collect()
    }

    #[test]
    fn ten_subjects_five_folds() {
        let split = make_subject_disjoint_folds(&subjects(10, 3), 5, 1).unwrap();
        assert_eq!(split.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn eleven_subjects_five_folds() {
        let split = make_subject_disjoint_folds(&subjects(11, 2), 5, 1).unwrap();
        let mut sizes = split.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn deterministic_per_seed() {
        let data = subjects(23, 2);
        let a = make_subject_disjoint_folds(&data, 5, 9).unwrap();
        let b = make_subject_disjoint_folds(&data, 5, 9).unwrap();
        assert_eq!(a, b);
        let c = make_subject_disjoint_folds(&data, 5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_subjects() {
        assert!(matches!(
            make_subject_disjoint_folds(&subjects(3, 2), 5, 0),
            Err(Error::InsufficientData(_))
        ));
        assert!(make_subject_disjoint_folds(&subjects(3, 2), 1, 0).is_err());
    }

    #[test]
    fn partition_keeps_all_captures_together() {
        let data = subjects(7, 4);
        let split = make_subject_disjoint_folds(&data, 3, 2).unwrap();
        for fold in 0..3 {
            let (train, test) = split.partition(&data, fold);
            assert_eq!(train.len() + test.len(), data.len());
            assert_eq!(test.len(), split.subjects_in(fold).len() * 4);
        }
    }
}
