//! Negative template generation and positive/negative comparison.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gallery::Gallery;
use crate::model::{NegativeTemplate, PositiveTemplate};
use crate::rng::RandomSource;

/// Replaces every label with one drawn uniformly from the other `k - 1` labels.
pub fn negate(positive: &PositiveTemplate, rng: &mut RandomSource) -> Result<NegativeTemplate> {
    let k = positive.k();
    if k < 2 {
        return Err(Error::invalid("k < 2 leaves an empty complement set"));
    }
    let labels = positive
        .labels()
        .iter()
        .map(|&label| complement_draw(label, k, rng))
        .collect();
    NegativeTemplate::new(labels, k, positive.subject_id())
}

#[inline]
fn complement_draw(label: u8, k: usize, rng: &mut RandomSource) -> u8 {
    // Index into the sorted complement {1..k} \ {label}.
    let r = if k == 2 { 0 } else { rng.random_range(0..k - 1) } as u8 + 1;
    if r < label {
        r
    } else {
        r + 1
    }
}

fn check_pair(a_len: usize, a_k: usize, b_len: usize, b_k: usize) -> Result<()> {
    if a_len != b_len {
        return Err(Error::DimensionMismatch {
            context: "template comparison".into(),
            expected: a_len,
            found: b_len,
        });
    }
    if a_k != b_k {
        return Err(Error::MetadataMismatch(format!(
            "bin counts differ: {a_k} vs {b_k}"
        )));
    }
    if a_len == 0 {
        return Err(Error::invalid("empty templates"));
    }
    Ok(())
}

#[inline]
fn count_equal(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Number of positions where the probe and the stored negative template agree.
pub fn collisions(positive: &PositiveTemplate, negative: &NegativeTemplate) -> Result<usize> {
    check_pair(positive.len(), positive.k(), negative.len(), negative.k())?;
    Ok(count_equal(positive.labels(), negative.labels()))
}

/// Normalized Hamming-like score `1 - collisions / L`; higher means the
/// templates more likely come from the same subject.
pub fn nhd(positive: &PositiveTemplate, negative: &NegativeTemplate) -> Result<f64> {
    let c = collisions(positive, negative)?;
    let l = positive.len();
    Ok((l - c) as f64 / l as f64)
}

/// Hamming distance between two positive templates.
pub fn positive_hd(a: &PositiveTemplate, b: &PositiveTemplate) -> Result<usize> {
    check_pair(a.len(), a.k(), b.len(), b.k())?;
    Ok(a.len() - count_equal(a.labels(), b.labels()))
}

/// Scores a probe against every gallery entry.
pub fn batch_score(probe: &PositiveTemplate, gallery: &Gallery) -> Result<BTreeMap<String, f64>> {
    if probe.k() != gallery.k() || probe.len() != gallery.template_len() {
        return Err(Error::MetadataMismatch(format!(
            "probe k={}, L={} vs gallery k={}, L={}",
            probe.k(),
            probe.len(),
            gallery.k(),
            gallery.template_len()
        )));
    }
    let entries: Vec<(&str, &NegativeTemplate)> = gallery.entries().collect();
    let length = probe.len() as f64;
    Ok(entries
        .par_iter()
        .map(|(id, t)| {
            let score = (probe.len() - count_equal(probe.labels(), t.labels())) as f64 / length;
            (id.to_string(), score)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::SeedPolicy;
    use crate::model::Fingerprint;

    fn pos(labels: &[u8], k: usize) -> PositiveTemplate {
        PositiveTemplate::anonymous(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn binary_negation_is_a_flip() {
        let n = negate(&pos(&[1, 2, 1], 2), &mut RandomSource::seeded(3)).unwrap();
        assert_eq!(n.labels(), &[2, 1, 2]);
    }

    #[test]
    fn complement_property_k3() {
        for seed in 0..50 {
            let p = pos(&[1, 1, 2], 3);
            let n = negate(&p, &mut RandomSource::seeded(seed)).unwrap();
            for (a, b) in p.labels().iter().zip(n.labels()) {
                assert_ne!(a, b);
                assert!((1..=3).contains(b));
            }
            assert_eq!(nhd(&p, &n).unwrap(), 1.0);
        }
    }

    #[test]
    fn complement_is_uniform_for_single_label() {
        let p = pos(&[1], 3);
        let mut rng = RandomSource::seeded(11);
        let mut counts = [0usize; 4];
        let draws = 30_000;
        for _ in 0..draws {
            counts[negate(&p, &mut rng).unwrap().labels()[0] as usize] += 1;
        }
        assert_eq!(counts[0] + counts[1], 0);
        for c in &counts[2..] {
            let freq = *c as f64 / draws as f64;
            assert!((freq - 0.5).abs() <= 0.01, "{freq}");
        }
    }

    #[test]
    fn nhd_arithmetic() {
        let p = pos(&[1, 2, 3], 3);
        let n = NegativeTemplate::new(vec![1, 3, 2], 3, "").unwrap();
        assert!((nhd(&p, &n).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let same = NegativeTemplate::new(vec![1, 2, 3], 3, "").unwrap();
        assert_eq!(nhd(&p, &same).unwrap(), 0.0);
    }

    #[test]
    fn hamming_distance() {
        assert_eq!(positive_hd(&pos(&[1, 2, 3], 3), &pos(&[1, 2, 3], 3)).unwrap(), 0);
        assert_eq!(positive_hd(&pos(&[1, 2, 3], 3), &pos(&[1, 3, 3], 3)).unwrap(), 1);
        assert_eq!(positive_hd(&pos(&[1, 2, 3], 3), &pos(&[2, 3, 1], 3)).unwrap(), 3);
    }

    #[test]
    fn mismatches_are_errors() {
        let n = NegativeTemplate::new(vec![1, 2], 3, "").unwrap();
        assert!(nhd(&pos(&[1, 2, 3], 3), &n).is_err());
        let n4 = NegativeTemplate::new(vec![1, 2, 3], 4, "").unwrap();
        assert!(matches!(
            nhd(&pos(&[1, 2, 3], 3), &n4),
            Err(Error::MetadataMismatch(_))
        ));
        assert!(positive_hd(&pos(&[1], 3), &pos(&[1, 2], 3)).is_err());
    }

    fn gallery(k: usize, len: usize) -> Gallery {
        Gallery::new(k, len, Fingerprint::of(b"q"), Fingerprint::of(b"m"), SeedPolicy::Seeded(0)).unwrap()
    }

    #[test]
    fn batch_score_edge_cases() {
        let probe = PositiveTemplate::new(vec![1, 2, 3, 1], 3, "a", "a1").unwrap();
        let empty = gallery(3, 4);
        assert!(batch_score(&probe, &empty).unwrap().is_empty());

        let mut g = gallery(3, 4);
        g.insert(negate(&probe, &mut RandomSource::seeded(1)).unwrap()).unwrap();
        let scores = batch_score(&probe, &g).unwrap();
        assert_eq!(scores.get("a"), Some(&1.0));

        assert!(matches!(
            batch_score(&probe, &gallery(3, 5)),
            Err(Error::MetadataMismatch(_))
        ));
    }
}
