//! Synthetic identity-structured embeddings with planted soft-biometric
//! attributes.
//!
//! Each subject has a mean vector drawn around the origin with spread
//! `sigma_between`; captures scatter around it with spread `sigma_within`.
//! Every attribute class owns a unit direction, orthogonal to the directions
//! of all other attributes, and a subject's mean is shifted along the
//! direction of each of its classes by `strength * attribute_scale *
//! sigma_between`. Captures are unit-normalized.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Embedding;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub classes: usize,
    /// Signal strength in `[0, 1]`; zero plants no signal.
    pub strength: f64,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, classes: usize, strength: f64) -> Self {
        AttributeSpec {
            name: name.into(),
            classes,
            strength,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub captures_per_subject: usize,
    pub dim: usize,
    pub sigma_within: f64,
    pub sigma_between: f64,
    /// Shift of a full-strength attribute, in units of `sigma_between`.
    pub attribute_scale: f64,
    pub attributes: Vec<AttributeSpec>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 100,
            captures_per_subject: 5,
            dim: 64,
            sigma_within: 1.0 / 6.0,
            sigma_between: 1.0,
            attribute_scale: 2.5,
            attributes: vec![AttributeSpec::new("gender", 2, 0.8)],
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.subjects < 2 || self.captures_per_subject < 1 || self.dim < 1 {
            return Err(Error::invalid("need >= 2 subjects and >= 1 capture and dimension"));
        }
        if !(self.sigma_within > 0.0 && self.sigma_between > 0.0)
            || !self.sigma_within.is_finite()
            || !self.sigma_between.is_finite()
        {
            return Err(Error::invalid("spreads must be positive and finite"));
        }
        if !(self.attribute_scale >= 0.0 && self.attribute_scale.is_finite()) {
            return Err(Error::invalid("attribute scale must be finite and >= 0"));
        }
        let mut total = 0;
        for a in &self.attributes {
            if a.classes < 2 {
                return Err(Error::invalid(format!("attribute {} needs >= 2 classes", a.name)));
            }
            if !(0.0..=1.0).contains(&a.strength) {
                return Err(Error::invalid(format!(
                    "attribute {} strength {} outside [0, 1]",
                    a.name, a.strength
                )));
            }
            total += a.classes;
        }
        if total > self.dim {
            return Err(Error::invalid(format!(
                "{total} attribute classes do not fit orthogonally in dimension {}",
                self.dim
            )));
        }
        Ok(())
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Unit class directions per attribute: centered members of one orthonormal
/// set, so directions of different attributes are mutually orthogonal.
fn class_directions(config: &SynthConfig) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synth-directions", 0));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::with_capacity(config.attributes.len());
    for a in &config.attributes {
        let mut members = Vec::with_capacity(a.classes);
        while members.len() < a.classes {
            let mut v: Vec<f64> = (0..config.dim).map(|_| gauss(&mut rng)).collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v.clone());
            members.push(v);
        }
        let centroid: Vec<f64> = (0..config.dim)
            .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / a.classes as f64)
            .collect();
        let centered = members
            .into_iter()
            .map(|mut m| {
                m.iter_mut().zip(&centroid).for_each(|(x, c)| *x -= c);
                let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
                m.iter_mut().for_each(|x| *x /= norm);
                m
            })
            .collect();
        out.push(centered);
    }
    out
}

/// Balanced class assignment: round-robin over a seeded subject permutation.
fn class_assignments(config: &SynthConfig) -> Vec<Vec<usize>> {
    config
        .attributes
        .iter()
        .enumerate()
        .map(|(ai, a)| {
            let mut order: Vec<usize> = (0..config.subjects).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synth-classes", ai as u64));
            order.shuffle(&mut rng);
            let mut classes = vec![0; config.subjects];
            for (rank, &s) in order.iter().enumerate() {
                classes[s] = rank % a.classes;
            }
            classes
        })
        .collect()
}

pub fn subject_id(index: usize) -> String {
    format!("s{index:04}")
}

/// Generates `subjects * captures_per_subject` unit-norm embeddings, ordered
/// by subject then capture. Attribute labels are class indices as strings.
pub fn synthesize(config: &SynthConfig) -> Result<Vec<Embedding>> {
    config.validate()?;
    let directions = class_directions(config);
    let assignments = class_assignments(config);
    let mut out = Vec::with_capacity(config.subjects * config.captures_per_subject);
    for s in 0..config.subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synth-subject", s as u64));
        let mut mean: Vec<f64> = (0..config.dim)
            .map(|_| config.sigma_between * gauss(&mut rng))
            .collect();
        let mut attributes = BTreeMap::new();
        for (ai, a) in config.attributes.iter().enumerate() {
            let class = assignments[ai][s];
            let shift = a.strength * config.attribute_scale * config.sigma_between;
            mean.iter_mut()
                .zip(&directions[ai][class])
                .for_each(|(m, d)| *m += shift * d);
            attributes.insert(a.name.clone(), class.to_string());
        }
        let id = subject_id(s);
        for c in 0..config.captures_per_subject {
            let mut v: Vec<f64> = mean
                .iter()
                .map(|m| m + config.sigma_within * gauss(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            let values = v.into_iter().map(|x| x as f32).collect();
            out.push(
                Embedding::new(id.clone(), format!("{id}_c{c}"), values)?
                    .with_attributes(attributes.clone()),
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            subjects: 12,
            captures_per_subject: 3,
            dim: 16,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shape_and_norms() {
        let e = synthesize(&small()).unwrap();
        assert_eq!(e.len(), 36);
        assert!(e.iter().all(|x| (x.l2_norm() - 1.0).abs() < 1e-5));
        assert_eq!(e[4].subject_id(), "s0001");
        assert_eq!(e[4].capture_id(), "s0001_c1");
    }

    #[test]
    fn seeded_runs_are_identical() {
        assert_eq!(synthesize(&small()).unwrap(), synthesize(&small()).unwrap());
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(synthesize(&small()).unwrap(), synthesize(&other).unwrap());
    }

    #[test]
    fn classes_are_balanced() {
        let cfg = SynthConfig {
            attributes: vec![AttributeSpec::new("a", 3, 0.5)],
            ..small()
        };
        let e = synthesize(&cfg).unwrap();
        let mut counts = [0; 3];
        for x in e.iter().step_by(3) {
            counts[x.attribute("a").unwrap().parse::<usize>().unwrap()] += 1;
        }
        assert_eq!(counts, [4, 4, 4]);
    }

    #[test]
    fn directions_are_orthogonal_across_attributes() {
        let cfg = SynthConfig {
            attributes: vec![AttributeSpec::new("a", 2, 1.0), AttributeSpec::new("b", 3, 1.0)],
            ..small()
        };
        let dirs = class_directions(&cfg);
        for u in &dirs[0] {
            assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            for v in &dirs[1] {
                let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 1e-12);
            }
        }
        let dot: f64 = dirs[0][0].iter().zip(&dirs[0][1]).map(|(x, y)| x * y).sum();
        assert!((dot + 1.0).abs() < 1e-12, "binary classes are antipodal");
    }

    #[test]
    fn vanishing_within_spread_repeats_captures() {
        let cfg = SynthConfig {
            sigma_within: 1e-12,
            ..small()
        };
        let e = synthesize(&cfg).unwrap();
        assert_eq!(e[0].values(), e[1].values());
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SynthConfig { sigma_within: 0.0, ..small() },
            SynthConfig { subjects: 0, ..small() },
            SynthConfig { attributes: vec![AttributeSpec::new("a", 1, 0.5)], ..small() },
            SynthConfig { attributes: vec![AttributeSpec::new("a", 2, 1.5)], ..small() },
            SynthConfig { attributes: vec![AttributeSpec::new("a", 17, 0.5)], ..small() },
        ] {
            assert!(synthesize(&cfg).is_err());
        }
    }
}
