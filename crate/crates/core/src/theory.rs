//! Predicted negative-domain score distributions.
//!
//! For two positive templates differing in `D` of `L` positions, negating one
//! of them never creates a collision where they agreed, and creates one with
//! probability `1/(k-1)` at each differing position. The number of
//! non-colliding positions `D'` therefore equals `L - D + mu`, where `mu`
//! follows a binomial law over `D` trials with success probability
//! `(k-2)/(k-1)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

fn check(length: usize, distance: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("k={k} < 2")));
    }
    if length == 0 {
        return Err(Error::invalid("template length must be >= 1"));
    }
    if distance > length {
        return Err(Error::invalid(format!("distance {distance} exceeds length {length}")));
    }
    Ok(())
}

/// Distribution of the non-collision count `D'` given positive distance `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeDistancePmf {
    length: usize,
    distance: usize,
    k: usize,
    /// Indexed by `mu = D' - (L - D)`.
    probabilities: Vec<f64>,
}

impl NegativeDistancePmf {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Smallest and largest `D'` with support.
    pub fn support(&self) -> (usize, usize) {
        (self.length - self.distance, self.length)
    }

    pub fn probability(&self, d_prime: usize) -> f64 {
        let (lo, hi) = self.support();
        if d_prime < lo || d_prime > hi {
            0.0
        } else {
            self.probabilities[d_prime - lo]
        }
    }

    /// `(D', probability)` over the support.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.length - self.distance;
        self.probabilities.iter().enumerate().map(move |(mu, &p)| (lo + mu, p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(d, p)| d as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(d, p)| (d as f64 - m).powi(2) * p).sum()
    }

    /// Most probable `D'` (the smallest one on ties).
    pub fn mode(&self) -> usize {
        let (lo, _) = self.support();
        let mut best = 0;
        for (mu, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = mu;
            }
        }
        lo + best
    }
}

/// Binomial PMF of `D'`, computed with a log-space ratio recurrence and
/// log-sum-exp normalization, so it neither overflows nor underflows for
/// very long templates.
pub fn pmf(length: usize, distance: usize, k: usize) -> Result<NegativeDistancePmf> {
    check(length, distance, k)?;
    let probabilities = if k == 2 || distance == 0 {
        let mut p = vec![0.0; distance + 1];
        p[0] = 1.0;
        p
    } else {
        // P(mu+1)/P(mu) = (D-mu)/(mu+1) * (k-2)
        let log_ratio = ((k - 2) as f64).ln();
        let mut log_w = Vec::with_capacity(distance + 1);
        let mut acc = 0.0;
        log_w.push(acc);
        for mu in 0..distance {
            acc += ((distance - mu) as f64).ln() - ((mu + 1) as f64).ln() + log_ratio;
            log_w.push(acc);
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_w.iter().map(|w| (w - max).exp()).sum();
        let log_z = max + total.ln();
        log_w.iter().map(|w| (w - log_z).exp()).collect()
    };
    Ok(NegativeDistancePmf {
        length,
        distance,
        k,
        probabilities,
    })
}

/// Exact rational PMF indexed by `mu`:
/// `C(D, mu) (k-2)^mu / (k-1)^D`.
pub fn pmf_exact(length: usize, distance: usize, k: usize) -> Result<Vec<BigRational>> {
    check(length, distance, k)?;
    let denominator = num_traits::pow(BigInt::from(k - 1), distance);
    let base = BigInt::from(k - 2);
    let mut binom = BigInt::one();
    let mut out = Vec::with_capacity(distance + 1);
    for mu in 0..=distance {
        if mu > 0 {
            binom = binom * BigInt::from(distance - mu + 1) / BigInt::from(mu);
        }
        let numerator = &binom * num_traits::pow(base.clone(), mu);
        out.push(BigRational::new(numerator, denominator.clone()));
    }
    Ok(out)
}

/// Mean negative-domain score `E[D'] / L`.
pub fn expected_nhd(length: usize, distance: usize, k: usize) -> Result<f64> {
    check(length, distance, k)?;
    let flip = (k - 2) as f64 / (k - 1) as f64;
    Ok((length as f64 - distance as f64 + distance as f64 * flip) / length as f64)
}

/// Predicted probability of every score `D'/L`, `D' = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    length: usize,
    probabilities: Vec<f64>,
}

impl ScoreHistogram {
    pub fn from_probabilities(length: usize, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != length + 1 {
            return Err(Error::DimensionMismatch {
                context: "score histogram".into(),
                expected: length + 1,
                found: probabilities.len(),
            });
        }
        Ok(ScoreHistogram {
            length,
            probabilities,
        })
    }

    /// Empirical histogram of non-collision counts.
    pub fn from_counts(length: usize, non_collisions: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut counts = vec![0usize; length + 1];
        let mut n = 0usize;
        for d in non_collisions {
            if d > length {
                return Err(Error::invalid(format!("count {d} exceeds length {length}")));
            }
            counts[d] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::insufficient("empty score sample"));
        }
        Ok(ScoreHistogram {
            length,
            probabilities: counts.into_iter().map(|c| c as f64 / n as f64).collect(),
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `(score, probability)` pairs with score `D'/L`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let l = self.length as f64;
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(d, &p)| (d as f64 / l, p))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Re-bins onto `bins` equal-width intervals of `[0, 1]`; score 1.0 goes
    /// to the last bin.
    pub fn binned(&self, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins.max(1)];
        for (d, &p) in self.probabilities.iter().enumerate() {
            // integer arithmetic keeps bin boundaries exact
            let b = ((d * bins) / self.length).min(bins - 1);
            out[b] += p;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("score,probability\n");
        for (score, p) in self.iter() {
            let _ = writeln!(s, "{},{}", score, format_probability(p));
        }
        s
    }
}

/// Mixture of the per-distance PMFs, weighted by the empirical frequency of
/// each positive-domain distance.
pub fn transform_score_distribution(
    positive_distances: &[usize],
    length: usize,
    k: usize,
) -> Result<ScoreHistogram> {
    if positive_distances.is_empty() {
        return Err(Error::insufficient("no positive-domain distances"));
    }
    let mut weights: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in positive_distances {
        check(length, d, k)?;
        *weights.entry(d).or_default() += 1;
    }
    let n = positive_distances.len() as f64;
    let mut probabilities = vec![0.0; length + 1];
    for (d, count) in weights {
        let w = count as f64 / n;
        for (d_prime, p) in pmf(length, d, k)?.iter() {
            probabilities[d_prime] += w * p;
        }
    }
    Ok(ScoreHistogram {
        length,
        probabilities,
    })
}

/// Most probable score for each distance, as a point-mass mixture.
pub fn mode_transform(positive_distances: &[usize], length: usize, k: usize) -> Result<ScoreHistogram> {
    if positive_distances.is_empty() {
        return Err(Error::insufficient("no positive-domain distances"));
    }
    let modes = positive_distances
        .iter()
        .map(|&d| pmf(length, d, k).map(|p| p.mode()))
        .collect::<Result<Vec<_>>>()?;
    ScoreHistogram::from_counts(length, modes)
}

/// Half the L1 distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "total variation".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Rounds to 15 significant digits so exact probabilities print exactly
/// (0.5 rather than 0.49999999999999994).
pub fn format_probability(p: f64) -> String {
    if p == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{p:.14e}").parse().unwrap_or(p);
    format!("{rounded}")
}

/// `d_prime,probability` rows over the PMF support.
pub fn pmf_csv(pmf: &NegativeDistancePmf) -> String {
    let mut s = String::from("d_prime,probability\n");
    for (d, p) in pmf.iter() {
        let _ = writeln!(s, "{d},{}", format_probability(p));
    }
    s
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    if r.is_zero() {
        0.0
    } else {
        r.to_f64().unwrap_or(f64::NAN)
    }
}
