//! Threshold-sweep verification metrics. Scores are similarities: a
//! comparison is accepted when its score is at least the threshold.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    genuine: Vec<f64>,
    imposter: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, imposter: Vec<f64>) -> Result<Self> {
        if genuine.iter().chain(&imposter).any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("score".into()));
        }
        Ok(ScoreSet { genuine, imposter })
    }

    pub fn genuine(&self) -> &[f64] {
        &self.genuine
    }

    pub fn imposter(&self) -> &[f64] {
        &self.imposter
    }

    /// Applies `f` to every score.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.genuine.iter().map(|&s| f(s)).collect(),
            self.imposter.iter().map(|&s| f(s)).collect(),
        )
    }

    pub fn extend(&mut self, other: &ScoreSet) {
        self.genuine.extend_from_slice(&other.genuine);
        self.imposter.extend_from_slice(&other.imposter);
    }

    fn require_both(&self) -> Result<()> {
        if self.genuine.is_empty() || self.imposter.is_empty() {
            return Err(Error::insufficient(format!(
                "metrics need genuine and imposter scores (have {} and {})",
                self.genuine.len(),
                self.imposter.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Rates at every distinct score plus `+inf` (reject all), in increasing
/// threshold order. FMR is non-increasing and FNMR non-decreasing along it.
pub fn operating_points(s: &ScoreSet) -> Result<Vec<OperatingPoint>> {
    s.require_both()?;
    let genuine = sorted(&s.genuine);
    let imposter = sorted(&s.imposter);
    let mut thresholds: Vec<f64> = genuine.iter().chain(&imposter).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (ng, ni) = (genuine.len() as f64, imposter.len() as f64);
    Ok(thresholds
        .into_iter()
        .map(|t| OperatingPoint {
            threshold: t,
            fmr: (imposter.len() - imposter.partition_point(|&x| x < t)) as f64 / ni,
            fnmr: genuine.partition_point(|&x| x < t) as f64 / ng,
        })
        .collect())
}

/// Operating point minimizing `|FMR - FNMR|`; ties go to the smaller mean
/// error, then to the lower threshold.
pub fn eer_point(s: &ScoreSet) -> Result<OperatingPoint> {
    let points = operating_points(s)?;
    let mut best = points[0];
    for p in &points[1..] {
        let (gap, best_gap) = ((p.fmr - p.fnmr).abs(), (best.fmr - best.fnmr).abs());
        if gap < best_gap || (gap == best_gap && p.fmr + p.fnmr < best.fmr + best.fnmr) {
            best = *p;
        }
    }
    Ok(best)
}

/// `(FMR + FNMR) / 2` at the [`eer_point`].
pub fn eer(s: &ScoreSet) -> Result<f64> {
    let p = eer_point(s)?;
    Ok((p.fmr + p.fnmr) / 2.0)
}

/// Lowest threshold whose FMR lies strictly below `target`. With `n`
/// imposters and `target = 1/n` this rejects every imposter.
pub fn fnmr_at_fmr_point(s: &ScoreSet, target: f64) -> Result<OperatingPoint> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target FMR {target} outside (0, 1)")));
    }
    if (s.imposter.len() as f64) < 1.0 / target {
        log::warn!(
            "{} imposter scores cannot resolve FMR {target}",
            s.imposter.len()
        );
    }
    let points = operating_points(s)?;
    Ok(*points
        .iter()
        .find(|p| p.fmr < target)
        .expect("the reject-all point has FMR 0"))
}

pub fn fnmr_at_fmr(s: &ScoreSet, target: f64) -> Result<f64> {
    Ok(fnmr_at_fmr_point(s, target)?.fnmr)
}

/// At most `max_points` operating points, evenly subsampled, always keeping
/// both ends.
pub fn roc(s: &ScoreSet, max_points: usize) -> Result<Vec<OperatingPoint>> {
    let points = operating_points(s)?;
    if max_points < 2 || points.len() <= max_points {
        return Ok(points);
    }
    let last = points.len() - 1;
    let mut out: Vec<OperatingPoint> = (0..max_points)
        .map(|i| points[i * last / (max_points - 1)])
        .collect();
    out.dedup_by(|a, b| a.threshold == b.threshold);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(g: &[f64], i: &[f64]) -> ScoreSet {
        ScoreSet::new(g.to_vec(), i.to_vec()).unwrap()
    }

    #[test]
    fn hand_computed_eer() {
        let s = set(&[0.9, 0.8, 0.7], &[0.75, 0.6, 0.5]);
        assert_eq!(eer(&s).unwrap(), 1.0 / 3.0);
        let p = eer_point(&s).unwrap();
        assert_eq!(p.threshold, 0.75);
    }

    #[test]
    fn separated_and_inverted() {
        let s = set(&[0.9, 0.8], &[0.3, 0.2, 0.1]);
        assert_eq!(eer(&s).unwrap(), 0.0);
        assert_eq!(fnmr_at_fmr(&s, 0.01).unwrap(), 0.0);
        let inv = set(&[0.1, 0.2], &[0.8, 0.9]);
        assert_eq!(fnmr_at_fmr(&inv, 0.01).unwrap(), 1.0);
        assert_eq!(eer(&inv).unwrap(), 1.0);
    }

    #[test]
    fn identical_distributions_sit_at_chance() {
        let v: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let e = eer(&set(&v, &v)).unwrap();
        assert!((e - 0.5).abs() <= 1.0 / 50.0);
    }

    #[test]
    fn fnmr_on_uniform_imposter_grid() {
        let imposter: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let genuine: Vec<f64> = (0..40).map(|i| 0.9055 + i as f64 * 0.0025).collect();
        // top imposter 0.99; genuine below it: 0.9055 ..= 0.988, 34 of 40
        let p = fnmr_at_fmr_point(&set(&genuine, &imposter), 0.01).unwrap();
        assert!(p.threshold > 0.99 && p.threshold < 0.991);
        assert_eq!(p.fmr, 0.0);
        assert_eq!(p.fnmr, 34.0 / 40.0);
    }

    #[test]
    fn empty_lists_and_bad_targets() {
        assert!(eer(&set(&[], &[0.1])).is_err());
        assert!(fnmr_at_fmr(&set(&[0.1], &[]), 0.1).is_err());
        assert!(fnmr_at_fmr(&set(&[0.1], &[0.2]), 0.0).is_err());
        assert!(ScoreSet::new(vec![f64::NAN], vec![]).is_err());
    }

    #[test]
    fn roc_is_monotone_and_bounded() {
        let s = set(&[0.9, 0.7, 0.8, 0.4], &[0.1, 0.5, 0.3, 0.85]);
        let r = roc(&s, 3).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.last().unwrap().threshold, f64::INFINITY);
        for w in r.windows(2) {
            assert!(w[1].fmr <= w[0].fmr && w[1].fnmr >= w[0].fnmr);
        }
    }

    fn score_grid() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        // integer-valued scores keep the transforms below exact
        (
            prop::collection::vec(0u32..40, 1..30),
            prop::collection::vec(0u32..40, 1..30),
        )
            .prop_map(|(g, i)| {
                (
                    g.into_iter().map(f64::from).collect(),
                    i.into_iter().map(f64::from).collect(),
                )
            })
    }

    proptest! {
        #[test]
        fn eer_ignores_increasing_transforms((g, i) in score_grid(), a in 1u32..5, b in -3i32..3) {
            let s = set(&g, &i);
            let base = eer(&s).unwrap();
            let affine = s.map(|x| f64::from(a) * x + f64::from(b)).unwrap();
            let cubic = s.map(|x| x * x * x).unwrap();
            prop_assert_eq!(eer(&affine).unwrap(), base);
            prop_assert_eq!(eer(&cubic).unwrap(), base);
        }

        #[test]
        fn fnmr_is_non_increasing_in_target((g, i) in score_grid(), lo in 0.01f64..0.98, step in 0.0f64..0.5) {
            let s = set(&g, &i);
            let hi = (lo + step).min(0.99);
            prop_assert!(fnmr_at_fmr(&s, hi).unwrap() <= fnmr_at_fmr(&s, lo).unwrap());
        }

        #[test]
        fn rates_stay_in_unit_interval((g, i) in score_grid()) {
            let s = set(&g, &i);
            let e = eer(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }
}
