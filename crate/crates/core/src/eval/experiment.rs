use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{eer, eer_point, fnmr_at_fmr, roc, OperatingPoint, ScoreSet};
use crate::attack::{mean_std, run_attack, Attacker, Representation};
use crate::codec::{collisions, negate, positive_hd};
use crate::error::{Error, Result};
use crate::folds::DatasetSplit;
use crate::model::{Embedding, NegativeTemplate};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::rng::{derive_seed, RandomSource};
use crate::theory::{total_variation, transform_score_distribution, ScoreHistogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    AllPairs,
    /// A seeded uniform sample of at most `imposters` imposter comparisons;
    /// genuine comparisons are always exhaustive.
    Sampled { imposters: usize, seed: u64 },
}

impl Pairing {
    pub fn describe(&self) -> String {
        match self {
            Pairing::AllPairs => "all-pairs".into(),
            Pairing::Sampled { imposters, seed } => format!("sampled(imposters={imposters},seed={seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub pairing: Pairing,
    /// Also score each enrolment capture against its own reference.
    pub include_self: bool,
    /// Seed for the negation of references.
    pub seed: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            pairing: Pairing::AllPairs,
            include_self: false,
            seed: 0,
        }
    }
}

/// One probe-vs-reference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    /// Index of the probe embedding.
    pub probe: usize,
    /// Index of the embedding enrolled as the reference.
    pub reference: usize,
    pub genuine: bool,
    /// Hamming distance between the probe's and the reference's positive templates.
    pub positive_distance: usize,
    /// Positions where the probe matches the stored negative template.
    pub collisions: usize,
}

/// One reference per subject: its capture with the smallest capture id.
fn enrolment_indices(embeddings: &[&Embedding]) -> Result<BTreeMap<String, usize>> {
    let mut refs: BTreeMap<String, usize> = BTreeMap::new();
    for (i, e) in embeddings.iter().enumerate() {
        refs.entry(e.subject_id().to_string())
            .and_modify(|r| {
                if e.capture_id() < embeddings[*r].capture_id() {
                    *r = i;
                }
            })
            .or_insert(i);
    }
    if refs.len() < 2 {
        return Err(Error::insufficient(format!(
            "verification needs >= 2 subjects, found {}",
            refs.len()
        )));
    }
    Ok(refs)
}

/// `(probe, reference, genuine)` triples under the pairing policy.
fn pairs(embeddings: &[&Embedding], options: &ScoreOptions) -> Result<Vec<(usize, usize, bool)>> {
    let refs = enrolment_indices(embeddings)?;
    let mut genuine = Vec::new();
    let mut imposter = Vec::new();
    for (subject, &r) in &refs {
        for (p, e) in embeddings.iter().enumerate() {
            if e.subject_id() == subject {
                if p != r || options.include_self {
                    genuine.push((p, r, true));
                }
            } else {
                imposter.push((p, r, false));
            }
        }
    }
    if genuine.is_empty() {
        return Err(Error::insufficient("no genuine pairs: every subject has a single capture"));
    }
    if let Pairing::Sampled { imposters, seed } = options.pairing {
        if imposters < imposter.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, imposter.len(), imposters).into_vec();
            keep.sort_unstable();
            imposter = keep.into_iter().map(|i| imposter[i]).collect();
        }
    }
    genuine.extend(imposter);
    Ok(genuine)
}

/// Enrols one negative template per subject and compares every probe with it.
pub fn collect_comparisons(
    embeddings: &[&Embedding],
    pipeline: &Pipeline,
    options: &ScoreOptions,
) -> Result<Vec<Comparison>> {
    let pairs = pairs(embeddings, options)?;
    let positives = pipeline.positive_templates(embeddings)?;
    let mut references: BTreeMap<usize, NegativeTemplate> = BTreeMap::new();
    for &(_, r, _) in &pairs {
        if !references.contains_key(&r) {
            let mut rng = RandomSource::seeded_stream(derive_seed(options.seed, "enrol", 0), r as u64);
            references.insert(r, negate(&positives[r], &mut rng)?);
        }
    }
    let l = pipeline.length();
    pairs
        .par_iter()
        .map(|&(probe, reference, genuine)| {
            let positive_distance = positive_hd(&positives[probe], &positives[reference])?;
            let collisions = collisions(&positives[probe], &references[&reference])?;
            debug_assert!(
                collisions <= positive_distance,
                "non-collision count {} below L - D = {}",
                l - collisions,
                l - positive_distance
            );
            Ok(Comparison {
                probe,
                reference,
                genuine,
                positive_distance,
                collisions,
            })
        })
        .collect()
}

fn split_scores(comparisons: &[Comparison], score: impl Fn(&Comparison) -> f64) -> Result<ScoreSet> {
    let (g, i): (Vec<&Comparison>, Vec<&Comparison>) = comparisons.iter().partition(|c| c.genuine);
    ScoreSet::new(g.into_iter().map(&score).collect(), i.into_iter().map(&score).collect())
}

/// Negative-domain scores (`1 - collisions / L`) for every comparison.
pub fn collect_scores(embeddings: &[&Embedding], pipeline: &Pipeline, options: &ScoreOptions) -> Result<ScoreSet> {
    let l = pipeline.length();
    split_scores(&collect_comparisons(embeddings, pipeline, options)?, |c| {
        (l - c.collisions) as f64 / l as f64
    })
}

/// Cosine similarity of unprotected embeddings under the same pairing.
pub fn collect_cosine_scores(embeddings: &[&Embedding], options: &ScoreOptions) -> Result<ScoreSet> {
    let pairs = pairs(embeddings, options)?;
    let (mut g, mut i) = (Vec::new(), Vec::new());
    for (p, r, genuine) in pairs {
        let s = embeddings[p].cosine(embeddings[r]);
        if genuine {
            g.push(s);
        } else {
            i.push(s);
        }
    }
    ScoreSet::new(g, i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub genuine: usize,
    pub imposter: usize,
    pub eer: f64,
    pub eer_threshold: f64,
    pub fnmr_at_1e2: f64,
    pub fnmr_at_1e3: f64,
    /// EER of raw-embedding cosine scores on the same comparisons.
    pub baseline_eer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub pairing: String,
    pub folds: Vec<FoldMetrics>,
    /// Scores of all folds together.
    pub pooled: ScoreSet,
    pub roc: Vec<OperatingPoint>,
}

impl VerificationReport {
    fn stat(&self, f: impl Fn(&FoldMetrics) -> f64) -> (f64, f64) {
        mean_std(&self.folds.iter().map(f).collect::<Vec<_>>())
    }

    pub fn eer(&self) -> (f64, f64) {
        self.stat(|f| f.eer)
    }

    pub fn fnmr_at_1e2(&self) -> (f64, f64) {
        self.stat(|f| f.fnmr_at_1e2)
    }

    pub fn fnmr_at_1e3(&self) -> (f64, f64) {
        self.stat(|f| f.fnmr_at_1e3)
    }

    pub fn baseline_eer(&self) -> (f64, f64) {
        self.stat(|f| f.baseline_eer)
    }

    pub fn folds_csv(&self) -> String {
        let mut s = String::from("fold,genuine,imposter,eer,eer_threshold,fnmr_at_fmr_1e-2,fnmr_at_fmr_1e-3,baseline_eer\n");
        for f in &self.folds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                f.fold, f.genuine, f.imposter, f.eer, f.eer_threshold, f.fnmr_at_1e2, f.fnmr_at_1e3, f.baseline_eer
            );
        }
        s
    }

    pub fn roc_csv(&self) -> String {
        let mut s = String::from("threshold,fmr,fnmr\n");
        for p in &self.roc {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fmr, p.fnmr);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let row = |name: &str, (m, sd): (f64, f64)| format!("{name:<18} {:>7.3}% ± {:.3}%\n", 100.0 * m, 100.0 * sd);
        let mut s = format!("{} folds, {}\n", self.folds.len(), self.pairing);
        s += &row("EER", self.eer());
        s += &row("FNMR@FMR=1e-2", self.fnmr_at_1e2());
        s += &row("FNMR@FMR=1e-3", self.fnmr_at_1e3());
        s += &row("baseline EER", self.baseline_eer());
        s
    }
}

/// Fits the pipeline on each fold's training subjects and verifies its test
/// subjects. Folds run concurrently; results are ordered by fold.
pub fn run_verification_experiment(
    embeddings: &[Embedding],
    config: &PipelineConfig,
    split: &DatasetSplit,
    options: &ScoreOptions,
) -> Result<VerificationReport> {
    let folds: Vec<(FoldMetrics, ScoreSet)> = (0..split.fold_count())
        .into_par_iter()
        .map(|fold| {
            let (train, test) = split.partition(embeddings, fold);
            let pipeline = Pipeline::fit(&train, config)?.pipeline;
            let fold_options = ScoreOptions {
                seed: derive_seed(options.seed, "fold", fold as u64),
                ..options.clone()
            };
            let scores = collect_scores(&test, &pipeline, &fold_options)?;
            let baseline = collect_cosine_scores(&test, &fold_options)?;
            let point = eer_point(&scores)?;
            Ok((
                FoldMetrics {
                    fold,
                    genuine: scores.genuine().len(),
                    imposter: scores.imposter().len(),
                    eer: (point.fmr + point.fnmr) / 2.0,
                    eer_threshold: point.threshold,
                    fnmr_at_1e2: fnmr_at_fmr(&scores, 1e-2)?,
                    fnmr_at_1e3: fnmr_at_fmr(&scores, 1e-3)?,
                    baseline_eer: eer(&baseline)?,
                },
                scores,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = ScoreSet::default();
    for (_, s) in &folds {
        pooled.extend(s);
    }
    Ok(VerificationReport {
        pairing: options.pairing.describe(),
        roc: roc(&pooled, 512)?,
        pooled,
        folds: folds.into_iter().map(|(m, _)| m).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOptions {
    /// Comparisons per class to reach, by re-negating references.
    pub min_comparisons: usize,
    /// Histogram bins over `[0, 1]` for the total-variation distance.
    pub bins: usize,
    /// Classes with fewer comparisons are flagged in the report.
    pub warn_below: usize,
    pub seed: u64,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        TheoryOptions {
            min_comparisons: 10_000,
            bins: 100,
            warn_below: 1_000,
            seed: 0,
        }
    }
}

/// Predicted and empirical score distributions of one comparison class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDivergence {
    pub comparisons: usize,
    pub predicted: ScoreHistogram,
    pub empirical: ScoreHistogram,
    /// Total variation between the binned histograms.
    pub tv: f64,
    /// Total variation over individual scores `D'/L`.
    pub tv_exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryValidation {
    pub length: usize,
    pub k: usize,
    pub bins: usize,
    pub genuine: ClassDivergence,
    pub imposter: ClassDivergence,
    pub warnings: Vec<String>,
}

impl TheoryValidation {
    /// `class,bin_low,bin_high,predicted,empirical` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,bin_low,bin_high,predicted,empirical\n");
        for (name, class) in [("genuine", &self.genuine), ("imposter", &self.imposter)] {
            let (p, e) = (class.predicted.binned(self.bins), class.empirical.binned(self.bins));
            for b in 0..self.bins {
                let w = 1.0 / self.bins as f64;
                let _ = writeln!(s, "{name},{},{},{},{}", b as f64 * w, (b + 1) as f64 * w, p[b], e[b]);
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("L={} k={} bins={}\n", self.length, self.k, self.bins);
        for (name, c) in [("genuine", &self.genuine), ("imposter", &self.imposter)] {
            let _ = writeln!(s, "{name:<9} comparisons={:<7} tv={:.4} tv_exact={:.4}", c.comparisons, c.tv, c.tv_exact);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

fn divergence(
    comparisons: &[(usize, usize)],
    length: usize,
    k: usize,
    bins: usize,
) -> Result<ClassDivergence> {
    let distances: Vec<usize> = comparisons.iter().map(|c| c.0).collect();
    let predicted = transform_score_distribution(&distances, length, k)?;
    let empirical = ScoreHistogram::from_counts(length, comparisons.iter().map(|c| length - c.1))?;
    Ok(ClassDivergence {
        comparisons: comparisons.len(),
        tv: total_variation(&predicted.binned(bins), &empirical.binned(bins))?,
        tv_exact: total_variation(predicted.probabilities(), empirical.probabilities())?,
        predicted,
        empirical,
    })
}

/// Compares the predicted negative-domain score distribution, obtained by
/// transforming the positive-domain distance histogram, against realized
/// scores. The pipeline is fit on all embeddings and every capture serves as
/// a reference; references are re-negated until each class reaches
/// `min_comparisons`.
pub fn validate_theory(
    embeddings: &[Embedding],
    config: &PipelineConfig,
    options: &TheoryOptions,
) -> Result<TheoryValidation> {
    if options.bins == 0 {
        return Err(Error::invalid("bins must be >= 1"));
    }
    let all: Vec<&Embedding> = embeddings.iter().collect();
    enrolment_indices(&all)?;
    let pipeline = Pipeline::fit(&all, config)?.pipeline;
    let (l, k) = (pipeline.length(), pipeline.k());
    let positives = pipeline.positive_templates(&all)?;

    let (mut genuine, mut imposter) = (Vec::new(), Vec::new());
    for (p, a) in all.iter().enumerate() {
        for (r, b) in all.iter().enumerate() {
            if p == r {
                continue;
            }
            if a.subject_id() == b.subject_id() {
                genuine.push((p, r));
            } else {
                imposter.push((p, r));
            }
        }
    }
    if genuine.is_empty() {
        return Err(Error::insufficient("no genuine pairs: every subject has a single capture"));
    }
    let replicates = options.min_comparisons.div_ceil(genuine.len()).max(1);
    let wanted = options.min_comparisons.div_ceil(replicates).max(1);
    if imposter.len() > wanted {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, "theory-imposters", 0));
        let mut keep = sample(&mut rng, imposter.len(), wanted).into_vec();
        keep.sort_unstable();
        imposter = keep.into_iter().map(|i| imposter[i]).collect();
    }

    let positives = &positives;
    let realize = |pairs: &[(usize, usize)], tag: &str| -> Result<Vec<(usize, usize)>> {
        (0..replicates)
            .into_par_iter()
            .flat_map_iter(|j| {
                let stream_seed = derive_seed(options.seed, tag, j as u64);
                pairs.iter().enumerate().map(move |(n, &(p, r))| {
                    let mut rng = RandomSource::seeded_stream(stream_seed, n as u64);
                    let negative = negate(&positives[r], &mut rng)?;
                    let d = positive_hd(&positives[p], &positives[r])?;
                    let c = collisions(&positives[p], &negative)?;
                    debug_assert!(c <= d, "non-collision count below L - D");
                    Ok((d, c))
                })
            })
            .collect()
    };
    let genuine = realize(&genuine, "theory-genuine")?;
    let imposter = realize(&imposter, "theory-imposter")?;

    let mut warnings = Vec::new();
    for (name, n) in [("genuine", genuine.len()), ("imposter", imposter.len())] {
        if n < options.warn_below {
            let msg = format!("only {n} {name} comparisons; histograms are noisy");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(TheoryValidation {
        length: l,
        k,
        bins: options.bins,
        genuine: divergence(&genuine, l, k, options.bins)?,
        imposter: divergence(&imposter, l, k, options.bins)?,
        warnings,
    })
}

/// Attack settings for [`parameter_sweep`].
pub struct SweepAttack<'a> {
    pub attribute: &'a str,
    pub attackers: &'a [Box<dyn Attacker>],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub length: usize,
    pub eer_mean: f64,
    pub eer_std: f64,
    pub fnmr_at_1e2_mean: f64,
    /// `(attacker, positive accuracy, negative accuracy, suppression)`.
    pub attack: Vec<(String, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let attackers: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.attack.iter().map(|a| a.0.as_str()).collect())
            .unwrap_or_default();
        let mut s = String::from("k,L,eer_mean,eer_std,fnmr_at_fmr_1e-2");
        for a in &attackers {
            let _ = write!(s, ",{a}_positive,{a}_negative,{a}_suppression");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{},{}", r.k, r.length, r.eer_mean, r.eer_std, r.fnmr_at_1e2_mean);
            for a in &r.attack {
                let _ = write!(s, ",{},{},{}", a.1, a.2, a.3);
            }
            s.push('\n');
        }
        s
    }
}

/// Verification (and optionally attack) metrics at every `(k, L)` grid point.
pub fn parameter_sweep(
    embeddings: &[Embedding],
    base: &PipelineConfig,
    grid: &[(usize, usize)],
    split: &DatasetSplit,
    options: &ScoreOptions,
    attack: Option<&SweepAttack<'_>>,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &(k, length) in grid {
        let config = PipelineConfig {
            k,
            length,
            ..base.clone()
        };
        let report = run_verification_experiment(embeddings, &config, split, options)?;
        let (eer_mean, eer_std) = report.eer();
        let mut attack_cols = Vec::new();
        if let Some(a) = attack {
            let r = run_attack(embeddings, &config, a.attribute, split, a.attackers, a.seed)?;
            for res in &r.results {
                attack_cols.push((
                    res.attacker.clone(),
                    res.mean_std(Representation::Positive).0,
                    res.mean_std(Representation::Negative).0,
                    res.suppression(Representation::Positive).unwrap_or(f64::NAN),
                ));
            }
        }
        log::info!("sweep k={k} L={length}: EER {eer_mean:.4}");
        rows.push(SweepRow {
            k,
            length,
            eer_mean,
            eer_std,
            fnmr_at_1e2_mean: report.fnmr_at_1e2().0,
            attack: attack_cols,
        });
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::EnlargementKind;
    use crate::synth::{synthesize, SynthConfig};

    fn data(subjects: usize, captures: usize) -> Vec<Embedding> {
        synthesize(&SynthConfig {
            subjects,
            captures_per_subject: captures,
            dim: 8,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn random_pipeline(train: &[Embedding], k: usize, l: usize) -> Pipeline {
        let refs: Vec<&Embedding> = train.iter().collect();
        Pipeline::fit(&refs, &PipelineConfig::new(k, l, EnlargementKind::Random, 3))
            .unwrap()
            .pipeline
    }

    #[test]
    fn two_by_two_pair_counts() {
        let e = data(2, 2);
        let refs: Vec<&Embedding> = e.iter().collect();
        let p = random_pipeline(&e, 3, 32);
        let s = collect_scores(&refs, &p, &ScoreOptions::default()).unwrap();
        assert_eq!((s.genuine().len(), s.imposter().len()), (2, 4));
    }

    #[test]
    fn self_comparisons_score_one() {
        let e = data(3, 2);
        let refs: Vec<&Embedding> = e.iter().collect();
        let p = random_pipeline(&e, 4, 32);
        let opts = ScoreOptions {
            include_self: true,
            ..ScoreOptions::default()
        };
        let c = collect_comparisons(&refs, &p, &opts).unwrap();
        let own: Vec<_> = c.iter().filter(|c| c.probe == c.reference).collect();
        assert_eq!(own.len(), 3);
        assert!(own.iter().all(|c| c.collisions == 0 && c.positive_distance == 0));
    }

    #[test]
    fn single_subject_or_capture_is_rejected() {
        let two = data(2, 3);
        let p = random_pipeline(&data(4, 2), 3, 16);
        let refs: Vec<&Embedding> = two.iter().filter(|e| e.subject_id() == two[0].subject_id()).collect();
        assert!(collect_scores(&refs, &p, &ScoreOptions::default()).is_err());
        let singles = data(3, 1);
        let refs: Vec<&Embedding> = singles.iter().collect();
        assert!(collect_scores(&refs, &p, &ScoreOptions::default()).is_err());
    }

    #[test]
    fn sampled_pairing_limits_imposters() {
        let e = data(6, 3);
        let refs: Vec<&Embedding> = e.iter().collect();
        let p = random_pipeline(&e, 3, 16);
        let opts = ScoreOptions {
            pairing: Pairing::Sampled { imposters: 10, seed: 1 },
            ..ScoreOptions::default()
        };
        let s = collect_scores(&refs, &p, &opts).unwrap();
        assert_eq!((s.genuine().len(), s.imposter().len()), (12, 10));
        assert_eq!(s, collect_scores(&refs, &p, &opts).unwrap());
    }

    #[test]
    fn distances_bound_non_collisions() {
        let e = data(5, 3);
        let refs: Vec<&Embedding> = e.iter().collect();
        let p = random_pipeline(&e, 5, 64);
        for c in collect_comparisons(&refs, &p, &ScoreOptions::default()).unwrap() {
            let non = 64 - c.collisions;
            assert!(64 - c.positive_distance <= non && non <= 64);
        }
    }

    #[test]
    fn binary_bins_match_theory_exactly() {
        let e = data(6, 3);
        let cfg = PipelineConfig::new(2, 32, EnlargementKind::Random, 1);
        let opts = TheoryOptions {
            min_comparisons: 200,
            ..TheoryOptions::default()
        };
        let v = validate_theory(&e, &cfg, &opts).unwrap();
        assert_eq!(v.genuine.tv_exact, 0.0);
        assert_eq!(v.imposter.tv_exact, 0.0);
    }

    #[test]
    fn tiny_validation_warns() {
        let e = data(2, 2);
        let cfg = PipelineConfig::new(3, 16, EnlargementKind::Random, 1);
        let opts = TheoryOptions {
            min_comparisons: 2,
            ..TheoryOptions::default()
        };
        let v = validate_theory(&e, &cfg, &opts).unwrap();
        assert_eq!(v.warnings.len(), 2);
        assert!(v.to_csv().starts_with("class,bin_low"));
    }

    #[test]
    fn verification_is_reproducible() {
        let e = data(10, 3);
        let split = crate::folds::make_subject_disjoint_folds(&e, 2, 4).unwrap();
        let cfg = PipelineConfig::new(3, 64, EnlargementKind::Random, 2);
        let a = run_verification_experiment(&e, &cfg, &split, &ScoreOptions::default()).unwrap();
        let b = run_verification_experiment(&e, &cfg, &split, &ScoreOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.folds.len(), 2);
        for w in a.roc.windows(2) {
            assert!(w[1].fmr <= w[0].fmr && w[1].fnmr >= w[0].fnmr);
        }
    }

    #[test]
    fn sweep_has_one_row_per_point() {
        let e = data(8, 3);
        let split = crate::folds::make_subject_disjoint_folds(&e, 2, 4).unwrap();
        let cfg = PipelineConfig::new(3, 32, EnlargementKind::Random, 2);
        let r = parameter_sweep(&e, &cfg, &[(3, 32)], &split, &ScoreOptions::default(), None).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.to_csv().lines().count(), 2);
        assert!(parameter_sweep(&e, &cfg, &[], &split, &ScoreOptions::default(), None).is_err());
    }
}
