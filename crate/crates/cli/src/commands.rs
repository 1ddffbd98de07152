use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use negface::attack::{
    default_attackers, export_attack_dataset, representations, attribute_classes, run_attack, Attacker,
    KnnAttacker, LogRegAttacker,
};
use negface::enlargement::{EnlargementNetwork, TrainingConfig};
use negface::eval::{
    collect_scores, eer_point, fnmr_at_fmr, parameter_sweep, run_verification_experiment, validate_theory,
    Pairing, ScoreOptions, SweepAttack, TheoryOptions,
};
use negface::folds::make_subject_disjoint_folds;
use negface::io::{encode_binary, encode_csv, load_embeddings, EmbeddingFormat};
use negface::synth::{synthesize, AttributeSpec, SynthConfig};
use negface::theory::{pmf, pmf_csv, transform_score_distribution};
use negface::{
    negate, nhd, Embedding, EnlargementKind, Gallery, Pipeline, PipelineConfig, Quantizer, RandomSource,
    SeedPolicy,
};
use rand::RngCore;

use crate::exit;
use crate::manifest::{manifest_path, write_atomic, RunManifest};
use crate::{
    AttackArgs, Command, Enlargement, EnrollArgs, EvalArgs, PairingKind, PipelineArgs, Preset, SweepArgs,
    SynthArgs, TheoryArgs, TrainArgs, VerifyArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(std::io::Error),
    Lib(negface::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use negface::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) | CliError::Lib(E::Io(_)) => exit::IO,
            CliError::Lib(E::NonFiniteLoss { .. }) => exit::COMPUTATION,
            CliError::Lib(_) => exit::VALIDATION,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<negface::Error> for CliError {
    fn from(e: negface::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Enroll(a) => enroll(a),
        Command::Verify(a) => verify(a),
        Command::Eval(a) => eval(a),
        Command::Attack(a) => attack(a),
        Command::Theory(a) => theory(a),
        Command::Sweep(a) => sweep(a),
    }
}

/// Relative paths resolve against `NEGFACE_DATA_DIR` when it is set.
fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os("NEGFACE_DATA_DIR") {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// The given seed, or a fresh one from OS entropy (recorded in the manifest).
fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| RandomSource::from_entropy().next_u64())
}

fn load(path: &Path, manifest: &mut RunManifest) -> Result<Vec<Embedding>> {
    let embeddings = load_embeddings(path, EmbeddingFormat::from_path(path))?;
    manifest.input(path)?;
    Ok(embeddings)
}

fn write_output(path: &Path, data: &[u8], manifest: &mut RunManifest) -> Result<()> {
    write_atomic(path, data)?;
    manifest.output(path)?;
    Ok(())
}

fn output_dir(path: &Path) -> Result<PathBuf> {
    let dir = resolve(path);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn pipeline_config(args: &PipelineArgs, seed: u64, manifest: &mut RunManifest) -> PipelineConfig {
    let mut config = match args.preset {
        Some(Preset::Paper) => {
            if args.big_l != 512 && args.big_l != 4096 {
                log::warn!("--preset paper fixes L=4096; ignoring --big-l {}", args.big_l);
            }
            PipelineConfig::paper(args.k, seed)
        }
        None => {
            let kind = match args.enlargement {
                Enlargement::Trained => EnlargementKind::Trained,
                Enlargement::Random => EnlargementKind::Random,
            };
            let mut c = PipelineConfig::new(args.k, args.big_l, kind, seed);
            c.hidden = args.hidden.clone();
            c
        }
    };
    config.training = TrainingConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        ..TrainingConfig::default()
    };
    manifest.config("k", config.k);
    manifest.config("L", config.length);
    manifest.config("enlargement", format!("{:?}", config.enlargement).to_lowercase());
    manifest.config("hidden", &config.hidden);
    manifest.config("preset", args.preset.map(|_| "paper"));
    manifest.config("epochs", config.training.epochs);
    manifest.config("batch_size", config.training.batch_size);
    manifest.config("learning_rate", config.training.learning_rate);
    manifest.config("rho", config.training.rho);
    manifest.config("epsilon", config.training.epsilon);
    manifest.config("dropout", config.training.dropout);
    manifest.seed("pipeline", Some(seed));
    config
}

fn check_preset_input(args: &PipelineArgs, embeddings: &[Embedding]) -> Result<()> {
    if args.preset == Some(Preset::Paper) {
        if let Some(e) = embeddings.first() {
            if e.dim() != 128 {
                return Err(CliError::Usage(format!(
                    "--preset paper expects 128-dimensional embeddings, got {}",
                    e.dim()
                )));
            }
        }
    }
    Ok(())
}

fn parse_attribute(spec: &str) -> Result<AttributeSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("attribute {spec:?} is not name:classes:strength"));
    if parts.len() != 3 || parts[0].is_empty() {
        return Err(bad());
    }
    Ok(AttributeSpec::new(
        parts[0],
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::new("synth");
    let seed = seed_or_fresh(args.seed);
    let config = SynthConfig {
        subjects: args.subjects,
        captures_per_subject: args.captures,
        dim: args.dim,
        sigma_within: args.sigma_within,
        sigma_between: args.sigma_between,
        attribute_scale: args.attribute_scale,
        attributes: args.attributes.iter().map(|s| parse_attribute(s)).collect::<Result<_>>()?,
        seed,
    };
    if config.subjects < 2 {
        return Err(CliError::Usage("--subjects must be >= 2".into()));
    }
    manifest.config("subjects", config.subjects);
    manifest.config("captures", config.captures_per_subject);
    manifest.config("dim", config.dim);
    manifest.config("sigma_within", config.sigma_within);
    manifest.config("sigma_between", config.sigma_between);
    manifest.config("attribute_scale", config.attribute_scale);
    manifest.config("attributes", &args.attributes);
    manifest.seed("synth", Some(seed));
    let embeddings = synthesize(&config)?;
    let output = resolve(&args.output);
    let bytes = match EmbeddingFormat::from_path(&output) {
        EmbeddingFormat::Csv => encode_csv(&embeddings)?,
        EmbeddingFormat::Binary => encode_binary(&embeddings)?,
    };
    write_output(&output, &bytes, &mut manifest)?;
    manifest.finish(&manifest_path(&output))?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train");
    let seed = seed_or_fresh(args.seed);
    let embeddings = load(&resolve(&args.input), &mut manifest)?;
    check_preset_input(&args.pipeline, &embeddings)?;
    let config = pipeline_config(&args.pipeline, seed, &mut manifest);
    let refs: Vec<&Embedding> = embeddings.iter().collect();
    let fitted = Pipeline::fit(&refs, &config)?;
    let dir = output_dir(&args.output)?;
    let p = &fitted.pipeline;
    write_output(&dir.join("model.nenl"), &p.network().to_bytes(), &mut manifest)?;
    write_output(&dir.join("quantizer.nqnt"), &p.quantizer().to_bytes(), &mut manifest)?;
    if !fitted.loss_history.is_empty() {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in fitted.loss_history.iter().enumerate() {
            csv += &format!("{i},{l}\n");
        }
        write_output(&dir.join("loss.csv"), csv.as_bytes(), &mut manifest)?;
    }
    manifest.fingerprint("model", &p.model_fingerprint());
    manifest.fingerprint("quantizer", &p.quantizer_fingerprint());
    manifest.finish(&manifest_path(&dir))?;
    Ok(())
}

fn load_pipeline(model: &Path, quantizer: &Path, manifest: &mut RunManifest) -> Result<Pipeline> {
    let (model, quantizer) = (resolve(model), resolve(quantizer));
    let network = EnlargementNetwork::load(&model)?;
    let quantizer_value = Quantizer::load(&quantizer)?;
    manifest.input(&model)?;
    manifest.input(&quantizer)?;
    let pipeline = Pipeline::new(network, quantizer_value)?;
    manifest.fingerprint("model", &pipeline.model_fingerprint());
    manifest.fingerprint("quantizer", &pipeline.quantizer_fingerprint());
    Ok(pipeline)
}

/// One reference per subject: the capture with the smallest capture id.
fn enrolment_captures(embeddings: &[Embedding]) -> BTreeMap<&str, &Embedding> {
    let mut refs: BTreeMap<&str, &Embedding> = BTreeMap::new();
    for e in embeddings {
        refs.entry(e.subject_id())
            .and_modify(|r| {
                if e.capture_id() < r.capture_id() {
                    *r = e;
                }
            })
            .or_insert(e);
    }
    refs
}

fn enroll(args: EnrollArgs) -> Result<()> {
    let mut manifest = RunManifest::new("enroll");
    let pipeline = load_pipeline(&args.model, &args.quantizer, &mut manifest)?;
    let embeddings = load(&resolve(&args.input), &mut manifest)?;
    let policy = args.seed.map_or(SeedPolicy::Entropy, SeedPolicy::Seeded);
    manifest.seed("negation", args.seed);
    let mut gallery = match &args.base_gallery {
        Some(base) => {
            let base = resolve(base);
            let g = Gallery::from_bytes(&fs::read(&base)?)?;
            g.check_fingerprints(&pipeline.quantizer_fingerprint(), &pipeline.model_fingerprint())?;
            manifest.input(&base)?;
            g
        }
        None => Gallery::new(
            pipeline.k(),
            pipeline.length(),
            pipeline.quantizer_fingerprint(),
            pipeline.model_fingerprint(),
            policy,
        )?,
    };
    let refs = enrolment_captures(&embeddings);
    let captures: Vec<&Embedding> = refs.values().copied().collect();
    for t in pipeline.positive_templates(&captures)? {
        let mut rng = match args.seed {
            Some(seed) => RandomSource::seeded_stream(seed, subject_stream(t.subject_id())),
            None => RandomSource::from_entropy(),
        };
        if gallery.insert(negate(&t, &mut rng)?)?.is_some() {
            log::warn!("replaced the existing entry of subject {}", t.subject_id());
        }
    }
    manifest.config("subjects_enrolled", captures.len());
    let output = resolve(&args.output);
    write_output(&output, &gallery.to_bytes(), &mut manifest)?;
    manifest.finish(&manifest_path(&output))?;
    Ok(())
}

/// Stable per-subject stream index, so a subject's negation does not depend
/// on which other subjects are enrolled alongside it.
fn subject_stream(subject: &str) -> u64 {
    let digest = negface::Fingerprint::of(subject.as_bytes());
    u64::from_le_bytes(digest.as_bytes()[..8].try_into().expect("8 bytes"))
}

fn verify(args: VerifyArgs) -> Result<()> {
    let mut manifest = RunManifest::new("verify");
    let pipeline = load_pipeline(&args.model, &args.quantizer, &mut manifest)?;
    let gallery_path = resolve(&args.gallery);
    let gallery = Gallery::from_bytes(&fs::read(&gallery_path)?)?;
    manifest.input(&gallery_path)?;
    gallery.check_fingerprints(&pipeline.quantizer_fingerprint(), &pipeline.model_fingerprint())?;
    let probes = load(&resolve(&args.input), &mut manifest)?;

    let threshold = match (args.threshold, &args.calibration) {
        (Some(t), _) => t,
        (None, Some(calibration)) => {
            let seed = seed_or_fresh(args.seed);
            manifest.seed("calibration", Some(seed));
            let data = load(&resolve(calibration), &mut manifest)?;
            let refs: Vec<&Embedding> = data.iter().collect();
            let options = ScoreOptions {
                seed,
                ..ScoreOptions::default()
            };
            eer_point(&collect_scores(&refs, &pipeline, &options)?)?.threshold
        }
        (None, None) => {
            return Err(CliError::Usage(
                "verify needs --threshold or --calibration embeddings".into(),
            ))
        }
    };
    manifest.config("threshold", threshold);

    let refs: Vec<&Embedding> = probes.iter().collect();
    let templates = pipeline.positive_templates(&refs)?;
    let mut csv = String::from("subject_id,capture_id,score,decision\n");
    for t in &templates {
        match gallery.get(t.subject_id()) {
            Some(reference) => {
                let score = nhd(t, reference)?;
                let decision = if score >= threshold { "accept" } else { "reject" };
                csv += &format!("{},{},{score},{decision}\n", t.subject_id(), t.capture_id());
            }
            None => csv += &format!("{},{},,not-enrolled\n", t.subject_id(), t.capture_id()),
        }
    }
    let output = resolve(&args.output);
    write_output(&output, csv.as_bytes(), &mut manifest)?;
    manifest.finish(&manifest_path(&output))?;
    Ok(())
}

fn pairing(kind: PairingKind, imposters: usize, seed: u64) -> Pairing {
    match kind {
        PairingKind::All => Pairing::AllPairs,
        PairingKind::Sampled => Pairing::Sampled { imposters, seed },
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval");
    let seed = seed_or_fresh(args.seed);
    let embeddings = load(&resolve(&args.input), &mut manifest)?;
    check_preset_input(&args.pipeline, &embeddings)?;
    let config = pipeline_config(&args.pipeline, seed, &mut manifest);
    let split = make_subject_disjoint_folds(&embeddings, args.folds, seed)?;
    let options = ScoreOptions {
        pairing: pairing(args.pairing, args.imposters, seed),
        include_self: false,
        seed,
    };
    manifest.config("folds", args.folds);
    manifest.config("pairing", options.pairing.describe());
    let report = run_verification_experiment(&embeddings, &config, &split, &options)?;

    let mut text = report.to_table();
    if let Some(target) = args.target_fmr {
        let f = fnmr_at_fmr(&report.pooled, target)?;
        text += &format!("pooled FNMR@FMR={target}: {:.3}%\n", 100.0 * f);
        manifest.config("target_fmr", target);
    }
    let dir = output_dir(&args.output)?;
    write_output(&dir.join("report.txt"), text.as_bytes(), &mut manifest)?;
    write_output(&dir.join("folds.csv"), report.folds_csv().as_bytes(), &mut manifest)?;
    write_output(&dir.join("roc.csv"), report.roc_csv().as_bytes(), &mut manifest)?;
    print!("{text}");
    manifest.finish(&manifest_path(&dir))?;
    Ok(())
}

fn attackers(neighbors: usize) -> Vec<Box<dyn Attacker>> {
    vec![
        Box::new(LogRegAttacker::default()),
        Box::new(KnnAttacker { n_neighbors: neighbors }),
    ]
}

fn attack(args: AttackArgs) -> Result<()> {
    let mut manifest = RunManifest::new("attack");
    let seed = seed_or_fresh(args.seed);
    let embeddings = load(&resolve(&args.input), &mut manifest)?;
    check_preset_input(&args.pipeline, &embeddings)?;
    let config = pipeline_config(&args.pipeline, seed, &mut manifest);
    let split = make_subject_disjoint_folds(&embeddings, args.folds, seed)?;
    manifest.config("folds", args.folds);
    manifest.config("attribute", &args.attribute);
    manifest.config("neighbors", args.neighbors);
    let report = run_attack(&embeddings, &config, &args.attribute, &split, &attackers(args.neighbors), seed)?;

    let dir = output_dir(&args.output)?;
    let table = report.to_table();
    write_output(&dir.join("report.txt"), table.as_bytes(), &mut manifest)?;
    write_output(&dir.join("attack.csv"), report.to_csv().as_bytes(), &mut manifest)?;
    print!("{table}");
    if let Some(export) = &args.export {
        let export = output_dir(export)?;
        let refs: Vec<&Embedding> = embeddings.iter().collect();
        let pipeline = Pipeline::fit(&refs, &config)?.pipeline;
        let classes = attribute_classes(&embeddings, &args.attribute)?;
        for (rep, data) in representations(&refs, &pipeline, &args.attribute, &classes, seed)? {
            let path = export.join(format!("{}.csv", rep.name()));
            export_attack_dataset(&data, &args.attribute, &path)?;
            manifest.output(&path)?;
        }
    }
    manifest.finish(&manifest_path(&dir))?;
    Ok(())
}

fn read_distances(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| {
                CliError::Lib(negface::Error::Parse {
                    location: format!("{}:{}", path.display(), i + 1),
                    message: format!("{l:?} is not a distance"),
                })
            })
        })
        .collect()
}

fn theory(args: TheoryArgs) -> Result<()> {
    let mut manifest = RunManifest::new("theory");
    let (l, k) = (args.pipeline.big_l, args.pipeline.k);
    manifest.config("L", l);
    manifest.config("k", k);
    let (csv, summary) = if let Some(d) = args.distance {
        manifest.config("D", d);
        (pmf_csv(&pmf(l, d, k)?), None)
    } else if let Some(path) = &args.distances {
        let path = resolve(path);
        let distances = read_distances(&path)?;
        manifest.input(&path)?;
        (transform_score_distribution(&distances, l, k)?.to_csv(), None)
    } else if let Some(input) = &args.input {
        let seed = seed_or_fresh(args.seed);
        let embeddings = load(&resolve(input), &mut manifest)?;
        check_preset_input(&args.pipeline, &embeddings)?;
        let config = pipeline_config(&args.pipeline, seed, &mut manifest);
        let options = TheoryOptions {
            min_comparisons: args.comparisons,
            bins: args.bins,
            seed,
            ..TheoryOptions::default()
        };
        manifest.config("comparisons", args.comparisons);
        manifest.config("bins", args.bins);
        manifest.seed("theory", Some(seed));
        let v = validate_theory(&embeddings, &config, &options)?;
        (v.to_csv(), Some(v.summary()))
    } else {
        return Err(CliError::Usage(
            "theory needs --distance, --distances or --input".into(),
        ));
    };
    match &args.output {
        Some(out) => {
            let out = resolve(out);
            write_output(&out, csv.as_bytes(), &mut manifest)?;
            if let Some(s) = summary {
                print!("{s}");
            }
            manifest.finish(&manifest_path(&out))?;
        }
        None => {
            print!("{csv}");
            if let Some(s) = summary {
                eprint!("{s}");
            }
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sweep");
    let seed = seed_or_fresh(args.seed);
    let embeddings = load(&resolve(&args.input), &mut manifest)?;
    let config = pipeline_config(&args.pipeline, seed, &mut manifest);
    let split = make_subject_disjoint_folds(&embeddings, args.folds, seed)?;
    let grid: Vec<(usize, usize)> = args
        .k_values
        .iter()
        .flat_map(|&k| args.l_values.iter().map(move |&l| (k, l)))
        .collect();
    manifest.config("grid_k", &args.k_values);
    manifest.config("grid_L", &args.l_values);
    manifest.config("folds", args.folds);
    manifest.config("attribute", &args.attribute);
    let options = ScoreOptions {
        seed,
        ..ScoreOptions::default()
    };
    let attackers = default_attackers();
    let attack = args.attribute.as_deref().map(|attribute| SweepAttack {
        attribute,
        attackers: &attackers,
        seed,
    });
    let report = parameter_sweep(&embeddings, &config, &grid, &split, &options, attack.as_ref())?;
    let output = resolve(&args.output);
    write_output(&output, report.to_csv().as_bytes(), &mut manifest)?;
    manifest.finish(&manifest_path(&output))?;
    Ok(())
}
