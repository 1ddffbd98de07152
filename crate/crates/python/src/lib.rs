//! Python bindings: embeddings, the fitted pipeline, template negation,
//! galleries, score metrics and the negative-distance distribution.

use std::path::PathBuf;

use negface::eval::ScoreSet;
use negface::io::{load_embeddings, save_embeddings, EmbeddingFormat};
use negface::synth::{synthesize as synth, AttributeSpec, SynthConfig};
use negface::{EnlargementKind, PipelineConfig, RandomSource};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: negface::Error) -> PyErr {
    match e {
        negface::Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn source(seed: Option<u64>) -> RandomSource {
    seed.map_or_else(RandomSource::from_entropy, RandomSource::seeded)
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Embedding(negface::Embedding);

#[pymethods]
impl Embedding {
    #[new]
    #[pyo3(signature = (subject_id, capture_id, values, attributes=None))]
    fn new(
        subject_id: String,
        capture_id: String,
        values: Vec<f32>,
        attributes: Option<std::collections::BTreeMap<String, String>>,
    ) -> PyResult<Self> {
        let e = negface::Embedding::new(subject_id, capture_id, values).map_err(err)?;
        Ok(Embedding(e.with_attributes(attributes.unwrap_or_default())))
    }

    #[getter]
    fn subject_id(&self) -> &str {
        self.0.subject_id()
    }

    #[getter]
    fn capture_id(&self) -> &str {
        self.0.capture_id()
    }

    #[getter]
    fn values(&self) -> Vec<f32> {
        self.0.values().to_vec()
    }

    #[getter]
    fn attributes(&self) -> std::collections::BTreeMap<String, String> {
        self.0.attributes().clone()
    }

    fn cosine(&self, other: &Embedding) -> f64 {
        self.0.cosine(&other.0)
    }

    fn __repr__(&self) -> String {
        format!("Embedding({}, {}, dim={})", self.0.subject_id(), self.0.capture_id(), self.0.dim())
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct PositiveTemplate(negface::PositiveTemplate);

#[pymethods]
impl PositiveTemplate {
    #[new]
    fn new(labels: Vec<u8>, k: usize) -> PyResult<Self> {
        negface::PositiveTemplate::anonymous(labels, k).map(PositiveTemplate).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct NegativeTemplate(negface::NegativeTemplate);

#[pymethods]
impl NegativeTemplate {
    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn subject_id(&self) -> &str {
        self.0.subject_id()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(frozen)]
struct Pipeline(negface::Pipeline);

#[pymethods]
impl Pipeline {
    /// Fits the enlargement network and quantizer on `embeddings`.
    #[staticmethod]
    #[pyo3(signature = (embeddings, k=3, length=512, enlargement="trained", epochs=None, seed=0))]
    fn fit(
        embeddings: Vec<Embedding>,
        k: usize,
        length: usize,
        enlargement: &str,
        epochs: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let kind = match enlargement {
            "trained" => EnlargementKind::Trained,
            "random" => EnlargementKind::Random,
            other => return Err(PyValueError::new_err(format!("unknown enlargement {other:?}"))),
        };
        let mut config = PipelineConfig::new(k, length, kind, seed);
        if let Some(e) = epochs {
            config.training.epochs = e;
        }
        let refs: Vec<&negface::Embedding> = embeddings.iter().map(|e| &e.0).collect();
        negface::Pipeline::fit(&refs, &config).map(|f| Pipeline(f.pipeline)).map_err(err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn length(&self) -> usize {
        self.0.length()
    }

    fn positive_template(&self, embedding: &Embedding) -> PyResult<PositiveTemplate> {
        self.0.positive_template(&embedding.0).map(PositiveTemplate).map_err(err)
    }

    #[pyo3(signature = (embedding, seed=None))]
    fn enroll(&self, embedding: &Embedding, seed: Option<u64>) -> PyResult<NegativeTemplate> {
        self.0.enroll(&embedding.0, &mut source(seed)).map(NegativeTemplate).map_err(err)
    }

    /// Empty gallery bound to this pipeline's fingerprints.
    #[pyo3(signature = (seed=None))]
    fn new_gallery(&self, seed: Option<u64>) -> PyResult<Gallery> {
        let policy = seed.map_or(negface::SeedPolicy::Entropy, negface::SeedPolicy::Seeded);
        negface::Gallery::new(
            self.0.k(),
            self.0.length(),
            self.0.quantizer_fingerprint(),
            self.0.model_fingerprint(),
            policy,
        )
        .map(Gallery)
        .map_err(err)
    }
}

#[pyclass]
struct Gallery(negface::Gallery);

#[pymethods]
impl Gallery {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        negface::load_gallery(&path).map(Gallery).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        negface::save_gallery(&self.0, &path).map_err(err)
    }

    /// Stores `template`, returning whether an earlier entry was replaced.
    fn insert(&mut self, template: &NegativeTemplate) -> PyResult<bool> {
        self.0.insert(template.0.clone()).map(|old| old.is_some()).map_err(err)
    }

    fn get(&self, subject_id: &str) -> Option<NegativeTemplate> {
        self.0.get(subject_id).cloned().map(NegativeTemplate)
    }

    fn subjects(&self) -> Vec<String> {
        self.0.entries().map(|(id, _)| id.to_string()).collect()
    }

    /// Scores a probe against every entry, ordered by subject id.
    fn scores(&self, probe: &PositiveTemplate) -> PyResult<Vec<(String, f64)>> {
        Ok(negface::batch_score(&probe.0, &self.0).map_err(err)?.into_iter().collect())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
#[pyo3(signature = (subjects=100, captures=5, dim=64, attribute_strength=0.8, seed=0))]
fn synthesize(
    subjects: usize,
    captures: usize,
    dim: usize,
    attribute_strength: f64,
    seed: u64,
) -> PyResult<Vec<Embedding>> {
    let config = SynthConfig {
        subjects,
        captures_per_subject: captures,
        dim,
        attributes: vec![AttributeSpec::new("gender", 2, attribute_strength)],
        seed,
        ..SynthConfig::default()
    };
    Ok(synth(&config).map_err(err)?.into_iter().map(Embedding).collect())
}

#[pyfunction]
fn load(path: PathBuf) -> PyResult<Vec<Embedding>> {
    let format = EmbeddingFormat::from_path(&path);
    Ok(load_embeddings(&path, format).map_err(err)?.into_iter().map(Embedding).collect())
}

#[pyfunction]
fn save(path: PathBuf, embeddings: Vec<Embedding>) -> PyResult<()> {
    let format = EmbeddingFormat::from_path(&path);
    let inner: Vec<negface::Embedding> = embeddings.into_iter().map(|e| e.0).collect();
    save_embeddings(&path, &inner, format).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (template, seed=None))]
fn negate(template: &PositiveTemplate, seed: Option<u64>) -> PyResult<NegativeTemplate> {
    negface::negate(&template.0, &mut source(seed)).map(NegativeTemplate).map_err(err)
}

#[pyfunction]
fn nhd(positive: &PositiveTemplate, negative: &NegativeTemplate) -> PyResult<f64> {
    negface::nhd(&positive.0, &negative.0).map_err(err)
}

#[pyfunction]
fn positive_hd(a: &PositiveTemplate, b: &PositiveTemplate) -> PyResult<usize> {
    negface::positive_hd(&a.0, &b.0).map_err(err)
}

/// Distribution of the negative-domain distance as `(d_prime, probability)` pairs.
#[pyfunction]
fn pmf(length: usize, distance: usize, k: usize) -> PyResult<Vec<(usize, f64)>> {
    Ok(negface::theory::pmf(length, distance, k).map_err(err)?.iter().collect())
}

#[pyfunction]
fn eer(genuine: Vec<f64>, imposter: Vec<f64>) -> PyResult<f64> {
    let s = ScoreSet::new(genuine, imposter).map_err(err)?;
    negface::eval::eer(&s).map_err(err)
}

#[pyfunction]
fn fnmr_at_fmr(genuine: Vec<f64>, imposter: Vec<f64>, target: f64) -> PyResult<f64> {
    let s = ScoreSet::new(genuine, imposter).map_err(err)?;
    negface::eval::fnmr_at_fmr(&s, target).map_err(err)
}

#[pymodule]
fn pynegface(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Embedding>()?;
    m.add_class::<PositiveTemplate>()?;
    m.add_class::<NegativeTemplate>()?;
    m.add_class::<Pipeline>()?;
    m.add_class::<Gallery>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(save, m)?)?;
    m.add_function(wrap_pyfunction!(negate, m)?)?;
    m.add_function(wrap_pyfunction!(nhd, m)?)?;
    m.add_function(wrap_pyfunction!(positive_hd, m)?)?;
    m.add_function(wrap_pyfunction!(pmf, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(fnmr_at_fmr, m)?)?;
    Ok(())
}
