//! Enrolment/probe pipeline: enlarge, discretize and (for references) negate.

use ndarray::{Array2, Axis};

use crate::codec::negate;
use crate::enlargement::{
    embedding_matrix, random_enlargement, train_enlargement, Architecture, EnlargementNetwork, TrainingConfig,
};
use crate::error::{Error, Result};
use crate::model::{Embedding, Fingerprint, NegativeTemplate, PositiveTemplate};
use crate::quantizer::Quantizer;
use crate::rng::{derive_seed, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnlargementKind {
    Trained,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub length: usize,
    pub enlargement: EnlargementKind,
    /// Hidden widths of a trained network; `None` uses `[2d, 4d]`.
    pub hidden: Option<Vec<usize>>,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(k: usize, length: usize, enlargement: EnlargementKind, seed: u64) -> Self {
        PipelineConfig {
            k,
            length,
            enlargement,
            hidden: None,
            training: TrainingConfig::default(),
            seed,
        }
    }

    /// Trained 256/512/4096 network; expects 128-dimensional embeddings.
    pub fn paper(k: usize, seed: u64) -> Self {
        PipelineConfig {
            hidden: Some(Architecture::paper().hidden),
            ..Self::new(k, Architecture::paper().output_dim, EnlargementKind::Trained, seed)
        }
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        match &self.hidden {
            Some(hidden) => Architecture {
                input_dim,
                hidden: hidden.clone(),
                output_dim: self.length,
            },
            None => Architecture::desk(input_dim, self.length),
        }
    }
}

/// A fitted enlargement network and quantizer.
#[derive(Debug, Clone)]
pub struct Pipeline {
    network: EnlargementNetwork,
    quantizer: Quantizer,
}

#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub pipeline: Pipeline,
    /// Per-epoch training loss; empty for random projections.
    pub loss_history: Vec<f64>,
}

impl Pipeline {
    pub fn new(network: EnlargementNetwork, quantizer: Quantizer) -> Result<Self> {
        if network.output_dim() != quantizer.len() {
            return Err(Error::MetadataMismatch(format!(
                "network produces {} features but quantizer expects {}",
                network.output_dim(),
                quantizer.len()
            )));
        }
        Ok(Pipeline { network, quantizer })
    }

    /// Builds the enlargement and fits the quantizer on training subjects only.
    pub fn fit(train: &[&Embedding], config: &PipelineConfig) -> Result<FittedPipeline> {
        let d = embedding_matrix(train.iter().copied())?.ncols();
        if train.is_empty() || d == 0 {
            return Err(Error::insufficient("pipeline needs non-empty training embeddings"));
        }
        let (network, loss_history) = match config.enlargement {
            EnlargementKind::Random => (
                random_enlargement(d, config.length, derive_seed(config.seed, "random-enlargement", 0))?,
                Vec::new(),
            ),
            EnlargementKind::Trained => {
                let training = TrainingConfig {
                    seed: derive_seed(config.seed, "train-enlargement", config.training.seed),
                    ..config.training.clone()
                };
                let trained = train_enlargement(train, &config.architecture(d), &training)?;
                (trained.network, trained.loss_history)
            }
        };
        let enlarged = network.enlarge_all(train.iter().copied())?;
        let quantizer = Quantizer::fit_matrix(&enlarged, config.k)?;
        Ok(FittedPipeline {
            pipeline: Pipeline { network, quantizer },
            loss_history,
        })
    }

    pub fn network(&self) -> &EnlargementNetwork {
        &self.network
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn k(&self) -> usize {
        self.quantizer.k()
    }

    pub fn length(&self) -> usize {
        self.quantizer.len()
    }

    pub fn model_fingerprint(&self) -> Fingerprint {
        self.network.fingerprint()
    }

    pub fn quantizer_fingerprint(&self) -> Fingerprint {
        self.quantizer.fingerprint()
    }

    pub fn positive_templates(&self, embeddings: &[&Embedding]) -> Result<Vec<PositiveTemplate>> {
        if embeddings.is_empty() {
            return Ok(Vec::new());
        }
        let enlarged: Array2<f64> = self.network.enlarge_all(embeddings.iter().copied())?;
        enlarged
            .axis_iter(Axis(0))
            .zip(embeddings)
            .map(|(row, e)| {
                let labels = self.quantizer.labels(row.as_slice().expect("standard layout"))?;
                PositiveTemplate::new(labels, self.k(), e.subject_id(), e.capture_id())
            })
            .collect()
    }

    pub fn positive_template(&self, embedding: &Embedding) -> Result<PositiveTemplate> {
        Ok(self.positive_templates(&[embedding])?.remove(0))
    }

    pub fn enroll(&self, embedding: &Embedding, rng: &mut RandomSource) -> Result<NegativeTemplate> {
        negate(&self.positive_template(embedding)?, rng)
    }
}
