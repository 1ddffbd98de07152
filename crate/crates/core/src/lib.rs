//! Negative face templates: irreversible, unlinkable face-embedding
//! protection by enlargement, per-feature quantile binning and
//! complement-set negation, with the matching closed-form score theory,
//! verification metrics and soft-biometric attack harness.

pub mod attack;
mod bytes;
pub mod codec;
pub mod enlargement;
pub mod error;
pub mod eval;
pub mod folds;
pub mod gallery;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod quantizer;
pub mod rng;
pub mod synth;
pub mod theory;

pub use codec::{batch_score, collisions, negate, nhd, positive_hd};
pub use error::{Error, Result};
pub use gallery::{load_gallery, save_gallery, Gallery, GalleryMetadata, SeedPolicy};
pub use model::{Embedding, EnlargedEmbedding, Fingerprint, NegativeTemplate, PositiveTemplate};
pub use pipeline::{EnlargementKind, Pipeline, PipelineConfig};
pub use quantizer::{discretize, fit_quantizer, Quantizer};
pub use rng::RandomSource;
