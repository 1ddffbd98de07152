//! Verification metrics and the experiment runners that tie the pipeline,
//! the score theory and the attack harness together.

mod experiment;
mod metrics;

pub use experiment::{
    collect_comparisons, collect_cosine_scores, collect_scores, parameter_sweep,
    run_verification_experiment, validate_theory, ClassDivergence, Comparison, FoldMetrics,
    Pairing, ScoreOptions, SweepAttack, SweepReport, SweepRow, TheoryOptions, TheoryValidation,
    VerificationReport,
};
pub use metrics::{eer, eer_point, fnmr_at_fmr, fnmr_at_fmr_point, operating_points, roc, OperatingPoint, ScoreSet};
