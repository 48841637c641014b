//! Symbolic transformation-driven visual reasoning.
//!
//! Scenes are lists of attributed objects. A model is shown an initial and a
//! final scene and must answer with the transformations that turn one into the
//! other. This crate provides the scene model, the answer protocol, a
//! rule-based tiered reward, evaluation metrics, a synthetic data generator and
//! a toy GRPO learner used to compare reward variants.
//!
//! ```
//! use tvr_core::{parse_response, score_response, AttributeVocab, RewardConfig};
//! use tvr_core::datagen::{generate_dataset, GenSpec};
//!
//! let vocab = AttributeVocab::default();
//! let data = generate_dataset(&GenSpec { count: 1, seed: 3, ..GenSpec::default() }).unwrap();
//! let answer = tvr_core::render_response("", &data[0].truth_seq, &vocab).unwrap();
//! let parsed = parse_response(&answer, &vocab);
//! let score = score_response(&parsed, &data[0], &RewardConfig::default(), &vocab).unwrap();
//! assert_eq!(score.r_acc, 5.0 * data[0].n_hat() as f64);
//! ```

pub mod cli;
pub mod config;
pub mod datagen;
pub mod grpo;
pub mod io;
pub mod metrics;
pub mod protocol;
pub mod reward;
pub mod scene;

pub use datagen::{generate_dataset, GenSpec, TvrInstance};
pub use metrics::{aggregate, evaluate_sample, MetricReport, SampleOutcome};
pub use protocol::{parse_response, render_response, ParsedResponse};
pub use reward::{score_response, RewardBreakdown, RewardConfig, RewardVariant};
pub use scene::{
    apply_sequence, scene_diff, Attribute, AttributeVocab, Scene, SceneObject, Transformation,
    TransformationSequence, ViewTag,
};
