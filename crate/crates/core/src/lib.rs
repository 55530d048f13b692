//! Medication mention extraction and context classification for clinical
//! notes: corpus handling, a small transformer encoder trained from scratch,
//! task models, an end-to-end pipeline and challenge-style scoring.

pub mod context;
pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod ner;
pub mod pipeline;
pub mod preproc;
pub mod scalar;
pub mod synth;

pub use error::ModelError;

pub type Model32 = encoder::EncoderModel<f32>;
pub type Model64 = encoder::EncoderModel<f64>;
pub type NerBundle32 = ner::NerModelBundle<f32>;
pub type NerBundle64 = ner::NerModelBundle<f64>;
pub type Classifiers32 = context::ClassifierBundle<f32>;
pub type Classifiers64 = context::ClassifierBundle<f64>;
pub type Pipeline32 = pipeline::PipelineBundle<f32>;
pub type Pipeline64 = pipeline::PipelineBundle<f64>;
/// Exact metric values used by the scoring oracle.
pub type ExactMetric = eval::oracle::Exact;
