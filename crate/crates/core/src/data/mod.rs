//! Datasets: the canonical record types, format adapters, sampling and the
//! synthetic corpus generator.

pub mod adressa;
pub mod mind;
pub mod sampling;
pub mod synth;
mod types;

pub use adressa::{ingest_adressa, AdressaOptions};
pub use mind::{export_mind, ingest_mind, parse_behaviors, BehaviorRecord};
pub use sampling::{few_shot_sample, sample_negatives};
pub use synth::{generate_synthetic_bilingual, SynthConfig, SyntheticCorpus};
pub use types::*;
