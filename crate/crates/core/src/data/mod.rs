//! Synthetic labeled corpora, corpus files and tracking-log ingestion.

mod atc;
mod corpus;
mod synthetic;

pub use atc::{ingest_atc, AtcCorpus, AtcSpec};
pub use corpus::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use synthetic::{generate_synthetic, GroupTemplate, Region, ScenarioSpec, Waypoint};
