//! Batch analytics for live-stream chat corpora.
//!
//! The crate covers the whole offline pipeline: ingesting broadcast and chat
//! files ([`corpus`]), normalising chat text ([`textprep`]), training subword
//! embeddings and expanding seed lexicons with their misspelled neighbours
//! ([`embed`]), collocation and emoji statistics ([`colloc`]), LDA topic
//! models selected by C_v coherence ([`topics`]), random-forest feature
//! importance and FP-growth topic patterns ([`mining`]), and a synthetic corpus
//! generator ([`synth`]) so every stage can run without access to real data.
//! [`pipeline`] wires the stages together over a run directory.

pub mod binio;
pub mod colloc;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod mining;
pub mod pipeline;
pub mod synth;
pub mod textprep;
pub mod topics;

pub use error::{Error, Result};
