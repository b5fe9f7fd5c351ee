//! Speaker profiling in multiparty conversations.
//!
//! Three stages turn a dialogue into per-speaker persona profiles:
//!
//! 1. [`discovery`] flags the utterances that carry persona information,
//! 2. [`typeid`] assigns each flagged utterance one of five [`PersonaType`]s,
//! 3. [`valueex`] generates the persona value string.
//!
//! [`pipeline`] runs the stages in standalone (gold upstream inputs) or
//! pipeline (predicted upstream inputs) mode and scores them with
//! [`metrics`].

pub mod cli;
pub mod corpus;
pub mod discovery;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod text;
pub mod training;
pub mod typeid;
pub mod valueex;

pub use corpus::{Corpus, Dialogue, PersonaType, Split, TypedInstance, Utterance};
pub use error::{Error, Result};
