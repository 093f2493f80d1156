//! Cue-coverage screening toolkit for CHAT picture-description transcripts.
//!
//! Stages: [`chat`] parsing, [`cue`] analysis, [`prompt`] compilation,
//! [`gateway`] classification against a chat endpoint (or the bundled mock),
//! native [`baseline`] models, [`eval`] metrics, and the [`synth`] corpus
//! generator that stands in for restricted clinical data.

pub mod baseline;
pub mod chat;
pub mod cli;
pub mod corpus;
pub mod cue;
pub mod eval;
pub mod gateway;
pub mod io;
pub mod prompt;
pub mod synth;
