//! Implicit and explicit stereotype probes for chat language models.
//!
//! A run expands sentence templates over stimulus categories into seeded
//! trials, sends them to a model backend, parses the replies and reports a
//! stereotype score per category and phase.

pub mod analysis;
pub mod backends;
pub mod catalog;
pub mod protocol;
pub mod runner;
pub mod seed;
pub mod templates;
