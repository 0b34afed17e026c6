//! Matched molecular pair mining and SMIRKS transformation generation.
//!
//! The crate is organised bottom-up:
//!
//! * [`molgraph`] parses, canonicalizes and writes molecules.
//! * [`fragment`] enumerates single-cut fragmentations.
//! * [`mmp`] indexes fragments and mines matched pairs.
//! * [`smirks`] parses and applies `[*:1]LHS>>[*:1]RHS` rules.
//! * [`model`] holds the tokenizer, transformer and training loop.
//! * [`search`] runs beam search over a trained model.
//! * [`eval`] computes validity, existence, coverage and sweep metrics.

pub mod corpus;
pub mod eval;
pub mod fragment;
pub mod mmp;
pub mod model;
pub mod molgraph;
pub mod search;
pub mod smirks;
