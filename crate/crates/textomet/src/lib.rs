//! Corpus analytics for "starred" textometric corpora.
//!
//! The crate covers two converging pipelines:
//!
//! * textometric analysis: lexical specificity over a corpus partition
//!   ([`specificity`]) and descending hierarchical classification of context
//!   units ([`reinert`]);
//! * label transfer: three text classifiers combined by majority vote
//!   ([`classify`]), evaluated with stratified splits ([`eval`]), whose
//!   predictions are injected back into the corpus as starred pseudo-variables
//!   ([`corpus::inject_variables`]) so they can illustrate the textometric
//!   classes.
//!
//! Everything is deterministic for a fixed seed: no global RNG, no
//! platform-dependent iteration order in any output.

pub mod classify;
pub mod corpus;
pub mod eval;
pub mod fixture;
pub mod prep;
pub mod reinert;
pub mod rng;
pub mod specificity;
