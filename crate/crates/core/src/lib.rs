//! Locally consistent string decomposition into small grammars, plus exact
//! edit-distance sketches (static and rolling) built on top of it.
//!
//! The pipeline: a string is recursively compressed (run-length collapse plus
//! locally consistent pair compression) and split at hash-selected positions,
//! yielding a sequence of small deterministic grammars whose evaluations
//! concatenate back to the input. Two strings processed with the same
//! randomness produce grammar sequences that disagree in at most one grammar
//! per edit, so an off-the-shelf k-mismatch Hamming sketch over fixed-width
//! grammar encodings turns the decomposition into an edit-distance sketch.

pub mod field;
pub mod params;
pub mod symbol;

pub mod cvl;
pub mod hashing;

pub mod decomposition;
pub mod grammar;

pub mod encoding;
pub mod hamming;

pub mod active_update;
pub mod ed_sketch;
pub mod rolling;

pub mod oracle;
pub mod selftest;

pub use params::{derive_params, Params, Profile, Ratio};
pub use symbol::{ord, symbol_from_ord, BaseSymbol, SymbolId, SymbolString};
