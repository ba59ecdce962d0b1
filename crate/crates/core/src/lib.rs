//! Morpheme-level statistical alignment with IBM Models 1-4 and
//! non-alignment diagnostics.

pub mod aligner;
pub mod analysis;
pub mod corpus;
pub mod dump;
pub mod ibm;
pub mod parallel;
pub mod synthetic;
