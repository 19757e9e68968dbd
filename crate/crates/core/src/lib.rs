//! Question difficulty along two axes: how rare the answer is (obscurity) and
//! how indirectly the question points at it (opacity, measured as angles in an
//! embedding space), plus the statistics used to relate them to difficulty
//! labels.
//!
//! Modules follow the pipeline order:
//!
//! - [`embedding`]: word vector files and the vector math behind every angle.
//! - [`lexicon`]: frequency-per-million tables and obscurity.
//! - [`corpus`]: crossword / Jeopardy parsing, filtering and labeling.
//! - [`metrics`]: opacity models, answer density, question features.
//! - [`analysis`]: null models, group means, tests, bootstrap, KDE.
//! - [`regress`]: standardized OLS model suite.
//! - [`stage`]: JSON-lines stage files with provenance headers.
//! - [`synth`]: deterministic synthetic worlds for fixtures and benchmarks.

pub mod analysis;
pub mod corpus;
pub mod embedding;
mod error;
pub mod lexicon;
pub mod metrics;
pub mod regress;
pub mod rng;
pub mod stage;
pub mod synth;

pub use error::{Error, Result};
