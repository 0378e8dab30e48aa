//! Retrieval engine for shot-segmented video archives.
//!
//! Shots are represented by five keyframes. Each keyframe carries a 64-bit
//! and a 256-bit binary code in one or two code spaces (semantic and
//! low-level). Similarity queries take a 64-bit kNN shortlist from a
//! vantage-point tree, re-rank it with 256-bit distances and fold the
//! keyframes into shots. Concept and person queries read probability-ranked
//! posting lists; text queries rank recognized words by edit-distance
//! similarity. [`eval`] scores any of these rankings with average precision.
//!
//! Modules:
//!
//! - [`model`]: shots, keyframes, codes, annotations, ranked results
//! - [`ingest`]: file loaders and the seeded hyperplane encoder
//! - [`hamming`]: Hamming distance, code store, VP-tree, tree snapshots
//! - [`similarity`]: two-stage search and shot aggregation
//! - [`lexical`]: posting lists, Levenshtein distance, text search
//! - [`eval`]: AP / mAP and run/judgment files
//! - [`bundle`]: on-disk archive bundles
//! - [`bench`]: synthetic-corpus latency benchmark

pub mod bench;
pub mod bundle;
pub mod eval;
pub mod hamming;
pub mod ingest;
pub mod lexical;
pub mod model;
pub mod similarity;

pub use bundle::{ArchiveBundle, BundleError};
pub use model::{QueryKind, RankedEntry, RankedResult, ShotId, ShotRef, ShotTable};
