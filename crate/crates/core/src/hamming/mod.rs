//! Hamming-space index: exact kNN over 64-bit codes with a vantage-point
//! tree, and exact 256-bit refinement over a shortlist.

mod snapshot;
mod store;
mod vptree;

use thiserror::Error;

use crate::model::{BinaryCode, Code256, Code64, CodeSpace, ShotId};

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use store::{refine256, CodeStore};
pub use vptree::{Neighbor, SearchStats, VpTree, LEAF_SIZE};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot compare a {left}-bit code with a {right}-bit code")]
    WidthMismatch { left: usize, right: usize },
    #[error("code store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("keyframe ordinal {0} is not in the store")]
    InvalidOrdinal(u32),
    #[error("empty shortlist")]
    EmptyShortlist,
    #[error("no {space} codes for keyframe {shot} position {position}")]
    MissingCodes {
        space: CodeSpace,
        shot: ShotId,
        position: u8,
    },
    #[error("{space} codes for keyframe {shot} position {position} given twice")]
    DuplicateCodes {
        space: CodeSpace,
        shot: ShotId,
        position: u8,
    },
    #[error("record has {found} codes, store holds {expected} codes")]
    WrongSpace { expected: CodeSpace, found: CodeSpace },
    #[error("tree snapshot: {0}")]
    Snapshot(String),
}

#[inline]
pub fn hamming64(a: Code64, b: Code64) -> u32 {
    (a.0 ^ b.0).count_ones()
}

#[inline]
pub fn hamming256(a: &Code256, b: &Code256) -> u32 {
    (a.0[0] ^ b.0[0]).count_ones()
        + (a.0[1] ^ b.0[1]).count_ones()
        + (a.0[2] ^ b.0[2]).count_ones()
        + (a.0[3] ^ b.0[3]).count_ones()
}

/// Number of differing bits between two codes of equal width.
pub fn hamming(a: &BinaryCode, b: &BinaryCode) -> Result<u32, IndexError> {
    if a.width() != b.width() {
        return Err(IndexError::WidthMismatch {
            left: a.width(),
            right: b.width(),
        });
    }
    Ok(a.words().iter().zip(b.words()).map(|(x, y)| (x ^ y).count_ones()).sum())
}
