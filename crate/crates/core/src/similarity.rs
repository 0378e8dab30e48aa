//! Two-stage similarity search.
//!
//! Each active code space contributes a 64-bit kNN shortlist. The union of
//! the shortlists is re-ranked by width-normalized 256-bit distances blended
//! across spaces, then keyframes are folded into shots by minimum distance.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::hamming::{refine256, CodeStore, IndexError, VpTree};
use crate::ingest::{FeatureVector, HyperplaneEncoder, IngestError};
use crate::model::{Code256, Code64, CodeSpace, QueryKind, RankedEntry, RankedResult, ShotId, ShotTable};

pub const DEFAULT_SHORTLIST: usize = 10_000;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("alpha < 1 needs low-level query codes")]
    MissingLowLevelCodes,
    #[error("alpha < 1 needs a low-level index, and this archive has none")]
    MissingLowLevelIndex,
    #[error("no encoder configured for the {0} code space")]
    MissingEncoder(CodeSpace),
    #[error("k and shortlist size must be at least 1")]
    ZeroK,
    #[error("unknown shot {0}")]
    UnknownShot(ShotId),
    #[error("shot {shot} has no keyframe at position {position}")]
    UnknownPosition { shot: ShotId, position: u8 },
    #[error(transparent)]
    Encode(#[from] IngestError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// A code store with its tree.
#[derive(Debug, Clone)]
pub struct SpaceIndex {
    pub store: CodeStore,
    pub tree: VpTree,
}

impl SpaceIndex {
    pub fn build(store: CodeStore, seed: u64) -> Result<Self, IndexError> {
        let tree = VpTree::build(&store, seed)?;
        Ok(Self { store, tree })
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    pub shots: Arc<ShotTable>,
    pub semantic: SpaceIndex,
    pub low_level: Option<SpaceIndex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryCodes {
    pub code64: Code64,
    pub code256: Code256,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityQuery {
    pub semantic: QueryCodes,
    pub low_level: Option<QueryCodes>,
    /// Weight of the semantic space; `1 - alpha` goes to the low-level space.
    pub alpha: f64,
    pub k_shots: usize,
    pub shortlist_size: usize,
}

impl SimilarityQuery {
    pub fn semantic(codes: QueryCodes, k_shots: usize) -> Self {
        Self {
            semantic: codes,
            low_level: None,
            alpha: 1.0,
            k_shots,
            shortlist_size: DEFAULT_SHORTLIST,
        }
    }

    fn validate(&self) -> Result<(), SearchError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SearchError::InvalidAlpha(self.alpha));
        }
        if self.alpha < 1.0 && self.low_level.is_none() {
            return Err(SearchError::MissingLowLevelCodes);
        }
        if self.k_shots == 0 || self.shortlist_size == 0 {
            return Err(SearchError::ZeroK);
        }
        Ok(())
    }
}

/// One keyframe in a blended ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeHit {
    pub ordinal: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotScore {
    pub shot: ShotId,
    pub best_distance: f64,
    pub score: f64,
}

/// Width-normalized blend of the two 256-bit distances.
pub fn blend(alpha: f64, semantic: u32, low_level: u32) -> f64 {
    let sem = semantic as f64 / 256.0;
    let low = low_level as f64 / 256.0;
    if alpha == 1.0 {
        sem
    } else if alpha == 0.0 {
        low
    } else {
        alpha * sem + (1.0 - alpha) * low
    }
}

/// Converts a distance into a score in (0, 1].
pub fn distance_score(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

fn ascending(a: &KeyframeHit, b: &KeyframeHit) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.ordinal.cmp(&b.ordinal))
}

/// Coarse 64-bit shortlist per active space, then blended 256-bit refinement.
/// Returns keyframes by ascending blended distance, ties by ordinal.
pub fn two_stage_search(index: &SimilarityIndex, query: &SimilarityQuery) -> Result<Vec<KeyframeHit>, SearchError> {
    query.validate()?;
    let use_semantic = query.alpha > 0.0;
    let low = if query.alpha < 1.0 {
        let idx = index.low_level.as_ref().ok_or(SearchError::MissingLowLevelIndex)?;
        let codes = query.low_level.ok_or(SearchError::MissingLowLevelCodes)?;
        Some((idx, codes))
    } else {
        None
    };

    let mut candidates: Vec<u32> = Vec::new();
    if use_semantic {
        let hits = index.semantic.tree.knn64(query.semantic.code64, query.shortlist_size)?;
        candidates.extend(hits.iter().map(|h| h.ordinal));
    }
    if let Some((idx, codes)) = low {
        let hits = idx.tree.knn64(codes.code64, query.shortlist_size)?;
        candidates.extend(hits.iter().map(|h| h.ordinal));
    }
    candidates.sort_unstable();
    candidates.dedup();

    let refined = |store: &CodeStore, code: &Code256| -> Result<HashMap<u32, u32>, IndexError> {
        Ok(refine256(store, code, &candidates)?.into_iter().collect())
    };
    let semantic_d = if use_semantic {
        Some(refined(&index.semantic.store, &query.semantic.code256)?)
    } else {
        None
    };
    let low_d = match low {
        Some((idx, codes)) => Some(refined(&idx.store, &codes.code256)?),
        None => None,
    };

    let mut hits: Vec<KeyframeHit> = candidates
        .iter()
        .map(|&ordinal| {
            let sem = semantic_d.as_ref().map_or(0, |m| m[&ordinal]);
            let lo = low_d.as_ref().map_or(0, |m| m[&ordinal]);
            KeyframeHit {
                ordinal,
                distance: blend(query.alpha, sem, lo),
            }
        })
        .collect();
    hits.sort_unstable_by(ascending);
    Ok(hits)
}

/// Folds a keyframe ranking (ascending distance) into at most `k_shots` shots.
/// A shot's distance is the minimum over its keyframes; ties order by shot id.
pub fn keyframes_to_shots(table: &ShotTable, ranking: &[KeyframeHit], k_shots: usize) -> Vec<ShotScore> {
    let mut seen = HashSet::new();
    let mut shots: Vec<ShotScore> = ranking
        .iter()
        .filter_map(|hit| {
            let (shot, _) = ShotTable::split_keyframe(hit.ordinal);
            seen.insert(shot).then(|| ShotScore {
                shot: table.shot(shot).id(),
                best_distance: hit.distance,
                score: distance_score(hit.distance),
            })
        })
        .collect();
    shots.sort_by(|a, b| {
        a.best_distance
            .total_cmp(&b.best_distance)
            .then_with(|| a.shot.cmp(&b.shot))
    });
    shots.truncate(k_shots);
    shots
}

fn to_ranked(shots: Vec<ShotScore>) -> RankedResult {
    RankedResult::new(
        QueryKind::Similarity,
        shots
            .into_iter()
            .map(|s| RankedEntry {
                shot: s.shot,
                score: s.score,
            })
            .collect(),
    )
}

/// Full query: two-stage search, then shot aggregation.
pub fn search_shots(index: &SimilarityIndex, query: &SimilarityQuery) -> Result<RankedResult, SearchError> {
    let hits = two_stage_search(index, query)?;
    Ok(to_ranked(keyframes_to_shots(&index.shots, &hits, query.k_shots)))
}

/// Stored codes of a keyframe, usable as a query.
pub fn keyframe_codes(
    index: &SimilarityIndex,
    shot: &ShotId,
    position: u8,
) -> Result<(QueryCodes, Option<QueryCodes>), SearchError> {
    if index.shots.ordinal(shot).is_none() {
        return Err(SearchError::UnknownShot(shot.clone()));
    }
    let ordinal = index
        .shots
        .keyframe_ordinal(shot, position)
        .ok_or_else(|| SearchError::UnknownPosition {
            shot: shot.clone(),
            position,
        })?;
    let codes = |s: &SpaceIndex| QueryCodes {
        code64: s.store.code64(ordinal).expect("store covers every keyframe"),
        code256: *s.store.code256(ordinal).expect("store covers every keyframe"),
    };
    Ok((codes(&index.semantic), index.low_level.as_ref().map(codes)))
}

/// Query with a stored keyframe's codes.
pub fn query_by_shot(
    index: &SimilarityIndex,
    shot: &ShotId,
    position: u8,
    alpha: f64,
    k: usize,
    shortlist_size: usize,
) -> Result<RankedResult, SearchError> {
    let (semantic, low_level) = keyframe_codes(index, shot, position)?;
    search_shots(
        index,
        &SimilarityQuery {
            semantic,
            low_level,
            alpha,
            k_shots: k,
            shortlist_size,
        },
    )
}

/// Encoders that turn an external feature vector into query codes.
#[derive(Debug, Clone, Default)]
pub struct QueryEncoders {
    pub semantic: Option<HyperplaneEncoder>,
    pub low_level: Option<HyperplaneEncoder>,
}

/// Query with an external feature vector.
pub fn query_by_vector(
    index: &SimilarityIndex,
    encoders: &QueryEncoders,
    vector: &FeatureVector,
    alpha: f64,
    k: usize,
    shortlist_size: usize,
) -> Result<RankedResult, SearchError> {
    let encode = |enc: &HyperplaneEncoder| -> Result<QueryCodes, SearchError> {
        let (code64, code256) = enc.encode(vector)?;
        Ok(QueryCodes { code64, code256 })
    };
    let semantic = match (&encoders.semantic, alpha > 0.0) {
        (Some(enc), _) => encode(enc)?,
        (None, true) => return Err(SearchError::MissingEncoder(CodeSpace::Semantic)),
        // Unused when the semantic weight is zero.
        (None, false) => QueryCodes {
            code64: Code64::default(),
            code256: Code256::default(),
        },
    };
    let low_level = match (&encoders.low_level, alpha < 1.0) {
        (Some(enc), true) => Some(encode(enc)?),
        (None, true) => return Err(SearchError::MissingEncoder(CodeSpace::LowLevel)),
        (_, false) => None,
    };
    search_shots(
        index,
        &SimilarityQuery {
            semantic,
            low_level,
            alpha,
            k_shots: k,
            shortlist_size,
        },
    )
}
