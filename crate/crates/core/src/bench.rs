//! Latency benchmark for end-to-end similarity queries.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::hamming::CodeStore;
use crate::model::{Code256, Code64, CodeSpace, ShotId, ShotRef, ShotTable, KEYFRAMES_PER_SHOT};
use crate::similarity::{query_by_shot, SearchError, SimilarityIndex, SpaceIndex};

/// Shots per synthetic video.
const SHOTS_PER_VIDEO: usize = 1000;

/// Uniformly random semantic codes for `keyframes` keyframes, rounded up to
/// whole shots.
pub fn synthetic_index(keyframes: usize, seed: u64) -> SimilarityIndex {
    let shot_count = keyframes.div_ceil(KEYFRAMES_PER_SHOT).max(1);
    let videos: Vec<Arc<str>> = (0..shot_count.div_ceil(SHOTS_PER_VIDEO))
        .map(|v| Arc::from(format!("synthetic{v:05}")))
        .collect();
    let shots = (0..shot_count)
        .map(|i| {
            let start = (i % SHOTS_PER_VIDEO) as u64 * 100;
            ShotRef {
                video_id: videos[i / SHOTS_PER_VIDEO].clone(),
                shot_index: (i % SHOTS_PER_VIDEO) as u32,
                start_frame: start,
                end_frame: start + 99,
            }
        })
        .collect();
    let table = ShotTable::with_derived_keyframes(shots).expect("synthetic shots are valid");
    let n = table.keyframe_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code64 = Vec::with_capacity(n);
    let mut code256 = Vec::with_capacity(n);
    for _ in 0..n {
        code64.push(Code64(rng.gen()));
        code256.push(Code256(rng.gen()));
    }
    let store = CodeStore::from_codes(CodeSpace::Semantic, code64, code256);
    let semantic = SpaceIndex::build(store, seed).expect("non-empty store");
    SimilarityIndex {
        shots: Arc::new(table),
        semantic,
        low_level: None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyReport {
    pub keyframes: usize,
    pub queries: usize,
    pub k_shots: usize,
    pub shortlist_size: usize,
    pub alpha: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    /// Queries whose self-hit came back at rank 1.
    pub self_hits: usize,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[Duration], p: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs `queries` query-by-keyframe searches from random indexed keyframes
/// and returns each latency alongside the summary.
pub fn run_latency(
    index: &SimilarityIndex,
    queries: usize,
    alpha: f64,
    k_shots: usize,
    shortlist_size: usize,
    seed: u64,
) -> Result<(LatencyReport, Vec<Duration>), SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut samples = Vec::with_capacity(queries);
    let mut self_hits = 0;
    for _ in 0..queries {
        let shot = rng.gen_range(0..index.shots.len()) as u32;
        let position = rng.gen_range(0..KEYFRAMES_PER_SHOT) as u8;
        let id: ShotId = index.shots.shot(shot).id();
        let started = Instant::now();
        let result = query_by_shot(index, &id, position, alpha, k_shots, shortlist_size)?;
        samples.push(started.elapsed());
        if result.entries.first().map(|e| &e.shot) == Some(&id) {
            self_hits += 1;
        }
    }
    let mut sorted = samples.clone();
    sorted.sort_unstable();
    let total: Duration = samples.iter().sum();
    let report = LatencyReport {
        keyframes: index.shots.keyframe_count(),
        queries,
        k_shots,
        shortlist_size,
        alpha,
        p50_ms: ms(percentile(&sorted, 50.0)),
        p95_ms: ms(percentile(&sorted, 95.0)),
        p99_ms: ms(percentile(&sorted, 99.0)),
        max_ms: ms(sorted.last().copied().unwrap_or_default()),
        mean_ms: if queries == 0 { 0.0 } else { ms(total) / queries as f64 },
        self_hits,
    };
    Ok((report, samples))
}
