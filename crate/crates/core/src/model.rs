//! Shared domain vocabulary: shots, keyframes, binary codes, annotations,
//! recognized text and ranked results.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Number of keyframes that represent every shot.
pub const KEYFRAMES_PER_SHOT: usize = 5;

/// A shot: the temporal unit of retrieval.
///
/// Identity is the pair `(video_id, shot_index)`; frame bounds are metadata.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShotRef {
    pub video_id: Arc<str>,
    pub shot_index: u32,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl ShotRef {
    pub fn new(video_id: impl Into<Arc<str>>, shot_index: u32, start_frame: u64, end_frame: u64) -> Self {
        Self {
            video_id: video_id.into(),
            shot_index,
            start_frame,
            end_frame,
        }
    }

    pub fn id(&self) -> ShotId {
        ShotId {
            video_id: self.video_id.clone(),
            shot_index: self.shot_index,
        }
    }

    /// Frame numbers of the five keyframes when none are given explicitly:
    /// first, last, and the frames at 1/4, 1/2 and 3/4 of the span (rounded down).
    pub fn derived_keyframes(&self) -> [u64; KEYFRAMES_PER_SHOT] {
        let span = self.end_frame.saturating_sub(self.start_frame);
        let at = |quarter: u64| self.start_frame + (span as u128 * quarter as u128 / 4) as u64;
        [self.start_frame, at(1), at(2), at(3), self.end_frame]
    }
}

/// Archive-wide shot identity, rendered as `video_id#shot_index`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShotId {
    pub video_id: Arc<str>,
    pub shot_index: u32,
}

impl ShotId {
    pub fn new(video_id: impl Into<Arc<str>>, shot_index: u32) -> Self {
        Self {
            video_id: video_id.into(),
            shot_index,
        }
    }
}

impl fmt::Display for ShotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.video_id, self.shot_index)
    }
}

impl std::str::FromStr for ShotId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (video, index) = s
            .rsplit_once('#')
            .ok_or_else(|| format!("shot id {s:?} is not of the form video_id#shot_index"))?;
        if video.is_empty() {
            return Err(format!("shot id {s:?} has an empty video id"));
        }
        let shot_index = index
            .parse()
            .map_err(|_| format!("shot id {s:?} has a non-numeric shot index"))?;
        Ok(ShotId::new(video, shot_index))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyframe {
    pub shot: ShotId,
    pub position: u8,
    pub frame_number: u64,
}

/// Which code space a binary code lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeSpace {
    Semantic,
    LowLevel,
}

impl CodeSpace {
    pub fn as_byte(self) -> u8 {
        match self {
            CodeSpace::Semantic => 0,
            CodeSpace::LowLevel => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CodeSpace::Semantic),
            1 => Some(CodeSpace::LowLevel),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodeSpace::Semantic => "semantic",
            CodeSpace::LowLevel => "low_level",
        }
    }
}

impl fmt::Display for CodeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 64-bit binary code used for the coarse search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Code64(pub u64);

/// 256-bit binary code used for refinement. Word `i` holds bits `64*i .. 64*i+63`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Code256(pub [u64; 4]);

impl Code64 {
    pub fn bit(self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }
}

impl Code256 {
    pub fn bit(self, i: usize) -> bool {
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn to_le_bytes(self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (chunk, word) in out.chunks_exact_mut(8).zip(self.0) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: [u8; 32]) -> Self {
        let mut words = [0u64; 4];
        for (word, chunk) in words.iter_mut().zip(bytes.chunks_exact(8)) {
            *word = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Code256(words)
    }
}

/// A binary code of one of the two supported widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryCode {
    W64(Code64),
    W256(Code256),
}

impl BinaryCode {
    pub fn width(&self) -> usize {
        match self {
            BinaryCode::W64(_) => 64,
            BinaryCode::W256(_) => 256,
        }
    }

    pub fn words(&self) -> &[u64] {
        match self {
            BinaryCode::W64(c) => std::slice::from_ref(&c.0),
            BinaryCode::W256(c) => &c.0,
        }
    }

    /// Builds a code from a bit string; only widths 64 and 256 are accepted.
    pub fn from_bits(bits: &[bool]) -> Option<Self> {
        let mut words = [0u64; 4];
        for (i, &b) in bits.iter().enumerate().take(256) {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        match bits.len() {
            64 => Some(BinaryCode::W64(Code64(words[0]))),
            256 => Some(BinaryCode::W256(Code256(words))),
            _ => None,
        }
    }
}

impl From<Code64> for BinaryCode {
    fn from(c: Code64) -> Self {
        BinaryCode::W64(c)
    }
}

impl From<Code256> for BinaryCode {
    fn from(c: Code256) -> Self {
        BinaryCode::W256(c)
    }
}

/// Both code widths of one keyframe in one code space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeRecord {
    pub shot: ShotId,
    pub position: u8,
    pub space: CodeSpace,
    pub code64: Code64,
    pub code256: Code256,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Concept,
    Person,
}

impl AnnotationKind {
    pub fn name(self) -> &'static str {
        match self {
            AnnotationKind::Concept => "concept",
            AnnotationKind::Person => "person",
        }
    }
}

impl std::str::FromStr for AnnotationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concept" => Ok(AnnotationKind::Concept),
            "person" => Ok(AnnotationKind::Person),
            other => Err(format!(
                "unknown annotation kind {other:?} (expected concept or person)"
            )),
        }
    }
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub shot: ShotId,
    pub label: String,
    pub kind: AnnotationKind,
    pub probability: f64,
}

/// One recognized word on screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextOccurrence {
    pub shot: ShotId,
    pub frame_number: u64,
    pub word: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Similarity,
    Concept,
    Person,
    Text,
}

impl From<AnnotationKind> for QueryKind {
    fn from(kind: AnnotationKind) -> Self {
        match kind {
            AnnotationKind::Concept => QueryKind::Concept,
            AnnotationKind::Person => QueryKind::Person,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub shot: ShotId,
    pub score: f64,
}

/// Ranked shot list returned by every query family. Higher scores are better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query_kind: QueryKind,
    pub entries: Vec<RankedEntry>,
}

impl RankedResult {
    /// Wraps already-ranked entries. Debug builds assert the ranking invariants.
    pub fn new(query_kind: QueryKind, entries: Vec<RankedEntry>) -> Self {
        let result = Self { query_kind, entries };
        debug_assert!(result.check().is_ok(), "{:?}", result.check());
        result
    }

    /// Checks that scores are non-increasing and that no shot repeats.
    pub fn check(&self) -> Result<(), String> {
        for (rank, pair) in self.entries.windows(2).enumerate() {
            // NaN fails this comparison too.
            if !matches!(
                pair[1].score.partial_cmp(&pair[0].score),
                Some(Ordering::Less | Ordering::Equal)
            ) {
                return Err(format!("score increases at rank {}", rank + 2));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(&e.shot) {
                return Err(format!("shot {} appears twice", e.shot));
            }
        }
        Ok(())
    }

    /// Window of `k` entries starting at `offset`.
    pub fn page(mut self, offset: usize, k: usize) -> Self {
        let start = offset.min(self.entries.len());
        self.entries.drain(..start);
        self.entries.truncate(k);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shots(&self) -> impl Iterator<Item = &ShotId> {
        self.entries.iter().map(|e| &e.shot)
    }
}

/// A single inconsistency found by [`validate_shot_table`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateShot(ShotId),
    FrameOrder { shot: ShotId, start: u64, end: u64 },
    KeyframeCount { shot: ShotId, count: usize },
    PositionOutOfRange { shot: ShotId, position: u8 },
    DuplicatePosition { shot: ShotId, position: u8 },
    KeyframeOrder { shot: ShotId, position: u8 },
    KeyframeBounds { shot: ShotId, position: u8, frame: u64 },
    UnknownShot { shot: ShotId, position: u8 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateShot(id) => write!(f, "duplicate shot id {id}"),
            Violation::FrameOrder { shot, start, end } => {
                write!(f, "shot {shot}: end_frame {end} < start_frame {start}")
            }
            Violation::KeyframeCount { shot, count } => {
                write!(f, "shot {shot}: keyframe count {count} ≠ {KEYFRAMES_PER_SHOT}")
            }
            Violation::PositionOutOfRange { shot, position } => {
                write!(f, "shot {shot}: keyframe position {position} outside 0..=4")
            }
            Violation::DuplicatePosition { shot, position } => {
                write!(f, "shot {shot}: keyframe position {position} given twice")
            }
            Violation::KeyframeOrder { shot, position } => {
                write!(f, "shot {shot}: keyframe frame numbers decrease at position {position}")
            }
            Violation::KeyframeBounds { shot, position, frame } => write!(
                f,
                "shot {shot}: keyframe position {position} at frame {frame} does not match the shot bounds"
            ),
            Violation::UnknownShot { shot, position } => {
                write!(f, "keyframe position {position} references unknown shot {shot}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Reports every violated shot/keyframe invariant. An empty report means the
/// tables are consistent.
pub fn validate_shot_table(shots: &[ShotRef], keyframes: &[Keyframe]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut index: HashMap<ShotId, usize> = HashMap::with_capacity(shots.len());
    for (i, shot) in shots.iter().enumerate() {
        let id = shot.id();
        if index.contains_key(&id) {
            violations.push(Violation::DuplicateShot(id));
            continue;
        }
        if shot.end_frame < shot.start_frame {
            violations.push(Violation::FrameOrder {
                shot: id.clone(),
                start: shot.start_frame,
                end: shot.end_frame,
            });
        }
        index.insert(id, i);
    }

    let mut slots: Vec<[Option<u64>; KEYFRAMES_PER_SHOT]> = vec![[None; KEYFRAMES_PER_SHOT]; shots.len()];
    let mut counts = vec![0usize; shots.len()];
    for kf in keyframes {
        let Some(&i) = index.get(&kf.shot) else {
            violations.push(Violation::UnknownShot {
                shot: kf.shot.clone(),
                position: kf.position,
            });
            continue;
        };
        counts[i] += 1;
        let pos = kf.position as usize;
        if pos >= KEYFRAMES_PER_SHOT {
            violations.push(Violation::PositionOutOfRange {
                shot: kf.shot.clone(),
                position: kf.position,
            });
            continue;
        }
        if slots[i][pos].is_some() {
            violations.push(Violation::DuplicatePosition {
                shot: kf.shot.clone(),
                position: kf.position,
            });
            continue;
        }
        slots[i][pos] = Some(kf.frame_number);
    }

    let mut seen = vec![false; shots.len()];
    for shot in shots {
        let id = shot.id();
        let i = index[&id];
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        if counts[i] != KEYFRAMES_PER_SHOT {
            violations.push(Violation::KeyframeCount {
                shot: id,
                count: counts[i],
            });
            continue;
        }
        let frames = &slots[i];
        if frames.iter().any(Option::is_none) {
            // Duplicate positions already reported.
            continue;
        }
        let frames: Vec<u64> = frames.iter().map(|f| f.unwrap()).collect();
        if frames[0] != shot.start_frame {
            violations.push(Violation::KeyframeBounds {
                shot: id.clone(),
                position: 0,
                frame: frames[0],
            });
        }
        if frames[4] != shot.end_frame {
            violations.push(Violation::KeyframeBounds {
                shot: id.clone(),
                position: 4,
                frame: frames[4],
            });
        }
        for p in 1..KEYFRAMES_PER_SHOT {
            if frames[p] < frames[p - 1] {
                violations.push(Violation::KeyframeOrder {
                    shot: id.clone(),
                    position: p as u8,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Validated shot table. Keyframe ordinal `5 * shot_ordinal + position` is
/// the dense key shared by every code store.
#[derive(Debug, Clone, Default)]
pub struct ShotTable {
    shots: Vec<ShotRef>,
    frames: Vec<[u64; KEYFRAMES_PER_SHOT]>,
    by_id: HashMap<ShotId, u32>,
}

impl ShotTable {
    /// Builds the table, returning the validation report on any violation.
    pub fn new(shots: Vec<ShotRef>, keyframes: &[Keyframe]) -> Result<Self, ValidationReport> {
        let report = validate_shot_table(&shots, keyframes);
        if !report.is_empty() {
            return Err(report);
        }
        let by_id: HashMap<ShotId, u32> = shots.iter().enumerate().map(|(i, s)| (s.id(), i as u32)).collect();
        let mut frames = vec![[0u64; KEYFRAMES_PER_SHOT]; shots.len()];
        for kf in keyframes {
            frames[by_id[&kf.shot] as usize][kf.position as usize] = kf.frame_number;
        }
        Ok(Self { shots, frames, by_id })
    }

    /// Builds a table with derived keyframe positions for every shot.
    pub fn with_derived_keyframes(shots: Vec<ShotRef>) -> Result<Self, ValidationReport> {
        // Derived keyframes always satisfy the per-shot keyframe invariants,
        // so only shot identity and frame order need checking.
        let mut by_id = HashMap::with_capacity(shots.len());
        let mut violations = Vec::new();
        for (i, shot) in shots.iter().enumerate() {
            let id = shot.id();
            if shot.end_frame < shot.start_frame {
                violations.push(Violation::FrameOrder {
                    shot: id.clone(),
                    start: shot.start_frame,
                    end: shot.end_frame,
                });
            }
            if by_id.insert(id.clone(), i as u32).is_some() {
                violations.push(Violation::DuplicateShot(id));
            }
        }
        if !violations.is_empty() {
            return Err(ValidationReport { violations });
        }
        let frames = shots.iter().map(ShotRef::derived_keyframes).collect();
        Ok(Self { shots, frames, by_id })
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn keyframe_count(&self) -> usize {
        self.shots.len() * KEYFRAMES_PER_SHOT
    }

    pub fn shots(&self) -> &[ShotRef] {
        &self.shots
    }

    pub fn shot(&self, ordinal: u32) -> &ShotRef {
        &self.shots[ordinal as usize]
    }

    pub fn ordinal(&self, id: &ShotId) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &ShotId) -> Option<&ShotRef> {
        self.ordinal(id).map(|i| self.shot(i))
    }

    pub fn keyframe_frames(&self, ordinal: u32) -> [u64; KEYFRAMES_PER_SHOT] {
        self.frames[ordinal as usize]
    }

    pub fn keyframes(&self) -> Vec<Keyframe> {
        self.shots
            .iter()
            .zip(&self.frames)
            .flat_map(|(shot, frames)| {
                let id = shot.id();
                frames.iter().enumerate().map(move |(p, &f)| Keyframe {
                    shot: id.clone(),
                    position: p as u8,
                    frame_number: f,
                })
            })
            .collect()
    }

    /// Keyframe ordinal of `(shot, position)`.
    pub fn keyframe_ordinal(&self, id: &ShotId, position: u8) -> Option<u32> {
        if position as usize >= KEYFRAMES_PER_SHOT {
            return None;
        }
        self.ordinal(id)
            .map(|s| s * KEYFRAMES_PER_SHOT as u32 + position as u32)
    }

    /// Inverse of [`ShotTable::keyframe_ordinal`]: `(shot ordinal, position)`.
    pub fn split_keyframe(ordinal: u32) -> (u32, u8) {
        let per = KEYFRAMES_PER_SHOT as u32;
        (ordinal / per, (ordinal % per) as u8)
    }
}

pub fn derived_keyframe_records(shot: &ShotRef) -> Vec<Keyframe> {
    let id = shot.id();
    shot.derived_keyframes()
        .iter()
        .enumerate()
        .map(|(p, &f)| Keyframe {
            shot: id.clone(),
            position: p as u8,
            frame_number: f,
        })
        .collect()
}
