//! Binary code files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SHGC" | u16 version (1) | u8 space (0 semantic, 1 low_level) | u64 count
//! count × { u32 video-id offset | u32 shot_index | u8 position | code64 (8 bytes) | code256 (32 bytes) }
//! string table: { u32 byte length | UTF-8 bytes }*, offsets relative to the table start
//! ```
//!
//! `code256` stores its four 64-bit words in order, word 0 holding bits 0..63.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use super::{read_bytes, IngestError, Result};
use crate::model::{Code256, Code64, CodeRecord, CodeSpace, ShotId, ShotTable, KEYFRAMES_PER_SHOT};

pub const CODE_FILE_MAGIC: [u8; 4] = *b"SHGC";
pub const CODE_FILE_VERSION: u16 = 1;
pub const CODE_RECORD_LEN: usize = 4 + 4 + 1 + 8 + 32;
const HEADER_LEN: usize = 4 + 2 + 1 + 8;

pub fn write_codes(space: CodeSpace, records: &[CodeRecord]) -> Vec<u8> {
    let mut table = Vec::new();
    let mut offsets: HashMap<&str, u32> = HashMap::new();
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * CODE_RECORD_LEN);
    out.extend_from_slice(&CODE_FILE_MAGIC);
    out.extend_from_slice(&CODE_FILE_VERSION.to_le_bytes());
    out.push(space.as_byte());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        let video: &str = &r.shot.video_id;
        let offset = *offsets.entry(video).or_insert_with(|| {
            let at = table.len() as u32;
            table.extend_from_slice(&(video.len() as u32).to_le_bytes());
            table.extend_from_slice(video.as_bytes());
            at
        });
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&r.shot.shot_index.to_le_bytes());
        out.push(r.position);
        out.extend_from_slice(&r.code64.0.to_le_bytes());
        out.extend_from_slice(&r.code256.to_le_bytes());
    }
    out.extend_from_slice(&table);
    out
}

pub fn load_codes(path: &Path, expected_space: CodeSpace, table: &ShotTable) -> Result<Vec<CodeRecord>> {
    parse_codes(&read_bytes(path)?, expected_space, table)
}

/// Decodes a code file, checking every record against the shot table.
pub fn parse_codes(bytes: &[u8], expected_space: CodeSpace, table: &ShotTable) -> Result<Vec<CodeRecord>> {
    let available = bytes.len() as u64;
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != CODE_FILE_MAGIC {
            return Err(IngestError::Format("bad magic bytes".into()));
        }
        return Err(IngestError::Truncated {
            needed: HEADER_LEN as u64,
            available,
        });
    }
    if bytes[..4] != CODE_FILE_MAGIC {
        return Err(IngestError::Format("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CODE_FILE_VERSION {
        return Err(IngestError::Format(format!("unsupported version {version}")));
    }
    let space = CodeSpace::from_byte(bytes[6])
        .ok_or_else(|| IngestError::Format(format!("unknown code space byte {}", bytes[6])))?;
    if space != expected_space {
        return Err(IngestError::SpaceMismatch {
            expected: expected_space,
            found: space,
        });
    }
    let count = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes"));
    let needed = count
        .checked_mul(CODE_RECORD_LEN as u64)
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .unwrap_or(u64::MAX);
    if needed > available {
        return Err(IngestError::Truncated { needed, available });
    }
    let body = &bytes[HEADER_LEN..needed as usize];
    let strings = &bytes[needed as usize..];

    let mut videos: HashMap<u32, Arc<str>> = HashMap::new();
    let mut out = Vec::with_capacity(count as usize);
    for (i, rec) in body.chunks_exact(CODE_RECORD_LEN).enumerate() {
        let offset = u32::from_le_bytes(rec[0..4].try_into().expect("4 bytes"));
        let video = match videos.get(&offset) {
            Some(v) => v.clone(),
            None => {
                let v: Arc<str> = Arc::from(read_string(strings, offset)?);
                videos.insert(offset, v.clone());
                v
            }
        };
        let shot = ShotId {
            video_id: video,
            shot_index: u32::from_le_bytes(rec[4..8].try_into().expect("4 bytes")),
        };
        let position = rec[8];
        if position as usize >= KEYFRAMES_PER_SHOT || table.ordinal(&shot).is_none() {
            return Err(IngestError::UnknownKeyframe {
                record: i as u64,
                shot,
                position,
            });
        }
        out.push(CodeRecord {
            shot,
            position,
            space,
            code64: Code64(u64::from_le_bytes(rec[9..17].try_into().expect("8 bytes"))),
            code256: Code256::from_le_bytes(rec[17..49].try_into().expect("32 bytes")),
        });
    }
    Ok(out)
}

fn read_string(table: &[u8], offset: u32) -> Result<&str> {
    let start = offset as usize;
    let len_bytes = table
        .get(start..start + 4)
        .ok_or_else(|| IngestError::Format(format!("string offset {offset} outside string table")))?;
    let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
    let raw = table
        .get(start + 4..(start + 4).saturating_add(len))
        .ok_or_else(|| IngestError::Format(format!("string at offset {offset} runs past end of file")))?;
    std::str::from_utf8(raw).map_err(|_| IngestError::Format(format!("string at offset {offset} is not UTF-8")))
}
