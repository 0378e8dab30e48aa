use std::path::Path;

use super::{
    expect_fields, parse_field, read_utf8, records, video_field, FeatureVector, HyperplaneEncoder, IngestError, Result,
};
use crate::model::{CodeRecord, CodeSpace, ShotId, ShotTable, KEYFRAMES_PER_SHOT};

/// Feature vector of one keyframe, as read from a vector file.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub shot: ShotId,
    pub position: u8,
    pub vector: FeatureVector,
}

pub fn load_vectors(path: &Path, table: &ShotTable) -> Result<Vec<VectorRecord>> {
    parse_vectors(&read_utf8(path)?, table)
}

/// Parses `video_id, shot_index, position, values` records where `values`
/// are whitespace- or comma-separated reals.
pub fn parse_vectors(input: &str, table: &ShotTable) -> Result<Vec<VectorRecord>> {
    let mut out = Vec::new();
    for (line, fields) in records(input) {
        expect_fields(line, &fields, 4, "vector")?;
        let shot = ShotId::new(
            video_field(line, fields[0])?,
            parse_field(line, "shot_index", fields[1])?,
        );
        let position: u8 = parse_field(line, "position", fields[2])?;
        if table.get(&shot).is_none() || position as usize >= KEYFRAMES_PER_SHOT {
            return Err(IngestError::UnknownShot { line, shot });
        }
        let values = fields[3]
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| parse_field::<f64>(line, "vector component", s))
            .collect::<Result<Vec<_>>>()?;
        let vector = FeatureVector::new(values).map_err(|e| IngestError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(VectorRecord { shot, position, vector });
    }
    Ok(out)
}

/// Runs the stand-in encoder over every vector.
pub fn encode_vectors(
    encoder: &HyperplaneEncoder,
    space: CodeSpace,
    vectors: &[VectorRecord],
) -> Result<Vec<CodeRecord>> {
    vectors
        .iter()
        .map(|r| {
            let (code64, code256) = encoder.encode(&r.vector)?;
            Ok(CodeRecord {
                shot: r.shot.clone(),
                position: r.position,
                space,
                code64,
                code256,
            })
        })
        .collect()
}
