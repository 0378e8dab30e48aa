use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{expect_fields, parse_field, read_utf8, records, video_field, IngestError, Result};
use crate::model::{AnnotationEntry, AnnotationKind, ShotId, ShotTable};

pub fn load_annotations(path: &Path, table: &ShotTable) -> Result<Vec<AnnotationEntry>> {
    parse_annotations(&read_utf8(path)?, table)
}

/// Parses `video_id, shot_index, kind, label, probability` records.
///
/// Probabilities outside `[0, 1]` are rejected, never clamped.
pub fn parse_annotations(input: &str, table: &ShotTable) -> Result<Vec<AnnotationEntry>> {
    let mut out = Vec::new();
    let mut seen: HashMap<(ShotId, String), usize> = HashMap::new();
    for (line, fields) in records(input) {
        expect_fields(line, &fields, 5, "annotation")?;
        let video = video_field(line, fields[0])?;
        let shot_index = parse_field(line, "shot_index", fields[1])?;
        let kind: AnnotationKind = fields[2]
            .trim()
            .parse()
            .map_err(|message| IngestError::Parse { line, message })?;
        let label = fields[3].trim();
        if label.is_empty() {
            return Err(IngestError::Parse {
                line,
                message: "empty label".into(),
            });
        }
        let probability: f64 = parse_field(line, "probability", fields[4])?;
        if !(0.0..=1.0).contains(&probability) {
            return Err(IngestError::ProbabilityOutOfRange {
                line,
                value: probability,
            });
        }
        let shot = match table.get(&ShotId::new(video, shot_index)) {
            Some(s) => s.id(),
            None => {
                return Err(IngestError::UnknownShot {
                    line,
                    shot: ShotId::new(video, shot_index),
                })
            }
        };
        if let Some(&first_line) = seen.get(&(shot.clone(), label.to_owned())) {
            return Err(IngestError::DuplicateAnnotation {
                shot,
                label: label.to_owned(),
                first_line,
                second_line: line,
            });
        }
        seen.insert((shot.clone(), label.to_owned()), line);
        out.push(AnnotationEntry {
            shot,
            label: label.to_owned(),
            kind,
            probability,
        });
    }
    Ok(out)
}

pub fn write_annotations(entries: &[AnnotationEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        // `{}` on f64 prints the shortest string that parses back to the same value.
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.shot.video_id, e.shot.shot_index, e.kind, e.label, e.probability
        );
    }
    out
}
