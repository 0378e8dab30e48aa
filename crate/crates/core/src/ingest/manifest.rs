use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{expect_fields, parse_field, read_utf8, records, video_field, IngestError, Result};
use crate::model::{derived_keyframe_records, Keyframe, ShotId, ShotRef, ShotTable};

/// Loads and validates a shot manifest.
pub fn load_manifest(path: &Path) -> Result<ShotTable> {
    parse_manifest(&read_utf8(path)?)
}

/// Parses manifest text. Shots without explicit `K` lines get derived keyframes.
pub fn parse_manifest(input: &str) -> Result<ShotTable> {
    let mut shots = Vec::new();
    let mut explicit: Vec<Keyframe> = Vec::new();
    let mut videos: HashMap<String, Arc<str>> = HashMap::new();
    let mut intern = |v: &str| -> Arc<str> { videos.entry(v.to_owned()).or_insert_with(|| Arc::from(v)).clone() };

    for (line, fields) in records(input) {
        if fields[0] == "K" {
            expect_fields(line, &fields, 5, "keyframe")?;
            let video = intern(video_field(line, fields[1])?);
            explicit.push(Keyframe {
                shot: ShotId {
                    video_id: video,
                    shot_index: parse_field(line, "shot_index", fields[2])?,
                },
                position: parse_field(line, "position", fields[3])?,
                frame_number: parse_field(line, "frame_number", fields[4])?,
            });
        } else {
            expect_fields(line, &fields, 4, "shot")?;
            let video = intern(video_field(line, fields[0])?);
            shots.push(ShotRef {
                video_id: video,
                shot_index: parse_field(line, "shot_index", fields[1])?,
                start_frame: parse_field(line, "start_frame", fields[2])?,
                end_frame: parse_field(line, "end_frame", fields[3])?,
            });
        }
    }

    let with_explicit: std::collections::HashSet<&ShotId> = explicit.iter().map(|k| &k.shot).collect();
    let mut keyframes: Vec<Keyframe> = shots
        .iter()
        .filter(|s| !with_explicit.contains(&s.id()))
        .flat_map(derived_keyframe_records)
        .collect();
    keyframes.extend(explicit.iter().cloned());
    ShotTable::new(shots, &keyframes).map_err(IngestError::Validation)
}

/// Renders a table with explicit keyframe lines so reloading is exact.
pub fn write_manifest(table: &ShotTable) -> String {
    let mut out = String::new();
    for (i, shot) in table.shots().iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            shot.video_id, shot.shot_index, shot.start_frame, shot.end_frame
        );
        for (p, f) in table.keyframe_frames(i as u32).iter().enumerate() {
            let _ = writeln!(out, "K\t{}\t{}\t{}\t{}", shot.video_id, shot.shot_index, p, f);
        }
    }
    out
}
