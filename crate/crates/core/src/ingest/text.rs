use std::fmt::Write as _;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use super::{expect_fields, parse_field, read_utf8, records, video_field, IngestError, Result};
use crate::model::{ShotId, ShotTable, TextOccurrence};

/// NFC-normalizes and lower-cases one word.
pub fn normalize_word(word: &str) -> String {
    let composed: String = word.nfc().collect();
    composed.to_lowercase().nfc().collect()
}

/// Splits on Unicode whitespace and normalizes each token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(normalize_word).collect()
}

pub fn load_text(path: &Path, table: &ShotTable) -> Result<Vec<TextOccurrence>> {
    parse_text(&read_utf8(path)?, table)
}

/// Parses `video_id, shot_index, frame_number, text` records; the text field
/// runs to the end of the line and yields one occurrence per word.
pub fn parse_text(input: &str, table: &ShotTable) -> Result<Vec<TextOccurrence>> {
    let mut out = Vec::new();
    for (line, fields) in records(input) {
        if fields.len() < 4 {
            expect_fields(line, &fields, 4, "text")?;
        }
        let video = video_field(line, fields[0])?;
        let shot_index = parse_field(line, "shot_index", fields[1])?;
        let frame_number = parse_field(line, "frame_number", fields[2])?;
        let shot = ShotId::new(video, shot_index);
        let shot = match table.get(&shot) {
            Some(s) => s.id(),
            None => return Err(IngestError::UnknownShot { line, shot }),
        };
        let words = tokenize(&fields[3..].join("\t"));
        if words.is_empty() {
            return Err(IngestError::EmptyText { line });
        }
        out.extend(words.into_iter().map(|word| TextOccurrence {
            shot: shot.clone(),
            frame_number,
            word,
        }));
    }
    Ok(out)
}

pub fn write_text(occurrences: &[TextOccurrence]) -> String {
    let mut out = String::new();
    for o in occurrences {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            o.shot.video_id, o.shot.shot_index, o.frame_number, o.word
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_manifest;

    fn table() -> ShotTable {
        parse_manifest("A\t0\t0\t100\n").unwrap()
    }

    #[test]
    fn casefolds_single_word() {
        let occ = parse_text("A\t0\t12\tPlanerfüllung\n", &table()).unwrap();
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].word, "planerfüllung");
        assert_eq!(occ[0].frame_number, 12);
    }

    #[test]
    fn splits_multiple_words() {
        let occ = parse_text("A\t0\t3\tRauchen verboten\n", &table()).unwrap();
        let words: Vec<_> = occ.iter().map(|o| o.word.as_str()).collect();
        assert_eq!(words, ["rauchen", "verboten"]);
    }

    #[test]
    fn whitespace_only_is_error() {
        let err = parse_text("A\t0\t3\t   \n", &table()).unwrap_err();
        assert!(matches!(err, IngestError::EmptyText { line: 1 }));
    }

    #[test]
    fn unknown_shot_is_error() {
        let err = parse_text("B\t0\t3\twort\n", &table()).unwrap_err();
        assert!(matches!(err, IngestError::UnknownShot { .. }));
    }

    #[test]
    fn decomposed_input_is_composed() {
        // "u" + combining diaeresis
        assert_eq!(normalize_word("Planerfu\u{308}llung"), "planerfüllung");
        assert_eq!(normalize_word("ÖFFNUNGSZEITEN"), "öffnungszeiten");
    }

    #[test]
    fn written_text_reloads() {
        let occ = parse_text("A\t0\t3\tRauchen verboten\nA\t0\t9\tHO-Gaststätte\n", &table()).unwrap();
        assert_eq!(parse_text(&write_text(&occ), &table()).unwrap(), occ);
    }
}
