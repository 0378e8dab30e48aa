use std::collections::{BTreeMap, HashMap};

use super::{levenshtein_chars, LexicalError};
use crate::ingest::{normalize_word, tokenize};
use crate::model::{QueryKind, RankedEntry, RankedResult, ShotId, TextOccurrence};

/// Shots whose similarity falls below this are dropped from text results.
pub const DEFAULT_SIMILARITY_FLOOR: f64 = 0.6;

/// `1 - levenshtein / max(len)` on character counts; 1.0 for two empty strings.
pub fn word_similarity(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_chars(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone)]
struct Word {
    text: String,
    chars: Vec<char>,
    occurrences: Vec<(ShotId, u64)>,
}

/// Distinct recognized words and where they occur.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<Word>,
    floor: f64,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::build(&[])
    }
}

impl Vocabulary {
    /// Words are normalized here too, so callers may pass raw OCR output.
    pub fn build(occurrences: &[TextOccurrence]) -> Self {
        let mut by_word: BTreeMap<String, Vec<(ShotId, u64)>> = BTreeMap::new();
        for o in occurrences {
            by_word
                .entry(normalize_word(&o.word))
                .or_default()
                .push((o.shot.clone(), o.frame_number));
        }
        let words = by_word
            .into_iter()
            .map(|(text, occurrences)| Word {
                chars: text.chars().collect(),
                text,
                occurrences,
            })
            .collect();
        Self {
            words,
            floor: DEFAULT_SIMILARITY_FLOOR,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|w| w.text.as_str())
    }

    pub fn occurrences(&self, word: &str) -> Option<&[(ShotId, u64)]> {
        self.words
            .binary_search_by(|w| w.text.as_str().cmp(word))
            .ok()
            .map(|i| self.words[i].occurrences.as_slice())
    }

    /// Shots ranked by edit-distance similarity to the query.
    ///
    /// Each query token scores a shot by its best-matching word there; a
    /// multi-token query averages those per-token scores.
    pub fn text_search(&self, query: &str, k: usize) -> Result<RankedResult, LexicalError> {
        let tokens: Vec<Vec<char>> = tokenize(query).iter().map(|t| t.chars().collect()).collect();
        if tokens.is_empty() {
            return Err(LexicalError::EmptyQuery);
        }
        let mut per_shot: HashMap<&ShotId, Vec<f64>> = HashMap::new();
        for (t, token) in tokens.iter().enumerate() {
            for word in &self.words {
                let sim = word_similarity(token, &word.chars);
                for (shot, _) in &word.occurrences {
                    let best = per_shot.entry(shot).or_insert_with(|| vec![0.0; tokens.len()]);
                    if sim > best[t] {
                        best[t] = sim;
                    }
                }
            }
        }
        let mut ranked: Vec<RankedEntry> = per_shot
            .into_iter()
            .map(|(shot, best)| RankedEntry {
                shot: shot.clone(),
                score: best.iter().sum::<f64>() / tokens.len() as f64,
            })
            .filter(|e| e.score >= self.floor)
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.shot.cmp(&b.shot)));
        ranked.truncate(k);
        Ok(RankedResult::new(QueryKind::Text, ranked))
    }
}
