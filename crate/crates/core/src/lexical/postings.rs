use std::collections::HashMap;

use super::LexicalError;
use crate::model::{AnnotationEntry, AnnotationKind, RankedEntry, RankedResult, ShotId};

/// Shots carrying one label, by descending probability then ascending shot id.
#[derive(Debug, Clone, PartialEq)]
pub struct PostingList {
    pub label: String,
    pub kind: AnnotationKind,
    pub postings: Vec<(ShotId, f64)>,
}

/// Posting lists for concepts and persons, keyed by kind and label.
#[derive(Debug, Clone, Default)]
pub struct Postings {
    lists: HashMap<(AnnotationKind, String), PostingList>,
}

impl Postings {
    pub fn build(entries: &[AnnotationEntry]) -> Self {
        let mut lists: HashMap<(AnnotationKind, String), PostingList> = HashMap::new();
        for e in entries {
            lists
                .entry((e.kind, e.label.clone()))
                .or_insert_with(|| PostingList {
                    label: e.label.clone(),
                    kind: e.kind,
                    postings: Vec::new(),
                })
                .postings
                .push((e.shot.clone(), e.probability));
        }
        for list in lists.values_mut() {
            list.postings
                .sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        }
        Self { lists }
    }

    pub fn get(&self, kind: AnnotationKind, label: &str) -> Option<&PostingList> {
        self.lists.get(&(kind, label.to_owned()))
    }

    /// Labels of one kind with their posting counts, sorted by label.
    pub fn labels(&self, kind: AnnotationKind) -> Vec<(&str, usize)> {
        let mut out: Vec<_> = self
            .lists
            .values()
            .filter(|l| l.kind == kind)
            .map(|l| (l.label.as_str(), l.postings.len()))
            .collect();
        out.sort_unstable();
        out
    }

    /// Top-`k` shots for a label. Unknown labels are an error, not an empty result.
    pub fn concept_search(&self, label: &str, kind: AnnotationKind, k: usize) -> Result<RankedResult, LexicalError> {
        let list = self.get(kind, label).ok_or_else(|| LexicalError::UnknownLabel {
            kind,
            label: label.to_owned(),
        })?;
        let entries = list
            .postings
            .iter()
            .take(k)
            .map(|(shot, p)| RankedEntry {
                shot: shot.clone(),
                score: *p,
            })
            .collect();
        Ok(RankedResult::new(kind.into(), entries))
    }
}
