use super::{hamming256, IndexError};
use crate::model::{Code256, Code64, CodeRecord, CodeSpace, ShotTable, KEYFRAMES_PER_SHOT};

/// Codes of one space, stored contiguously by keyframe ordinal
/// (`5 * shot_ordinal + position`, see [`ShotTable::keyframe_ordinal`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CodeStore {
    space: CodeSpace,
    code64: Vec<Code64>,
    code256: Vec<Code256>,
}

impl CodeStore {
    /// Builds a store that holds exactly one record for every keyframe of `table`.
    pub fn from_records(space: CodeSpace, table: &ShotTable, records: &[CodeRecord]) -> Result<Self, IndexError> {
        let n = table.keyframe_count();
        let mut code64 = vec![Code64::default(); n];
        let mut code256 = vec![Code256::default(); n];
        let mut filled = vec![false; n];
        for r in records {
            if r.space != space {
                return Err(IndexError::WrongSpace {
                    expected: space,
                    found: r.space,
                });
            }
            let ordinal = table
                .keyframe_ordinal(&r.shot, r.position)
                .ok_or_else(|| IndexError::MissingCodes {
                    space,
                    shot: r.shot.clone(),
                    position: r.position,
                })? as usize;
            if std::mem::replace(&mut filled[ordinal], true) {
                return Err(IndexError::DuplicateCodes {
                    space,
                    shot: r.shot.clone(),
                    position: r.position,
                });
            }
            code64[ordinal] = r.code64;
            code256[ordinal] = r.code256;
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            let (shot, position) = ShotTable::split_keyframe(missing as u32);
            return Err(IndexError::MissingCodes {
                space,
                shot: table.shot(shot).id(),
                position,
            });
        }
        Ok(Self { space, code64, code256 })
    }

    /// Builds a store directly from ordinal-ordered code arrays.
    pub fn from_codes(space: CodeSpace, code64: Vec<Code64>, code256: Vec<Code256>) -> Self {
        assert_eq!(code64.len(), code256.len(), "code arrays must have equal length");
        Self { space, code64, code256 }
    }

    /// Records in ordinal order, for writing a code file.
    pub fn to_records(&self, table: &ShotTable) -> Vec<CodeRecord> {
        (0..self.len())
            .map(|i| {
                let (shot, position) = ShotTable::split_keyframe(i as u32);
                CodeRecord {
                    shot: table.shot(shot).id(),
                    position,
                    space: self.space,
                    code64: self.code64[i],
                    code256: self.code256[i],
                }
            })
            .collect()
    }

    pub fn space(&self) -> CodeSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.code64.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code64.is_empty()
    }

    pub fn shot_count(&self) -> usize {
        self.len() / KEYFRAMES_PER_SHOT
    }

    pub fn code64(&self, ordinal: u32) -> Option<Code64> {
        self.code64.get(ordinal as usize).copied()
    }

    pub fn code256(&self, ordinal: u32) -> Option<&Code256> {
        self.code256.get(ordinal as usize)
    }

    pub fn codes64(&self) -> &[Code64] {
        &self.code64
    }

    pub fn codes256(&self) -> &[Code256] {
        &self.code256
    }
}

/// Exact 256-bit distances for the shortlist, ascending, ties by ordinal.
pub fn refine256(store: &CodeStore, query: &Code256, shortlist: &[u32]) -> Result<Vec<(u32, u32)>, IndexError> {
    if shortlist.is_empty() {
        return Err(IndexError::EmptyShortlist);
    }
    let mut out = shortlist
        .iter()
        .map(|&o| {
            store
                .code256(o)
                .map(|c| (o, hamming256(query, c)))
                .ok_or(IndexError::InvalidOrdinal(o))
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_unstable_by_key(|&(o, d)| (d, o));
    Ok(out)
}
