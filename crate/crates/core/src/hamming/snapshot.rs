//! Tree snapshot files.
//!
//! ```text
//! "SHGT" | u16 version (1) | u8 space | u64 seed | 32-byte manifest checksum
//! u64 node count | nodes × { u32 start | u32 end | u32 near | u32 far | u8 radius | u8 leaf }
//! u64 item count | items × u32 ordinal
//! ```
//!
//! Loading checks the structure and the partition invariant against the code
//! store, so a snapshot that loads answers queries exactly like a rebuild.

use super::vptree::{Node, NO_CHILD};
use super::{hamming64, CodeStore, IndexError, VpTree};
use crate::model::{Code64, CodeSpace};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"SHGT";
pub const SNAPSHOT_VERSION: u16 = 1;
const NODE_LEN: usize = 18;

pub fn write_snapshot(tree: &VpTree, space: CodeSpace, checksum: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + tree.nodes.len() * NODE_LEN + tree.items.len() * 4);
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.push(space.as_byte());
    out.extend_from_slice(&tree.seed().to_le_bytes());
    out.extend_from_slice(checksum);
    out.extend_from_slice(&(tree.nodes.len() as u64).to_le_bytes());
    for n in &tree.nodes {
        for v in [n.start, n.end, n.near, n.far] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(n.radius);
        out.push(n.leaf as u8);
    }
    out.extend_from_slice(&(tree.items.len() as u64).to_le_bytes());
    for &o in &tree.items {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IndexError::Snapshot(format!("truncated at byte {} (need {n} more)", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, IndexError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self, elem: usize) -> Result<usize, IndexError> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.at) as u64;
        if n.saturating_mul(elem as u64) > remaining {
            return Err(IndexError::Snapshot(format!(
                "count {n} exceeds remaining {remaining} bytes"
            )));
        }
        Ok(n as usize)
    }
}

/// Reads a snapshot for `store`. The snapshot's space and checksum must match.
pub fn read_snapshot(bytes: &[u8], store: &CodeStore, expected_checksum: &[u8; 32]) -> Result<VpTree, IndexError> {
    let bad = |m: String| IndexError::Snapshot(m);
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != SNAPSHOT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let space = r.u8()?;
    if CodeSpace::from_byte(space) != Some(store.space()) {
        return Err(bad(format!(
            "space byte {space} does not match {} store",
            store.space()
        )));
    }
    let seed = r.u64()?;
    if r.take(32)? != expected_checksum {
        return Err(bad("manifest checksum mismatch".into()));
    }
    let node_count = r.count(NODE_LEN)?;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let (start, end, near, far) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        let radius = r.u8()?;
        let leaf = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(bad(format!("invalid leaf flag {b}"))),
        };
        nodes.push(Node {
            start,
            end,
            near,
            far,
            radius,
            leaf,
        });
    }
    let item_count = r.count(4)?;
    let items = (0..item_count).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    if r.at != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    check_structure(&nodes, &items, store)?;
    Ok(VpTree::from_parts(seed, nodes, items, store))
}

fn check_structure(nodes: &[Node], items: &[u32], store: &CodeStore) -> Result<(), IndexError> {
    let bad = |m: String| IndexError::Snapshot(m);
    if items.len() != store.len() {
        return Err(bad(format!("{} items for a store of {}", items.len(), store.len())));
    }
    if items.is_empty() {
        return Err(IndexError::EmptyStore);
    }
    let mut seen = vec![false; items.len()];
    for &o in items {
        match seen.get_mut(o as usize) {
            Some(s) if !*s => *s = true,
            _ => return Err(bad(format!("ordinal {o} out of range or repeated"))),
        }
    }
    if nodes.is_empty() {
        return Err(bad("no nodes".into()));
    }
    let root = nodes[0];
    if root.start != 0 || root.end as usize != items.len() {
        return Err(bad("root does not cover every item".into()));
    }

    let code = |pos: u32| store.codes64()[items[pos as usize] as usize];
    let mut reached = vec![false; nodes.len()];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut reached[i], true) {
            return Err(bad(format!("node {i} reached twice")));
        }
        let n = nodes[i];
        if n.start > n.end || n.end as usize > items.len() {
            return Err(bad(format!("node {i} has invalid range")));
        }
        if n.leaf {
            if n.start == n.end {
                return Err(bad(format!("leaf {i} is empty")));
            }
            continue;
        }
        if n.start == n.end || n.radius > 64 {
            return Err(bad(format!("internal node {i} is malformed")));
        }
        let mut next = n.start + 1;
        for (child, near) in [(n.near, true), (n.far, false)] {
            if child == NO_CHILD {
                continue;
            }
            let c = *nodes
                .get(child as usize)
                .filter(|_| child as usize > i)
                .ok_or_else(|| bad(format!("node {i} has invalid child {child}")))?;
            if c.start != next || c.end > n.end || c.start > c.end {
                return Err(bad(format!("child {child} of node {i} does not tile its range")));
            }
            let vantage: Code64 = code(n.start);
            for pos in c.start..c.end {
                let inside = hamming64(vantage, code(pos)) < n.radius as u32;
                if inside != near {
                    return Err(bad(format!("node {i} violates its partition radius")));
                }
            }
            next = c.end;
            stack.push(child as usize);
        }
        if next != n.end {
            return Err(bad(format!("children of node {i} leave items uncovered")));
        }
    }
    if reached.iter().any(|r| !r) {
        return Err(bad("unreachable nodes".into()));
    }
    Ok(())
}
