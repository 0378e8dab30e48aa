//! Vantage-point tree over 64-bit codes.
//!
//! Items are stored in tree order, so every subtree covers a contiguous range
//! of `items`. An internal node keeps its vantage point at the first slot of
//! its range; the near child holds items with `distance(vantage, item) <
//! radius`, the far child the rest (ties go far). Ranges of at most
//! [`LEAF_SIZE`] items are scanned linearly.

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CodeStore, IndexError};
use crate::model::Code64;

pub const LEAF_SIZE: usize = 32;

pub(crate) const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Node {
    pub start: u32,
    pub end: u32,
    pub near: u32,
    pub far: u32,
    pub radius: u8,
    pub leaf: bool,
}

/// A kNN hit: keyframe ordinal and its 64-bit Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Neighbor {
    pub distance: u32,
    pub ordinal: u32,
}

/// Per-query instrumentation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_visited: usize,
    pub distance_evaluations: usize,
    /// Subtrees skipped by the triangle-inequality bound, with that bound.
    pub pruned: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpTree {
    seed: u64,
    pub(crate) nodes: Vec<Node>,
    pub(crate) items: Vec<u32>,
    codes: Vec<u64>,
}

impl VpTree {
    /// Builds the tree over every code in `store`. Deterministic for a given seed.
    pub fn build(store: &CodeStore, seed: u64) -> Result<Self, IndexError> {
        if store.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        let n = store.len();
        let mut items: Vec<u32> = (0..n as u32).collect();
        let mut codes: Vec<u64> = store.codes64().iter().map(|c| c.0).collect();
        let mut dist = vec![0u8; n];
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // (node slot, start, end); near children are processed before far ones.
        nodes.push(placeholder());
        let mut stack = vec![(0usize, 0usize, n)];
        while let Some((slot, start, end)) = stack.pop() {
            if end - start <= LEAF_SIZE {
                nodes[slot] = leaf(start, end);
                continue;
            }
            let pick = rng.gen_range(start..end);
            items.swap(start, pick);
            codes.swap(start, pick);
            let vantage = codes[start];
            let mut histogram = [0usize; 65];
            for i in start + 1..end {
                let d = (vantage ^ codes[i]).count_ones() as u8;
                dist[i] = d;
                histogram[d as usize] += 1;
            }
            let Some(radius) = split_radius(&histogram, end - start - 1) else {
                // Every item is equidistant from the vantage point; no radius separates them.
                nodes[slot] = leaf(start, end);
                continue;
            };

            let mut mid = start + 1;
            for i in start + 1..end {
                if dist[i] < radius {
                    items.swap(i, mid);
                    codes.swap(i, mid);
                    dist.swap(i, mid);
                    mid += 1;
                }
            }
            let near = nodes.len();
            nodes.push(placeholder());
            let far = nodes.len();
            nodes.push(placeholder());
            nodes[slot] = Node {
                start: start as u32,
                end: end as u32,
                near: near as u32,
                far: far as u32,
                radius,
                leaf: false,
            };
            stack.push((far, mid, end));
            stack.push((near, start + 1, mid));
        }

        Ok(Self {
            seed,
            nodes,
            items,
            codes,
        })
    }

    /// Reassembles a tree from snapshot parts; `codes` are looked up from the store.
    pub(crate) fn from_parts(seed: u64, nodes: Vec<Node>, items: Vec<u32>, store: &CodeStore) -> Self {
        let codes = items.iter().map(|&o| store.codes64()[o as usize].0).collect();
        Self {
            seed,
            nodes,
            items,
            codes,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Ordinals stored under `node`, vantage point included.
    pub fn subtree_ordinals(&self, node: usize) -> &[u32] {
        let n = &self.nodes[node];
        &self.items[n.start as usize..n.end as usize]
    }

    /// Visits every node from the root, returning each indexed ordinal once per
    /// time it is reached (vantage points at their node, leaf items at their leaf).
    pub fn traverse(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.items.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.leaf {
                out.extend_from_slice(&self.items[node.start as usize..node.end as usize]);
            } else {
                out.push(self.items[node.start as usize]);
                for child in [node.far, node.near] {
                    if child != NO_CHILD {
                        stack.push(child as usize);
                    }
                }
            }
        }
        out
    }

    /// Exact k nearest neighbours by 64-bit Hamming distance, ascending,
    /// ties broken by ascending ordinal.
    pub fn knn64(&self, query: Code64, k: usize) -> Result<Vec<Neighbor>, IndexError> {
        self.search(query, k, false).map(|(hits, _)| hits)
    }

    /// [`VpTree::knn64`] with visit counts and the list of pruned subtrees.
    pub fn knn64_with_stats(&self, query: Code64, k: usize) -> Result<(Vec<Neighbor>, SearchStats), IndexError> {
        self.search(query, k, true)
    }

    fn search(&self, query: Code64, k: usize, record: bool) -> Result<(Vec<Neighbor>, SearchStats), IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.items.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        let mut search = Search {
            tree: self,
            query: query.0,
            k: k.min(self.items.len()),
            heap: BinaryHeap::with_capacity(k.min(self.items.len()) + 1),
            stats: SearchStats::default(),
            record,
        };
        search.visit(0);
        let stats = search.stats;
        let mut hits = search.heap.into_vec();
        hits.sort_unstable();
        Ok((hits, stats))
    }
}

struct Search<'a> {
    tree: &'a VpTree,
    query: u64,
    k: usize,
    heap: BinaryHeap<Neighbor>,
    stats: SearchStats,
    record: bool,
}

impl Search<'_> {
    /// Largest distance still admissible; anything strictly farther cannot enter.
    #[inline]
    fn bound(&self) -> u32 {
        if self.heap.len() < self.k {
            u32::MAX
        } else {
            self.heap.peek().map_or(u32::MAX, |n| n.distance)
        }
    }

    #[inline]
    fn offer(&mut self, distance: u32, ordinal: u32) {
        let candidate = Neighbor { distance, ordinal };
        if self.heap.len() < self.k {
            self.heap.push(candidate);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if candidate < *worst {
                *worst = candidate;
            }
        }
    }

    fn visit(&mut self, index: usize) {
        let node = self.tree.nodes[index];
        if self.record {
            self.stats.nodes_visited += 1;
        }
        let (start, end) = (node.start as usize, node.end as usize);
        if node.leaf {
            let mut bound = self.bound();
            for i in start..end {
                let d = (self.query ^ self.tree.codes[i]).count_ones();
                if d <= bound {
                    self.offer(d, self.tree.items[i]);
                    bound = self.bound();
                }
            }
            if self.record {
                self.stats.distance_evaluations += end - start;
            }
            return;
        }

        let d = (self.query ^ self.tree.codes[start]).count_ones();
        if self.record {
            self.stats.distance_evaluations += 1;
        }
        self.offer(d, self.tree.items[start]);
        let radius = node.radius as u32;
        // Near items are within radius - 1 of the vantage point, far items at least radius.
        let near_bound = (d + 1).saturating_sub(radius);
        let far_bound = radius.saturating_sub(d);
        let children = if near_bound <= far_bound {
            [(node.near, near_bound), (node.far, far_bound)]
        } else {
            [(node.far, far_bound), (node.near, near_bound)]
        };
        for (child, lower) in children {
            if child == NO_CHILD {
                continue;
            }
            if lower > self.bound() {
                if self.record {
                    self.stats.pruned.push((child as usize, lower));
                }
                continue;
            }
            self.visit(child as usize);
        }
    }
}

/// Median distance, moved up to the next occupied distance when the median is
/// also the minimum (otherwise the near side would be empty). `None` when all
/// distances are equal.
fn split_radius(histogram: &[usize; 65], count: usize) -> Option<u8> {
    let median_rank = count / 2;
    let mut seen = 0;
    let mut median = 0;
    for (d, &c) in histogram.iter().enumerate() {
        seen += c;
        if seen > median_rank {
            median = d;
            break;
        }
    }
    let has_smaller = histogram[..median].iter().any(|&c| c > 0);
    if has_smaller {
        return Some(median as u8);
    }
    (median + 1..=64).find(|&d| histogram[d] > 0).map(|d| d as u8)
}

fn placeholder() -> Node {
    Node {
        start: 0,
        end: 0,
        near: NO_CHILD,
        far: NO_CHILD,
        radius: 0,
        leaf: true,
    }
}

fn leaf(start: usize, end: usize) -> Node {
    Node {
        start: start as u32,
        end: end as u32,
        near: NO_CHILD,
        far: NO_CHILD,
        radius: 0,
        leaf: true,
    }
}
