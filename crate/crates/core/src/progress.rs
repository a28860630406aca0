//! Execution-state persistence per join order, tuple offsets, and
//! fast-forwarding of one order's state using another order that shares a
//! prefix.
//!
//! All indices are 0-based positions in the filtered tables. State vectors are
//! stored in alias order; comparisons between states are lexicographic along
//! the positions of a join order, which coincides with the enumeration order
//! of the depth-first join.

use std::cmp::Ordering;

/// Join-order position the executor stopped at, or exhaustion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    At(usize),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionState {
    /// Tuple index per alias.
    pub indices: Vec<usize>,
    pub depth: Depth,
}

impl ExecutionState {
    /// State at the offsets, depth 0.
    pub fn fresh(offsets: &OffsetVector) -> Self {
        Self {
            indices: offsets.0.clone(),
            depth: Depth::At(0),
        }
    }

    pub fn is_done(&self) -> bool {
        self.depth == Depth::Done
    }
}

/// Per-alias index below which every tuple has been joined with everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetVector(Vec<usize>);

impl OffsetVector {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0; m])
    }

    pub fn get(&self, alias: usize) -> usize {
        self.0[alias]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Raises the offset of `alias` to `value` if larger.
    pub fn raise(&mut self, alias: usize, value: usize) {
        if value > self.0[alias] {
            self.0[alias] = value;
        }
    }
}

/// Lexicographic comparison of the first `len` positions of `order`.
pub fn compare_along(a: &[usize], b: &[usize], order: &[usize], len: usize) -> Ordering {
    order[..len]
        .iter()
        .map(|&t| a[t].cmp(&b[t]))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Whether `s` (reached under `order`) is ahead of `s_other` (under `other`),
/// both orders sharing their first `k` tables. Returns the smallest position
/// `p < k` with `s >= s_other` on all earlier positions and
/// `s[p] > s_other[p] + 1`.
pub fn state_is_ahead(s: &[usize], s_other: &[usize], order: &[usize], other: &[usize], k: usize) -> Option<usize> {
    debug_assert_eq!(order[..k], other[..k]);
    for p in 0..k {
        let (a, b) = (s[order[p]], s_other[other[p]]);
        if a > b + 1 {
            return Some(p);
        }
        if a < b {
            return None;
        }
    }
    None
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: Vec<(usize, u32)>,
    /// Most advanced state (over this node's prefix) of any order through it.
    best: Option<ExecutionState>,
}

/// Trie over join-order prefixes; node at depth `k` keeps the most advanced
/// state of any order sharing that `k`-prefix, the leaf keeps the order's own.
#[derive(Debug, Clone)]
pub struct ProgressStore {
    nodes: Vec<TrieNode>,
}

impl Default for ProgressStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ProgressStore {
    pub fn new() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn find(&self, prefix: &[usize]) -> Option<&TrieNode> {
        let mut id = 0u32;
        for &t in prefix {
            id = self.nodes[id as usize].children.iter().find(|(c, _)| *c == t)?.1;
        }
        Some(&self.nodes[id as usize])
    }

    /// State stored for exactly this order.
    pub fn stored(&self, order: &[usize]) -> Option<&ExecutionState> {
        self.find(order).and_then(|n| n.best.as_ref())
    }

    /// Records `state` for `order` and raises the leftmost table's offset:
    /// every leftmost tuple strictly below the current index is complete.
    pub fn backup_state(&mut self, order: &[usize], state: &ExecutionState, offsets: &mut OffsetVector) {
        let m = order.len();
        let mut id = 0usize;
        for (k, &t) in order.iter().enumerate() {
            let next = match self.nodes[id].children.iter().find(|(c, _)| *c == t) {
                Some(&(_, c)) => c as usize,
                None => {
                    let c = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[id].children.push((t, c as u32));
                    c
                }
            };
            id = next;
            let len = k + 1;
            let node = &mut self.nodes[id];
            let replace = match &node.best {
                None => true,
                Some(_) if len == m => true,
                Some(b) => compare_along(&state.indices, &b.indices, order, len) == Ordering::Greater,
            };
            if replace {
                node.best = Some(state.clone());
            }
        }
        offsets.raise(order[0], state.indices[order[0]]);
    }

    /// Most advanced safe starting state for `order`: its own stored state or
    /// a state fast-forwarded from any order sharing a prefix, whichever is
    /// lexicographically largest. A leftmost index behind the offset restarts
    /// fresh at the offsets. Only an unmodified own state keeps its depth.
    pub fn restore_state(&self, order: &[usize], offsets: &OffsetVector) -> ExecutionState {
        let m = order.len();
        let own = self
            .stored(order)
            .cloned()
            .unwrap_or_else(|| ExecutionState::fresh(offsets));
        if own.is_done() {
            return own;
        }
        let mut best = own.indices.clone();
        let mut depth = own.depth;
        for k in 1..m {
            let Some(node) = self.find(&order[..k]) else { break };
            let Some(cand) = &node.best else { continue };
            // Positions below k are shared, so `cand`'s order agrees with
            // ours on order[..k].
            if let Some(p) = state_is_ahead(&cand.indices, &own.indices, order, order, k) {
                let mut merged = offsets.as_slice().to_vec();
                for &t in &order[..p] {
                    merged[t] = cand.indices[t];
                }
                merged[order[p]] = cand.indices[order[p]] - 1;
                if compare_along(&merged, &best, order, m) == Ordering::Greater {
                    best = merged;
                    depth = Depth::At(0);
                }
            }
        }
        let lead = order[0];
        if best[lead] < offsets.get(lead) {
            best = offsets.as_slice().to_vec();
            depth = Depth::At(0);
        }
        ExecutionState { indices: best, depth }
    }
}
