//! Per-run counters and their JSON form.

use std::collections::BTreeMap;

use serde::Serialize;

/// One time slice (or engine invocation): the order tried and its reward.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord {
    pub order: Vec<usize>,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub slices: u64,
    /// Join result tuples, before projection.
    pub result_rows: u64,
    /// UCT node count after each slice.
    pub tree_nodes_timeline: Vec<u64>,
    /// Slices per leftmost alias.
    pub per_first_table_visits: BTreeMap<String, u64>,
    /// Share of slices spent on the most frequently chosen order.
    pub top_order_share: f64,
    /// Partial tuples that satisfied all predicates applicable to them.
    pub examined_tuples: u64,
    pub progress_nodes: u64,
    /// Bytes held by result index vectors.
    pub result_index_bytes: u64,
    /// Candidate tuples checked against predicates.
    pub predicate_evaluations: u64,
    /// Time units charged by a black-box engine.
    pub total_units: u64,
    #[serde(skip)]
    pub slice_log: Vec<SliceRecord>,
}

impl RunStats {
    pub fn record_slice(&mut self, order: &[usize], reward: f64, tree_nodes: usize) {
        self.slices += 1;
        self.tree_nodes_timeline.push(tree_nodes as u64);
        self.slice_log.push(SliceRecord {
            order: order.to_vec(),
            reward,
        });
    }

    /// Slices per distinct order.
    pub fn order_visits(&self) -> BTreeMap<Vec<usize>, u64> {
        let mut m = BTreeMap::new();
        for s in &self.slice_log {
            *m.entry(s.order.clone()).or_insert(0) += 1;
        }
        m
    }

    /// Fraction of slices spent on the `k` most frequent orders.
    pub fn top_k_share(&self, k: usize) -> f64 {
        if self.slice_log.is_empty() {
            return 0.0;
        }
        let mut counts: Vec<u64> = self.order_visits().into_values().collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts.iter().take(k).sum::<u64>() as f64 / self.slice_log.len() as f64
    }

    /// Fraction of slices whose order starts with alias `t`.
    pub fn first_table_share(&self, t: usize) -> f64 {
        if self.slice_log.is_empty() {
            return 0.0;
        }
        let hits = self.slice_log.iter().filter(|s| s.order.first() == Some(&t)).count();
        hits as f64 / self.slice_log.len() as f64
    }

    /// Fills the fields derived from the slice log; `aliases` names tables.
    pub fn finalize(&mut self, aliases: &[String]) {
        self.per_first_table_visits.clear();
        for s in &self.slice_log {
            if let Some(&t) = s.order.first() {
                *self.per_first_table_visits.entry(aliases[t].clone()).or_insert(0) += 1;
            }
        }
        self.top_order_share = self.top_k_share(1);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}
