//! The customized engine: tuple-at-a-time depth-first multiway join that can
//! be suspended after a fixed number of loop iterations, resumed under any
//! join order, and driven by UCT.

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::num::Real;
use crate::postproc::{self, QueryOutput};
use crate::progress::{Depth, ExecutionState, OffsetVector, ProgressStore};
use crate::query::{newly_applicable, BoundColumn, BoundQuery, QuerySpec};
use crate::reward::{scaled_delta_reward, StateDelta};
use crate::stats::RunStats;
use crate::storage::{filter_unary, Catalog, FilteredTable, HashIndex};
use crate::uct::UctTree;
use crate::Result;

/// Filtered tables plus equality indexes, ready for execution.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    query: BoundQuery,
    tables: Vec<FilteredTable>,
    cards: Vec<usize>,
    indexes: HashMap<BoundColumn, HashIndex>,
}

impl PreparedQuery {
    /// Applies unary predicates and indexes every column appearing in an
    /// equality join predicate. Only surviving rows are indexed.
    pub fn new(query: BoundQuery) -> Result<Self> {
        let m = query.table_count();
        let mut tables = Vec::with_capacity(m);
        for alias in 0..m {
            let source = query.tables()[alias].table.clone();
            tables.push(filter_unary(source, &query.unary_predicates(alias))?);
        }
        let mut indexes = HashMap::new();
        for p in query.predicates() {
            if let Some((l, r)) = p.equi_join() {
                for c in [l, r] {
                    indexes
                        .entry(c)
                        .or_insert_with(|| HashIndex::build_by_index(&tables[c.alias], c.column));
                }
            }
        }
        let cards = tables.iter().map(FilteredTable::cardinality).collect();
        Ok(Self {
            query,
            tables,
            cards,
            indexes,
        })
    }

    pub fn query(&self) -> &BoundQuery {
        &self.query
    }

    pub fn tables(&self) -> &[FilteredTable] {
        &self.tables
    }

    /// Filtered cardinality per alias.
    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn index(&self, c: BoundColumn) -> Option<&HashIndex> {
        self.indexes.get(&c)
    }

    /// Maps filtered indices (alias order) to source rows.
    pub fn source_tuple(&self, indices: &[u32]) -> Vec<u32> {
        indices
            .iter()
            .zip(&self.tables)
            .map(|(&i, t)| t.source_row(i as usize) as u32)
            .collect()
    }
}

/// Binds `spec` against `catalog` and prepares it.
pub fn preprocess_c(spec: &QuerySpec, catalog: &Catalog) -> Result<PreparedQuery> {
    PreparedQuery::new(BoundQuery::bind(spec, catalog)?)
}

/// Per-order evaluation plan.
#[derive(Debug, Clone)]
pub struct OrderPlan {
    order: Vec<usize>,
    /// Join predicates first applicable at each position.
    checks: Vec<Vec<usize>>,
    /// Equality probes per position: (column of the table at this position,
    /// column of an earlier table).
    probes: Vec<Vec<(BoundColumn, BoundColumn)>>,
}

impl OrderPlan {
    pub fn new(prepared: &PreparedQuery, order: &[usize]) -> Self {
        let preds = prepared.query.predicates();
        let mut checks = Vec::with_capacity(order.len());
        let mut probes = Vec::with_capacity(order.len());
        for pos in 0..order.len() {
            let fresh = newly_applicable(preds, order, pos);
            let t = order[pos];
            probes.push(
                fresh
                    .iter()
                    .filter_map(|&i| preds[i].equi_join())
                    .map(|(l, r)| if l.alias == t { (l, r) } else { (r, l) })
                    .collect(),
            );
            checks.push(fresh);
        }
        Self {
            order: order.to_vec(),
            checks,
            probes,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// How the index at a position moves to its next candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    /// Next index.
    Linear,
    /// Next index matching all applicable equality predicates.
    Indexed,
}

/// Deduplicated result index vectors (filtered indices, alias order).
#[derive(Debug, Clone, Default)]
pub struct ResultSet {
    tuples: HashSet<Vec<u32>>,
}

impl ResultSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, indices: &[usize]) -> bool {
        self.tuples.insert(indices.iter().map(|&i| i as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, indices: &[u32]) -> bool {
        self.tuples.contains(indices)
    }

    pub fn index_bytes(&self) -> usize {
        self.tuples.iter().map(|t| t.len() * std::mem::size_of::<u32>()).sum()
    }

    /// Sorted vectors.
    pub fn into_sorted(self) -> Vec<Vec<u32>> {
        let mut v: Vec<_> = self.tuples.into_iter().collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinCounters {
    pub iterations: u64,
    /// Partial tuples passing their predicates.
    pub examined: u64,
    pub evaluations: u64,
}

fn seek(prepared: &PreparedQuery, plan: &OrderPlan, s: &[usize], pos: usize, from: usize, mode: Advance) -> usize {
    let card = prepared.cards[plan.order[pos]];
    let probes = &plan.probes[pos];
    if mode == Advance::Linear || probes.is_empty() || from >= card {
        return from;
    }
    let mut x = from;
    'leap: loop {
        for &(own, other) in probes {
            let v = prepared.tables[other.alias].value(other.column, s[other.alias]);
            let index = prepared.indexes.get(&own).expect("equality column indexed");
            match index.next_at_least(v, x) {
                None => return card,
                Some(y) if y > x => {
                    x = y;
                    continue 'leap;
                }
                Some(_) => {}
            }
        }
        return x;
    }
}

fn advance(
    prepared: &PreparedQuery,
    plan: &OrderPlan,
    offsets: &OffsetVector,
    s: &mut [usize],
    depth: usize,
    mode: Advance,
) -> Depth {
    let order = &plan.order;
    let mut i = depth;
    s[order[i]] = seek(prepared, plan, s, i, s[order[i]] + 1, mode);
    while s[order[i]] >= prepared.cards[order[i]] {
        if i == 0 {
            return Depth::Done;
        }
        s[order[i]] = offsets.get(order[i]);
        i -= 1;
        s[order[i]] = seek(prepared, plan, s, i, s[order[i]] + 1, mode);
    }
    for &t in &order[i + 1..] {
        s[t] = offsets.get(t);
    }
    Depth::At(i)
}

/// Moves to the next candidate tuple at `depth`, carrying into shallower
/// positions on exhaustion. Deeper positions restart at their offsets.
pub fn next_tuple(prepared: &PreparedQuery, plan: &OrderPlan, offsets: &OffsetVector, s: &mut [usize], depth: usize) -> Depth {
    advance(prepared, plan, offsets, s, depth, Advance::Linear)
}

/// As [`next_tuple`], but jumps directly to the next index agreeing with all
/// equality predicates applicable at `depth`.
pub fn next_tuple_indexed(
    prepared: &PreparedQuery,
    plan: &OrderPlan,
    offsets: &OffsetVector,
    s: &mut [usize],
    depth: usize,
) -> Depth {
    advance(prepared, plan, offsets, s, depth, Advance::Indexed)
}

/// Resets position `depth` and advances its parent.
fn exhaust(prepared: &PreparedQuery, plan: &OrderPlan, offsets: &OffsetVector, s: &mut [usize], depth: usize, mode: Advance) -> Depth {
    if depth == 0 {
        return Depth::Done;
    }
    s[plan.order[depth]] = offsets.get(plan.order[depth]);
    advance(prepared, plan, offsets, s, depth - 1, mode)
}

fn passes(prepared: &PreparedQuery, plan: &OrderPlan, s: &[usize], pos: usize) -> bool {
    let preds = prepared.query.predicates();
    plan.checks[pos]
        .iter()
        .all(|&p| preds[p].eval(|c| prepared.tables[c.alias].value(c.column, s[c.alias])))
}

/// Resumes the join for `plan`'s order from `state` for at most `budget`
/// loop iterations. The prefix up to the stored depth is re-verified first
/// at no charge. Returns true once the order's enumeration is complete.
#[allow(clippy::too_many_arguments)]
pub fn continue_join(
    prepared: &PreparedQuery,
    plan: &OrderPlan,
    offsets: &OffsetVector,
    budget: u64,
    state: &mut ExecutionState,
    result: &mut ResultSet,
    mode: Advance,
    counters: &mut JoinCounters,
) -> bool {
    let order = &plan.order;
    let m = order.len();
    let cards = &prepared.cards;
    let target = match state.depth {
        Depth::Done => return true,
        Depth::At(d) => d.min(m - 1),
    };
    if order.iter().any(|&t| cards[t] == 0) {
        state.depth = Depth::Done;
        return true;
    }
    let s = &mut state.indices;
    let mut i = 0;
    while i < target && s[order[i]] < cards[order[i]] {
        counters.evaluations += 1;
        if !passes(prepared, plan, s, i) {
            break;
        }
        i += 1;
    }
    let mut depth = Depth::At(i);
    for _ in 0..budget {
        let Depth::At(i) = depth else { break };
        counters.iterations += 1;
        let t = order[i];
        if s[t] >= cards[t] {
            depth = exhaust(prepared, plan, offsets, s, i, mode);
            continue;
        }
        counters.evaluations += 1;
        if !passes(prepared, plan, s, i) {
            depth = advance(prepared, plan, offsets, s, i, mode);
            continue;
        }
        counters.examined += 1;
        if i + 1 == m {
            result.insert(s);
            depth = advance(prepared, plan, offsets, s, i, mode);
        } else {
            let next = order[i + 1];
            s[next] = seek(prepared, plan, s, i + 1, s[next], mode);
            depth = if s[next] >= cards[next] {
                exhaust(prepared, plan, offsets, s, i + 1, mode)
            } else {
                Depth::At(i + 1)
            };
        }
    }
    state.depth = depth;
    depth == Depth::Done
}

#[derive(Debug, Clone)]
pub struct SkinnerCConfig {
    /// Loop iterations per time slice.
    pub budget: u64,
    /// UCT exploration weight.
    pub w: f64,
    pub seed: u64,
    pub mode: Advance,
    /// Stop early after this many slices.
    pub max_slices: Option<u64>,
}

impl Default for SkinnerCConfig {
    fn default() -> Self {
        Self {
            budget: 500,
            w: 1e-6,
            seed: 42,
            mode: Advance::Indexed,
            max_slices: None,
        }
    }
}

/// Join result as sorted source-row tuples, plus run statistics.
#[derive(Debug, Clone)]
pub struct Execution {
    pub tuples: Vec<Vec<u32>>,
    pub stats: RunStats,
    pub finished: bool,
}

impl Execution {
    pub fn output(&self, query: &BoundQuery) -> QueryOutput {
        postproc::finish(query, &self.tuples)
    }
}

fn aliases(prepared: &PreparedQuery) -> Vec<String> {
    prepared.query.tables().iter().map(|t| t.alias.clone()).collect()
}

fn into_execution(prepared: &PreparedQuery, result: ResultSet, mut stats: RunStats, counters: JoinCounters, finished: bool) -> Execution {
    stats.result_rows = result.len() as u64;
    stats.result_index_bytes = result.index_bytes() as u64;
    stats.examined_tuples = counters.examined;
    stats.predicate_evaluations = counters.evaluations;
    stats.finalize(&aliases(prepared));
    let mut tuples: Vec<Vec<u32>> = result.into_sorted().iter().map(|t| prepared.source_tuple(t)).collect();
    tuples.sort_unstable();
    Execution {
        tuples,
        stats,
        finished,
    }
}

/// Learned execution: pick an order by UCT, resume it for one slice, reward
/// its progress, store its state; until some order completes.
pub fn skinner_c(prepared: &PreparedQuery, cfg: &SkinnerCConfig) -> Execution {
    skinner_c_with::<f64>(prepared, cfg)
}

/// [`skinner_c`] with a chosen scalar type for UCT statistics.
pub fn skinner_c_with<R: Real>(prepared: &PreparedQuery, cfg: &SkinnerCConfig) -> Execution {
    let m = prepared.query.table_count();
    let graph = prepared.query.graph();
    let mut tree = UctTree::<R>::new(m, R::from_f64_lossy(cfg.w));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ProgressStore::new();
    let mut offsets = OffsetVector::zeros(m);
    let mut result = ResultSet::new();
    let mut plans: HashMap<Vec<usize>, OrderPlan> = HashMap::new();
    let mut counters = JoinCounters::default();
    let mut stats = RunStats::default();
    let mut finished = false;
    let budget = cfg.budget.max(1);
    while cfg.max_slices.is_none_or(|cap| stats.slices < cap) {
        let order = tree.select(graph, &mut rng);
        let plan = plans
            .entry(order.to_vec())
            .or_insert_with(|| OrderPlan::new(prepared, &order));
        let mut state = store.restore_state(&order, &offsets);
        let start = state.indices.clone();
        let done = continue_join(prepared, plan, &offsets, budget, &mut state, &mut result, cfg.mode, &mut counters);
        let delta = StateDelta::between(&start, &state.indices, done, &order, &prepared.cards);
        let reward: R = scaled_delta_reward(&delta);
        tree.update(&order, reward);
        store.backup_state(&order, &state, &mut offsets);
        stats.record_slice(&order, reward.to_f64().unwrap_or(0.0), tree.node_count());
        if done {
            finished = true;
            break;
        }
    }
    stats.progress_nodes = store.node_count() as u64;
    into_execution(prepared, result, stats, counters, finished)
}

/// Executes one fixed order to completion, or until more than
/// `examined_cap` tuples were examined.
pub fn run_fixed_order(prepared: &PreparedQuery, order: &[usize], mode: Advance, examined_cap: Option<u64>) -> Execution {
    const CHUNK: u64 = 4096;
    let m = order.len();
    let plan = OrderPlan::new(prepared, order);
    let offsets = OffsetVector::zeros(m);
    let mut state = ExecutionState::fresh(&offsets);
    let mut result = ResultSet::new();
    let mut counters = JoinCounters::default();
    let mut stats = RunStats::default();
    let finished = loop {
        let done = continue_join(prepared, &plan, &offsets, CHUNK, &mut state, &mut result, mode, &mut counters);
        stats.record_slice(order, 0.0, 0);
        if done {
            break true;
        }
        if examined_cap.is_some_and(|cap| counters.examined > cap) {
            break false;
        }
    };
    into_execution(prepared, result, stats, counters, finished)
}
