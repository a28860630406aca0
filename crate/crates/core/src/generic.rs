//! Learning on top of an engine that can only run whole plans under a
//! timeout: tables are split into batches, each invocation joins one batch
//! of the leftmost table with the unprocessed rest, timeouts follow a
//! pyramid scheme, and every timeout level has its own UCT tree.
//!
//! The hybrid variant alternates a fixed traditional plan (doubling
//! timeouts) with learning episodes of equal length.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::executor::{Execution, PreparedQuery};
use crate::num::Real;
use crate::oracle::left_deep;
use crate::reward::binary_reward;
use crate::stats::RunStats;
use crate::uct::UctTree;

/// Splits `rows` into at most `b` contiguous ranges whose sizes differ by at
/// most one, larger ranges first.
pub fn partition_batches(rows: usize, b: usize) -> Vec<Range<usize>> {
    assert!(b >= 1, "at least one batch");
    let count = b.min(rows);
    if count == 0 {
        return Vec::new();
    }
    let (base, extra) = (rows / count, rows % count);
    let mut start = 0;
    (0..count)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Time units spent per timeout level.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeoutLedger {
    n: Vec<u64>,
}

impl TimeoutLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn at(&self, l: usize) -> u64 {
        self.n.get(l).copied().unwrap_or(0)
    }

    /// Largest level `L` such that every lower level already holds at least
    /// `n_L + 2^L` units.
    pub fn peek_level(&self) -> usize {
        let mut best = 0;
        // Beyond the ledger's length the condition fails at an empty level.
        for level in 1..=self.n.len() {
            let need = self.at(level) + (1u64 << level);
            if (0..level).all(|l| self.at(l) >= need) {
                best = level;
            }
        }
        best
    }

    /// Chooses the next level and charges its timeout `2^L`.
    pub fn next_timeout(&mut self) -> (usize, u64) {
        let level = self.peek_level();
        if self.n.len() <= level {
            self.n.resize(level + 1, 0);
        }
        let timeout = 1u64 << level;
        self.n[level] += timeout;
        (level, timeout)
    }

    /// Units allocated per level.
    pub fn allocations(&self) -> &[u64] {
        &self.n
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }

    pub fn used_levels(&self) -> usize {
        self.n.iter().filter(|&&x| x > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Invocation {
    pub success: bool,
    pub consumed: u64,
}

/// Engine that runs a left-deep plan for the given order over per-alias row
/// ranges, giving up after `timeout` units. Results of successful
/// invocations accumulate inside the engine; timed-out work is lost.
pub trait BlackBoxEngine {
    fn execute(&mut self, order: &[usize], ranges: &[Range<usize>], timeout: u64) -> Invocation;
}

/// Engine charging `alpha` units per tuple touched by the left-deep plan:
/// the leftmost rows plus every intermediate result.
#[derive(Debug)]
pub struct SimulatedEngine<'a> {
    prepared: &'a PreparedQuery,
    alpha: u64,
    results: Vec<Vec<u32>>,
    invocations: u64,
}

impl<'a> SimulatedEngine<'a> {
    pub fn new(prepared: &'a PreparedQuery, alpha: u64) -> Self {
        assert!(alpha >= 1);
        Self {
            prepared,
            alpha,
            results: Vec::new(),
            invocations: 0,
        }
    }

    /// Source-row tuples gathered so far.
    pub fn results(&self) -> &[Vec<u32>] {
        &self.results
    }

    pub fn into_results(self) -> Vec<Vec<u32>> {
        self.results
    }

    pub fn invocations(&self) -> u64 {
        self.invocations
    }

    /// Cost of a full run of `order` on all rows, in units.
    pub fn full_cost(&self, order: &[usize]) -> u64 {
        let rows: Vec<&[u32]> = self.prepared.tables().iter().map(|t| t.rows()).collect();
        let r = left_deep(self.prepared.query(), &rows, order, None, true, false).expect("uncapped");
        r.cost * self.alpha
    }
}

impl BlackBoxEngine for SimulatedEngine<'_> {
    fn execute(&mut self, order: &[usize], ranges: &[Range<usize>], timeout: u64) -> Invocation {
        self.invocations += 1;
        let rows: Vec<&[u32]> = self
            .prepared
            .tables()
            .iter()
            .zip(ranges)
            .map(|(t, r)| &t.rows()[r.clone()])
            .collect();
        match left_deep(self.prepared.query(), &rows, order, Some(timeout / self.alpha), true, true) {
            Some(r) => {
                self.results.extend(r.tuples);
                Invocation {
                    success: true,
                    consumed: r.cost * self.alpha,
                }
            }
            None => Invocation {
                success: false,
                consumed: timeout,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenericConfig {
    pub batches: usize,
    pub w: f64,
    pub seed: u64,
}

impl Default for GenericConfig {
    fn default() -> Self {
        Self {
            batches: 10,
            w: std::f64::consts::SQRT_2,
            seed: 42,
        }
    }
}

/// Learning state that persists across invocations and episodes.
#[derive(Debug, Clone)]
pub struct GenericLearner<R> {
    ledger: TimeoutLedger,
    trees: Vec<UctTree<R>>,
    batches: Vec<Vec<Range<usize>>>,
    next_batch: Vec<usize>,
    cards: Vec<usize>,
    graph: crate::query::JoinGraph,
    rng: ChaCha8Rng,
    w: R,
    stats: RunStats,
}

impl<R: Real> GenericLearner<R> {
    pub fn new(prepared: &PreparedQuery, cfg: &GenericConfig) -> Self {
        let cards = prepared.cardinalities().to_vec();
        Self {
            ledger: TimeoutLedger::new(),
            trees: Vec::new(),
            batches: cards.iter().map(|&c| partition_batches(c, cfg.batches)).collect(),
            next_batch: vec![0; cards.len()],
            cards,
            graph: prepared.query().graph().clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            w: R::from_f64_lossy(cfg.w),
            stats: RunStats::default(),
        }
    }

    /// True once every batch of some table is processed: each result
    /// contains one of its tuples, so all results have been produced.
    pub fn finished(&self) -> bool {
        self.next_batch.iter().zip(&self.batches).any(|(&n, b)| n >= b.len())
    }

    /// Timeout the next invocation will get.
    pub fn peek_timeout(&self) -> u64 {
        1u64 << self.ledger.peek_level()
    }

    pub fn ledger(&self) -> &TimeoutLedger {
        &self.ledger
    }

    pub fn tree(&self, level: usize) -> Option<&UctTree<R>> {
        self.trees.get(level)
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn into_stats(self) -> RunStats {
        self.stats
    }

    /// One engine invocation; returns the units consumed.
    pub fn step<E: BlackBoxEngine + ?Sized>(&mut self, engine: &mut E) -> u64 {
        let (level, timeout) = self.ledger.next_timeout();
        let m = self.cards.len();
        while self.trees.len() <= level {
            self.trees.push(UctTree::new(m, self.w));
        }
        let order = self.trees[level].select(&self.graph, &mut self.rng);
        let lead = order[0];
        let ranges: Vec<Range<usize>> = (0..m)
            .map(|t| {
                let current = &self.batches[t][self.next_batch[t]];
                if t == lead {
                    current.clone()
                } else {
                    current.start..self.cards[t]
                }
            })
            .collect();
        let out = engine.execute(&order, &ranges, timeout);
        let reward: R = binary_reward(out.success);
        self.trees[level].update(&order, reward);
        if out.success {
            self.next_batch[lead] += 1;
        }
        self.stats.total_units += out.consumed;
        let nodes = self.trees.iter().map(UctTree::node_count).sum();
        self.stats.record_slice(&order, if out.success { 1.0 } else { 0.0 }, nodes);
        out.consumed
    }
}

/// Runs the learner against `engine` until the query is complete.
pub fn skinner_g<R: Real, E: BlackBoxEngine + ?Sized>(prepared: &PreparedQuery, engine: &mut E, cfg: &GenericConfig) -> RunStats {
    let mut learner = GenericLearner::<R>::new(prepared, cfg);
    while !learner.finished() {
        learner.step(engine);
    }
    learner.into_stats()
}

fn execution(prepared: &PreparedQuery, mut tuples: Vec<Vec<u32>>, mut stats: RunStats) -> Execution {
    tuples.sort_unstable();
    stats.result_rows = tuples.len() as u64;
    stats.result_index_bytes = (tuples.len() * prepared.query().table_count() * std::mem::size_of::<u32>()) as u64;
    let aliases: Vec<String> = prepared.query().tables().iter().map(|t| t.alias.clone()).collect();
    stats.finalize(&aliases);
    Execution {
        tuples,
        stats,
        finished: true,
    }
}

/// [`skinner_g`] on a [`SimulatedEngine`] with one unit per tuple.
pub fn skinner_g_simulated(prepared: &PreparedQuery, cfg: &GenericConfig) -> Execution {
    let mut engine = SimulatedEngine::new(prepared, 1);
    let stats = skinner_g::<f64, _>(prepared, &mut engine, cfg);
    execution(prepared, engine.into_results(), stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridWinner {
    Traditional,
    Learned,
}

#[derive(Debug, Clone)]
pub struct HybridOutcome {
    pub winner: HybridWinner,
    pub traditional_units: u64,
    pub learned_units: u64,
    pub stats: RunStats,
}

impl HybridOutcome {
    pub fn total_units(&self) -> u64 {
        self.traditional_units + self.learned_units
    }
}

/// Alternates the traditional plan, with timeout `2^i` on its `i`-th try,
/// and learning episodes lasting as long as the preceding try. Stops when
/// either side completes. Results land in the engine of the winning side.
pub fn skinner_h<R: Real, E: BlackBoxEngine + ?Sized>(
    prepared: &PreparedQuery,
    traditional: &mut E,
    learned: &mut E,
    traditional_order: &[usize],
    cfg: &GenericConfig,
) -> HybridOutcome {
    let mut learner = GenericLearner::<R>::new(prepared, cfg);
    let full: Vec<Range<usize>> = prepared.cardinalities().iter().map(|&c| 0..c).collect();
    let mut traditional_units = 0u64;
    let mut learned_units = 0u64;
    let mut tries = 0u32;
    let winner = loop {
        let timeout = 1u64 << tries.min(62);
        tries += 1;
        let out = traditional.execute(traditional_order, &full, timeout);
        traditional_units += out.consumed;
        if out.success {
            break HybridWinner::Traditional;
        }
        let mut remaining = out.consumed;
        while !learner.finished() && learner.peek_timeout() <= remaining {
            let used = learner.step(learned);
            learned_units += used;
            remaining -= used;
        }
        if learner.finished() {
            break HybridWinner::Learned;
        }
    };
    let mut stats = learner.into_stats();
    stats.total_units = traditional_units + learned_units;
    HybridOutcome {
        winner,
        traditional_units,
        learned_units,
        stats,
    }
}

/// [`skinner_h`] on two simulated engines.
pub fn skinner_h_simulated(prepared: &PreparedQuery, traditional_order: &[usize], cfg: &GenericConfig) -> (Execution, HybridOutcome) {
    let mut trad = SimulatedEngine::new(prepared, 1);
    let mut learn = SimulatedEngine::new(prepared, 1);
    let outcome = skinner_h::<f64, _>(prepared, &mut trad, &mut learn, traditional_order, cfg);
    let tuples = match outcome.winner {
        HybridWinner::Traditional => trad.into_results(),
        HybridWinner::Learned => learn.into_results(),
    };
    (execution(prepared, tuples, outcome.stats.clone()), outcome)
}
