//! UCT search over join-order prefixes.
//!
//! The tree is materialized lazily: each [`UctTree::select`] call adds at most
//! one node (the first prefix that falls outside the tree) and completes the
//! rest of the order uniformly at random among eligible tables.

use rand::Rng;

use crate::num::Real;
use crate::query::{JoinGraph, JoinOrder, TableSet};

/// Upper confidence bound of a child. Unvisited children score `+inf`.
#[inline]
pub fn uct_score<R: Real>(child_mean: R, child_visits: u64, parent_visits: u64, w: R) -> R {
    if child_visits == 0 {
        return R::infinity();
    }
    if w == R::zero() {
        return child_mean;
    }
    let ln_parent = R::from_count(parent_visits.max(1)).ln();
    child_mean + w * (ln_parent / R::from_count(child_visits)).sqrt()
}

type NodeId = u32;

#[derive(Debug, Clone)]
pub struct UctNode<R> {
    visits: u64,
    mean: R,
    children: Vec<(usize, NodeId)>,
}

impl<R: Real> UctNode<R> {
    fn new() -> Self {
        Self {
            visits: 0,
            mean: R::zero(),
            children: Vec::new(),
        }
    }

    pub fn visits(&self) -> u64 {
        self.visits
    }

    pub fn mean_reward(&self) -> R {
        self.mean
    }

    fn child(&self, table: usize) -> Option<NodeId> {
        self.children.iter().find(|(t, _)| *t == table).map(|&(_, id)| id)
    }
}

/// Partial search tree over join-order prefixes. The root is the empty prefix.
#[derive(Debug, Clone)]
pub struct UctTree<R> {
    nodes: Vec<UctNode<R>>,
    tables: usize,
    w: R,
}

const ROOT: NodeId = 0;

impl<R: Real> UctTree<R> {
    pub fn new(tables: usize, w: R) -> Self {
        assert!(w >= R::zero(), "exploration weight must be nonnegative");
        Self {
            nodes: vec![UctNode::new()],
            tables,
            w,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn exploration_weight(&self) -> R {
        self.w
    }

    pub fn root(&self) -> &UctNode<R> {
        &self.nodes[ROOT as usize]
    }

    /// Node reached by following `prefix` from the root, if materialized.
    pub fn node(&self, prefix: &[usize]) -> Option<&UctNode<R>> {
        let mut id = ROOT;
        for &t in prefix {
            id = self.nodes[id as usize].child(t)?;
        }
        Some(&self.nodes[id as usize])
    }

    /// Materialized children of the node at `prefix` as `(table, node)`.
    pub fn children(&self, prefix: &[usize]) -> Vec<(usize, &UctNode<R>)> {
        self.node(prefix)
            .map(|n| n.children.iter().map(|&(t, id)| (t, &self.nodes[id as usize])).collect())
            .unwrap_or_default()
    }

    /// Chooses a complete join order. Ties (including several unvisited
    /// children) are broken uniformly at random.
    pub fn select<G: Rng + ?Sized>(&mut self, graph: &JoinGraph, rng: &mut G) -> JoinOrder {
        debug_assert_eq!(graph.table_count(), self.tables);
        let mut order = Vec::with_capacity(self.tables);
        let mut chosen = TableSet::EMPTY;
        let mut at = Some(ROOT);
        let mut ties: Vec<usize> = Vec::new();
        while order.len() < self.tables {
            let eligible = graph.eligible_tables(chosen);
            let next = match at {
                Some(id) => {
                    let node = &self.nodes[id as usize];
                    let mut best = R::neg_infinity();
                    ties.clear();
                    for t in eligible.iter() {
                        let score = match node.child(t) {
                            Some(c) => {
                                let c = &self.nodes[c as usize];
                                uct_score(c.mean, c.visits, node.visits, self.w)
                            }
                            None => R::infinity(),
                        };
                        if score > best {
                            best = score;
                            ties.clear();
                            ties.push(t);
                        } else if score == best {
                            ties.push(t);
                        }
                    }
                    let t = ties[rng.gen_range(0..ties.len())];
                    match self.nodes[id as usize].child(t) {
                        Some(c) => at = Some(c),
                        None => {
                            let new_id = self.nodes.len() as NodeId;
                            self.nodes.push(UctNode::new());
                            self.nodes[id as usize].children.push((t, new_id));
                            // Expansion happened; the remainder is a random rollout.
                            at = None;
                        }
                    }
                    t
                }
                None => {
                    let k = rng.gen_range(0..eligible.len());
                    eligible.iter().nth(k).expect("eligible set is nonempty")
                }
            };
            chosen = chosen.with(next);
            order.push(next);
        }
        JoinOrder::from_vec_unchecked(order)
    }

    /// Back-propagates `reward` along the materialized part of `order`'s path.
    /// Rewards outside `[0, 1]` are clamped.
    pub fn update(&mut self, order: &[usize], reward: R) {
        let reward = if reward < R::zero() || reward > R::one() || reward.is_nan() {
            log::warn!("reward {reward:?} outside [0,1], clamping");
            reward.clamp_unit()
        } else {
            reward
        };
        let mut id = ROOT;
        self.bump(id, reward);
        for &t in order {
            match self.nodes[id as usize].child(t) {
                Some(c) => {
                    id = c;
                    self.bump(id, reward);
                }
                None => break,
            }
        }
    }

    fn bump(&mut self, id: NodeId, reward: R) {
        let n = &mut self.nodes[id as usize];
        n.visits += 1;
        n.mean = n.mean + (reward - n.mean) / R::from_count(n.visits);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn score_examples() {
        // 0.5 + sqrt(2) * sqrt(ln 8 / 2) = 0.5 + sqrt(ln 8), evaluated
        // independently in double precision.
        let s = uct_score(0.5f64, 2, 8, std::f64::consts::SQRT_2);
        assert!(close(s, 1.942026886600883, 1e-12), "{s}");
        assert_eq!(uct_score(0.37f64, 5, 100, 0.0), 0.37);
        assert!(uct_score(0.1f64, 0, 5, 1.0).is_infinite());
        assert!(uct_score(0.1f32, 0, 5, 1.0).is_infinite());
    }

    fn flat(m: usize) -> JoinGraph {
        JoinGraph::new(m)
    }

    #[test]
    fn fresh_select_adds_one_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = UctTree::<f64>::new(3, 1.0);
        let order = tree.select(&flat(3), &mut rng);
        assert_eq!(tree.node_count(), 2);
        let mut sorted = order.to_vec();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn single_table_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tree = UctTree::<f64>::new(1, 1.0);
        for _ in 0..3 {
            let o = tree.select(&flat(1), &mut rng);
            assert_eq!(o.as_slice(), &[0]);
            tree.update(&o, 1.0);
        }
    }

    #[test]
    fn greedy_picks_higher_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tree = UctTree::<f64>::new(2, 0.0);
        let g = flat(2);
        // Materialize both root children.
        while tree.root().children.len() < 2 {
            let o = tree.select(&g, &mut rng);
            tree.update(&o, 0.0);
        }
        // Reset stats to visits (10, 1) and means (0.2, 0.9).
        let (a, b) = (tree.root().child(0).unwrap(), tree.root().child(1).unwrap());
        tree.nodes[a as usize].visits = 10;
        tree.nodes[a as usize].mean = 0.2;
        tree.nodes[b as usize].visits = 1;
        tree.nodes[b as usize].mean = 0.9;
        tree.nodes[0].visits = 11;
        assert_eq!(tree.select(&g, &mut rng).first(), 1);
    }

    #[test]
    fn update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = flat(3);
        let mut tree = UctTree::<f64>::new(3, 1.0);
        let o = tree.select(&g, &mut rng);
        tree.update(&o, 1.0);
        assert_eq!(tree.root().visits(), 1);
        assert_eq!(tree.node(&o[..1]).unwrap().mean_reward(), 1.0);

        let mut tree = UctTree::<f64>::new(3, 0.0);
        let o = tree.select(&g, &mut rng);
        tree.update(&o, 0.0);
        tree.update(&o, 1.0);
        let n = tree.node(&o[..1]).unwrap();
        assert_eq!((n.visits(), n.mean_reward()), (2, 0.5));

        // Materialize the path of `o` to depth 2, then check an update touches
        // only root plus two nodes.
        let mut tree = UctTree::<f64>::new(3, 0.0);
        let o = tree.select(&g, &mut rng);
        tree.update(&o, 0.5);
        let depth1 = tree.nodes[0].children[0].1;
        let id = tree.nodes.len() as NodeId;
        tree.nodes.push(UctNode::new());
        tree.nodes[depth1 as usize].children.push((o[1], id));
        let before: Vec<u64> = tree.nodes.iter().map(|n| n.visits).collect();
        tree.update(&o, 0.5);
        let touched = tree.nodes.iter().zip(&before).filter(|(n, b)| n.visits != **b).count();
        assert_eq!(touched, 3);
    }

    #[test]
    fn out_of_range_reward_is_clamped() {
        let mut tree = UctTree::<f32>::new(1, 1.0);
        tree.update(&[0], 7.0);
        assert_eq!(tree.root().mean_reward(), 1.0);
        tree.update(&[0], -3.0);
        assert_eq!(tree.root().mean_reward(), 0.5);
    }

    #[test]
    fn bernoulli_bandit_prefers_better_arm() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tree = UctTree::<f64>::new(2, std::f64::consts::SQRT_2);
        let g = flat(2);
        let p = [0.9, 0.1];
        for _ in 0..10_000 {
            let o = tree.select(&g, &mut rng);
            let r = if rng.gen::<f64>() < p[o.first()] { 1.0 } else { 0.0 };
            tree.update(&o, r);
        }
        let good = tree.node(&[0]).unwrap().visits();
        assert!(good as f64 >= 0.8 * 10_000.0, "{good}");
    }

    proptest! {
        #[test]
        fn mean_is_arithmetic_mean(rewards in prop::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = flat(3);
            let mut tree = UctTree::<f64>::new(3, 0.5);
            let o = tree.select(&g, &mut rng);
            for &r in &rewards { tree.update(&o, r); }
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            prop_assert!((tree.root().mean_reward() - mean).abs() <= 1e-12);
            prop_assert!((tree.node(&o[..1]).unwrap().mean_reward() - mean).abs() <= 1e-12);
        }

        #[test]
        fn at_most_one_node_per_select(seed in any::<u64>(), m in 1usize..6, rounds in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = JoinGraph::new(m);
            for t in 1..m { g.add_edge(t - 1, t); }
            let mut tree = UctTree::<f64>::new(m, 1.0);
            for _ in 0..rounds {
                let before = tree.node_count();
                let o = tree.select(&g, &mut rng);
                prop_assert!(tree.node_count() <= before + 1);
                // every prefix step respects eligibility
                let mut chosen = TableSet::EMPTY;
                for &t in o.iter() {
                    prop_assert!(g.eligible_tables(chosen).contains(t));
                    chosen = chosen.with(t);
                }
                tree.update(&o, rng.gen::<f64>());
            }
        }

        #[test]
        fn greedy_follows_max_mean(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = flat(3);
            let mut tree = UctTree::<f64>::new(3, 0.0);
            for _ in 0..40 {
                let o = tree.select(&g, &mut rng);
                tree.update(&o, rng.gen::<f64>());
            }
            // Once every root child is visited, w = 0 selects a max-mean child.
            if tree.root().children.len() == 3 {
                let best = tree.children(&[]).iter().map(|(_, n)| n.mean_reward()).fold(f64::MIN, f64::max);
                let o = tree.select(&g, &mut rng);
                prop_assert_eq!(tree.node(&o[..1]).unwrap().mean_reward(), best);
            }
        }
    }
}
