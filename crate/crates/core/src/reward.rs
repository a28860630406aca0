//! Reward functions mapping execution progress into `[0, 1]`.

use crate::num::Real;

/// Per join-order position tuple-index change over one time slice, together
/// with the cardinality of the table at each position.
///
/// Components are signed: a position that wrapped around (backtracking reset
/// it to its offset) shows a negative change, which is exactly compensated by
/// the carry into the preceding position once scaled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDelta {
    deltas: Vec<i64>,
    cards: Vec<u64>,
}

impl StateDelta {
    pub fn new(deltas: Vec<i64>, cards: Vec<u64>) -> Self {
        assert_eq!(deltas.len(), cards.len(), "one delta per position");
        Self { deltas, cards }
    }

    /// Delta between two alias-indexed state vectors along `order`.
    /// `end_done` marks the end state as exhausted, i.e. the leftmost index
    /// at its cardinality and everything deeper at zero.
    pub fn between(start: &[usize], end: &[usize], end_done: bool, order: &[usize], cards: &[usize]) -> Self {
        let deltas = order
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                let e = match (end_done, pos) {
                    (true, 0) => cards[t],
                    (true, _) => 0,
                    (false, _) => end[t],
                };
                e as i64 - start[t] as i64
            })
            .collect();
        Self {
            deltas,
            cards: order.iter().map(|&t| cards[t] as u64).collect(),
        }
    }

    pub fn deltas(&self) -> &[i64] {
        &self.deltas
    }

    pub fn cards(&self) -> &[u64] {
        &self.cards
    }
}

/// One when the batch was fully processed, zero on timeout.
pub fn binary_reward<R: Real>(batch_finished: bool) -> R {
    if batch_finished {
        R::one()
    } else {
        R::zero()
    }
}

/// Fraction of the leftmost table consumed. An empty table counts as done.
pub fn leftmost_reward<R: Real>(delta0: u64, card0: u64) -> R {
    if card0 == 0 {
        return R::one();
    }
    (R::from_count(delta0) / R::from_count(card0)).clamp_unit()
}

/// `min(1, sum_i delta_i / prod_{k<=i} card_k)`, floored at zero. Positions
/// behind an empty table contribute nothing.
pub fn scaled_delta_reward<R: Real>(delta: &StateDelta) -> R {
    if delta.cards.first() == Some(&0) {
        return R::one();
    }
    let mut scale = R::one();
    let mut sum = R::zero();
    for (&d, &c) in delta.deltas.iter().zip(&delta.cards) {
        if c == 0 {
            break;
        }
        scale = scale * R::from_count(c);
        sum = sum + R::from_f64_lossy(d as f64) / scale;
    }
    sum.clamp_unit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_examples() {
        assert_eq!(binary_reward::<f64>(true), 1.0);
        assert_eq!(binary_reward::<f64>(false), 0.0);
    }

    #[test]
    fn leftmost_examples() {
        assert_eq!(leftmost_reward::<f64>(0, 10), 0.0);
        assert_eq!(leftmost_reward::<f64>(10, 10), 1.0);
        assert_eq!(leftmost_reward::<f64>(2, 10), 0.2);
        assert_eq!(leftmost_reward::<f32>(0, 0), 1.0);
    }

    #[test]
    fn scaled_examples() {
        let r: f64 = scaled_delta_reward(&StateDelta::new(vec![2, 3], vec![10, 5]));
        assert!((r - 0.26).abs() < 1e-12);
        assert_eq!(scaled_delta_reward::<f64>(&StateDelta::new(vec![0, 0, 0], vec![4, 4, 4])), 0.0);
        assert_eq!(scaled_delta_reward::<f64>(&StateDelta::new(vec![10, 0], vec![10, 5])), 1.0);
        assert_eq!(scaled_delta_reward::<f64>(&StateDelta::new(vec![10, 4], vec![10, 5])), 1.0);
    }

    #[test]
    fn wraparound_carry_is_nonnegative() {
        // [3, 9] -> [4, 0] with cards [10, 10]: one full carry.
        let d = StateDelta::between(&[3, 9], &[4, 0], false, &[0, 1], &[10, 10]);
        assert_eq!(d.deltas(), &[1, -9]);
        let r: f64 = scaled_delta_reward(&d);
        assert!((r - 0.01).abs() < 1e-12);
        let done = StateDelta::between(&[7, 3], &[0, 0], true, &[1, 0], &[10, 10]);
        assert_eq!(done.deltas(), &[10 - 3, -7]);
    }

    fn arb_delta() -> impl Strategy<Value = (Vec<i64>, Vec<u64>)> {
        (1usize..5).prop_flat_map(|m| {
            prop::collection::vec(1u64..20, m).prop_flat_map(|cards| {
                let d = cards.iter().map(|&c| 0..=c as i64).collect::<Vec<_>>();
                (d, Just(cards))
            })
        })
    }

    proptest! {
        #[test]
        fn scaled_dominates_leftmost((deltas, cards) in arb_delta()) {
            let s: f64 = scaled_delta_reward(&StateDelta::new(deltas.clone(), cards.clone()));
            let l: f64 = leftmost_reward(deltas[0] as u64, cards[0]);
            prop_assert!(s >= l - 1e-12);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn monotone_in_each_component((deltas, cards) in arb_delta(), pos in 0usize..5) {
            let pos = pos % deltas.len();
            let base: f64 = scaled_delta_reward(&StateDelta::new(deltas.clone(), cards.clone()));
            let mut bumped = deltas.clone();
            bumped[pos] += 1;
            let more: f64 = scaled_delta_reward(&StateDelta::new(bumped, cards.clone()));
            prop_assert!(more >= base);
            let l0: f64 = leftmost_reward(deltas[0] as u64, cards[0]);
            let l1: f64 = leftmost_reward(deltas[0] as u64 + 1, cards[0]);
            prop_assert!(l1 >= l0);
        }
    }
}
