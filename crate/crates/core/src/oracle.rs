//! Brute-force reference semantics: nested-loop join, left-deep
//! materialization with exact intermediate cardinalities, and exhaustive
//! search for the cheapest join order.
//!
//! Nothing here shares code with the learned executor beyond predicate
//! evaluation, so it can serve as ground truth in tests.

use crate::query::{newly_applicable, BoundPredicate, BoundQuery, JoinOrder, TableSet};
use crate::{Error, Result};

/// Largest table count accepted by [`optimal_order`] and [`worst_order`].
pub const ENUMERATION_CAP: usize = 8;

/// Source rows of `alias` passing its unary predicates.
pub fn unary_rows(query: &BoundQuery, alias: usize) -> Vec<u32> {
    let table = &query.tables()[alias].table;
    let preds: Vec<&BoundPredicate> = query
        .predicates()
        .iter()
        .filter(|p| p.footprint() == TableSet::single(alias))
        .collect();
    (0..table.row_count())
        .filter(|&r| preds.iter().all(|p| p.eval(|c| table.value(c.column, r))))
        .map(|r| r as u32)
        .collect()
}

/// Every combination of source rows (one per alias, alias order) satisfying
/// all predicates, in lexicographic order of the row vectors.
pub fn nested_loop_join(query: &BoundQuery) -> Vec<Vec<u32>> {
    let m = query.table_count();
    let tables = query.tables();
    // Predicates checked as soon as their highest alias is bound.
    let mut at_depth: Vec<Vec<&BoundPredicate>> = vec![Vec::new(); m];
    for p in query.predicates() {
        let last = p.footprint().iter().max().expect("nonempty footprint");
        at_depth[last].push(p);
    }
    let cards: Vec<usize> = tables.iter().map(|t| t.table.row_count()).collect();
    let mut out = Vec::new();
    if cards.contains(&0) {
        return out;
    }
    let mut rows = vec![0usize; m];
    let mut d = 0usize;
    loop {
        let ok = at_depth[d]
            .iter()
            .all(|p| p.eval(|c| tables[c.alias].table.value(c.column, rows[c.alias])));
        if ok && d + 1 < m {
            d += 1;
            rows[d] = 0;
            continue;
        }
        if ok {
            out.push(rows.iter().map(|&r| r as u32).collect());
        }
        // odometer step
        loop {
            rows[d] += 1;
            if rows[d] < cards[d] {
                break;
            }
            if d == 0 {
                return out;
            }
            d -= 1;
        }
    }
}

/// Outcome of a left-deep materialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeftDeep {
    /// Leftmost rows (when counted) plus all intermediate cardinalities from
    /// the second prefix on.
    pub cost: u64,
    /// Final tuples in alias order, when requested.
    pub tuples: Vec<Vec<u32>>,
}

/// Joins `rows` (candidate source rows per alias) along `order` one table at
/// a time, keeping every intermediate result. Gives up with `None` as soon as
/// the running cost exceeds `cap`.
pub fn left_deep(
    query: &BoundQuery,
    rows: &[&[u32]],
    order: &[usize],
    cap: Option<u64>,
    count_leftmost: bool,
    keep_final: bool,
) -> Option<LeftDeep> {
    let m = order.len();
    let tables = query.tables();
    let preds = query.predicates();
    let mut pos_of = vec![usize::MAX; m];
    for (p, &t) in order.iter().enumerate() {
        pos_of[t] = p;
    }
    let cap = cap.unwrap_or(u64::MAX);
    let mut cost = 0u64;
    let lead = rows[order[0]];
    if count_leftmost {
        cost = lead.len() as u64;
        if cost > cap {
            return None;
        }
    }
    // Partial tuples laid out by join-order position.
    let mut current: Vec<Vec<u32>> = lead.iter().map(|&r| vec![r]).collect();
    for k in 1..m {
        let t = order[k];
        let applicable: Vec<&BoundPredicate> = newly_applicable(preds, order, k).into_iter().map(|i| &preds[i]).collect();
        let last = k + 1 == m;
        let mut next = Vec::new();
        for partial in &current {
            for &r in rows[t] {
                let pass = applicable.iter().all(|p| {
                    p.eval(|c| {
                        let row = if c.alias == t { r } else { partial[pos_of[c.alias]] };
                        tables[c.alias].table.value(c.column, row as usize)
                    })
                });
                if !pass {
                    continue;
                }
                cost += 1;
                if cost > cap {
                    return None;
                }
                if !last || keep_final {
                    let mut ext = Vec::with_capacity(k + 1);
                    ext.extend_from_slice(partial);
                    ext.push(r);
                    next.push(ext);
                }
            }
        }
        current = next;
    }
    let tuples = if keep_final || m == 1 {
        current
            .into_iter()
            .map(|p| {
                let mut v = vec![0u32; m];
                for (pos, r) in p.into_iter().enumerate() {
                    v[order[pos]] = r;
                }
                v
            })
            .collect()
    } else {
        Vec::new()
    };
    Some(LeftDeep { cost, tuples })
}

fn filtered_rows(query: &BoundQuery) -> Vec<Vec<u32>> {
    (0..query.table_count()).map(|a| unary_rows(query, a)).collect()
}

/// Sum of the exact intermediate-result cardinalities of prefixes of length
/// two and more, after unary filtering.
pub fn cout_cost(query: &BoundQuery, order: &[usize]) -> u64 {
    cout_cost_capped(query, order, None).expect("uncapped")
}

/// [`cout_cost`] that gives up once the cost exceeds `cap`.
pub fn cout_cost_capped(query: &BoundQuery, order: &[usize], cap: Option<u64>) -> Option<u64> {
    let rows = filtered_rows(query);
    let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
    left_deep(query, &refs, order, cap, false, false).map(|r| r.cost)
}

/// All orders respecting the join graph's eligibility rule, lexicographic.
pub fn eligible_orders(query: &BoundQuery) -> Vec<Vec<usize>> {
    fn rec(query: &BoundQuery, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let m = query.table_count();
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        let chosen = TableSet::from_iter(prefix.iter().copied());
        for t in query.graph().eligible_tables(chosen).iter() {
            prefix.push(t);
            rec(query, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(query, &mut Vec::new(), &mut out);
    out
}

fn check_cap(query: &BoundQuery) -> Result<()> {
    let m = query.table_count();
    if m > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            cap: ENUMERATION_CAP,
            tables: m,
        });
    }
    Ok(())
}

/// Cheapest eligible order by [`cout_cost`]; the lexicographically first on
/// ties. Costs are computed with branch and bound so expensive orders are
/// abandoned early.
pub fn optimal_order(query: &BoundQuery) -> Result<(JoinOrder, u64)> {
    check_cap(query)?;
    let rows = filtered_rows(query);
    let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
    let mut best: Option<(Vec<usize>, u64)> = None;
    for order in eligible_orders(query) {
        let cap = best.as_ref().map(|b| b.1.saturating_sub(1));
        if best.as_ref().is_some_and(|b| b.1 == 0) {
            break;
        }
        if let Some(r) = left_deep(query, &refs, &order, cap, false, false) {
            best = Some((order, r.cost));
        }
    }
    let (order, cost) = best.expect("at least one eligible order");
    let m = query.table_count();
    Ok((JoinOrder::new(order, m)?, cost))
}

/// Most expensive eligible order, with costs saturating at `cap`; the
/// lexicographically first on ties.
pub fn worst_order(query: &BoundQuery, cap: u64) -> Result<(JoinOrder, u64)> {
    check_cap(query)?;
    let rows = filtered_rows(query);
    let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
    let mut best: Option<(Vec<usize>, u64)> = None;
    for order in eligible_orders(query) {
        let cost = left_deep(query, &refs, &order, Some(cap), false, false).map_or(cap, |r| r.cost);
        if best.as_ref().is_none_or(|b| cost > b.1) {
            best = Some((order, cost));
        }
    }
    let (order, cost) = best.expect("at least one eligible order");
    let m = query.table_count();
    Ok((JoinOrder::new(order, m)?, cost))
}
