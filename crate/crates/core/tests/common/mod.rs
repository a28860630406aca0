//! Seeded random SPJ instances for oracle comparisons.

#![allow(dead_code)]

use joinlearn::executor::{preprocess_c, PreparedQuery};
use joinlearn::storage::{Column, ColumnData};
use joinlearn::{parse_query, Catalog, ColumnTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub catalog: Catalog,
    pub sql: String,
}

impl Instance {
    pub fn prepare(&self) -> PreparedQuery {
        let spec = parse_query(&self.sql).unwrap_or_else(|e| panic!("{e}: {}", self.sql));
        preprocess_c(&spec, &self.catalog).unwrap_or_else(|e| panic!("{e}: {}", self.sql))
    }
}

fn row_cap(m: usize) -> usize {
    match m {
        2 => 30,
        3 => 20,
        4 => 12,
        _ => 8,
    }
}

const STRINGS: [&str; 3] = ["a", "b", "c"];

fn table(rng: &mut ChaCha8Rng, name: &str, rows: usize) -> ColumnTable {
    let x = (0..rows).map(|_| rng.gen_range(0..5)).collect();
    let y = (0..rows).map(|_| rng.gen_range(0..5)).collect();
    let s = (0..rows).map(|_| STRINGS[rng.gen_range(0..3)].to_owned()).collect();
    ColumnTable::new(
        name,
        vec![
            Column {
                name: "x".into(),
                data: ColumnData::Int(x),
            },
            Column {
                name: "y".into(),
                data: ColumnData::Int(y),
            },
            Column {
                name: "s".into(),
                data: ColumnData::Str(s),
            },
        ],
    )
    .unwrap()
}

fn int_col(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.gen_bool(0.5) {
        "x"
    } else {
        "y"
    }
}

fn binary_pred(rng: &mut ChaCha8Rng, a: &str, b: &str, equality_only: bool) -> String {
    let (ca, cb) = (int_col(rng), int_col(rng));
    if equality_only {
        return match rng.gen_range(0..4) {
            0 => format!("{a}.s = {b}.s"),
            _ => format!("{a}.{ca} = {b}.{cb}"),
        };
    }
    match rng.gen_range(0..7) {
        0 | 1 => format!("{a}.{ca} = {b}.{cb}"),
        2 => format!("{a}.s = {b}.s"),
        3 => format!("{a}.{ca} < {b}.{cb}"),
        4 => format!("{a}.{ca} >= {b}.{cb}"),
        5 => format!("mod_eq_2({a}.{ca}, {b}.{cb})"),
        _ => format!("{a}.s <> {b}.s"),
    }
}

fn unary_pred(rng: &mut ChaCha8Rng, a: &str) -> String {
    match rng.gen_range(0..4) {
        0 => format!("{a}.x > {}", rng.gen_range(0..3)),
        1 => format!("{a}.s <> '{}'", STRINGS[rng.gen_range(0..3)]),
        2 => format!("{a}.x <> {a}.y"),
        _ => format!("mod_eq_3({a}.y)"),
    }
}

/// 2 to 5 tables of 0 to 30 rows with equality, comparison, UDF, unary and
/// occasional three-table predicates. Equality-only instances use only
/// column equalities across aliases.
pub fn random_instance(seed: u64, equality_only: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=5);
    let cap = row_cap(m);
    let mut catalog = Catalog::new();
    let aliases: Vec<String> = (0..m).map(|i| format!("r{i}")).collect();
    for a in &aliases {
        // Rarely empty, mostly near the cap.
        let rows = if rng.gen_bool(0.03) { 0 } else { rng.gen_range(1..=cap) };
        catalog.register(table(&mut rng, a, rows)).unwrap();
    }
    let mut preds = Vec::new();
    // Random spanning structure; some edges are dropped to create Cartesian parts.
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    for i in 1..m {
        if rng.gen_bool(0.85) {
            let j = perm[rng.gen_range(0..i)];
            preds.push(binary_pred(&mut rng, &aliases[perm[i]], &aliases[j], equality_only));
        }
    }
    if !equality_only {
        for a in &aliases {
            if rng.gen_bool(0.3) {
                preds.push(unary_pred(&mut rng, a));
            }
        }
        if m >= 3 && rng.gen_bool(0.3) {
            let mut pick = aliases.clone();
            pick.shuffle(&mut rng);
            preds.push(format!("mod_eq_2({}.x, {}.y, {}.x)", pick[0], pick[1], pick[2]));
        }
    }
    if rng.gen_bool(0.3) {
        let a = &aliases[rng.gen_range(0..m)];
        let b = &aliases[rng.gen_range(0..m)];
        if a != b {
            preds.push(binary_pred(&mut rng, a, b, equality_only));
        }
    }
    let mut sql = format!("SELECT * FROM {}", aliases.join(", "));
    if !preds.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&preds.join(" AND "));
    }
    Instance { catalog, sql }
}
