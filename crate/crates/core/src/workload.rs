//! Torture queries: every join predicate keeps everything except one, which
//! empties the result. Only orders that apply that predicate early are
//! cheap.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::manifest::{Manifest, ManifestEntry};
use crate::storage::{Catalog, ColumnTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Predicate `i` joins `t_i` and `t_{i+1}`.
    Chain,
    /// Predicate `i` joins `t1` and `t_{i+1}`.
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TortureMode {
    /// `always_true` UDFs, one `always_false`.
    Udf,
    /// Equalities over constant columns, one with disjoint constants.
    Correlation,
}

impl FromStr for Pattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chain" => Ok(Pattern::Chain),
            "star" => Ok(Pattern::Star),
            _ => Err(format!("unknown pattern `{s}` (chain, star)")),
        }
    }
}

impl FromStr for TortureMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "udf" => Ok(TortureMode::Udf),
            "correlation" => Ok(TortureMode::Correlation),
            _ => Err(format!("unknown mode `{s}` (udf, correlation)")),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Chain => "chain",
            Pattern::Star => "star",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TortureSpec {
    pub pattern: Pattern,
    pub mode: TortureMode,
    /// Table count, at least 2.
    pub tables: usize,
    /// Rows per table, at least 1.
    pub rows: usize,
    /// 1-based position of the predicate that empties the result.
    pub good: usize,
}

#[derive(Debug, Clone)]
pub struct TortureInstance {
    pub tables: Vec<ColumnTable>,
    pub sql: String,
}

/// Endpoints (0-based table numbers) of predicate `i` (0-based).
fn endpoints(pattern: Pattern, i: usize) -> (usize, usize) {
    match pattern {
        Pattern::Chain => (i, i + 1),
        Pattern::Star => (0, i + 1),
    }
}

/// Builds tables `t1..tm` with columns `id`, `l`, `r` and a `COUNT(*)` query.
pub fn generate_torture(spec: &TortureSpec) -> Result<TortureInstance> {
    let TortureSpec {
        pattern,
        mode,
        tables: m,
        rows: s,
        good,
    } = *spec;
    if m < 2 {
        return Err(Error::Workload(format!("need at least 2 tables, got {m}")));
    }
    if s < 1 {
        return Err(Error::Workload("need at least 1 row per table".into()));
    }
    if !(1..m).contains(&good) {
        return Err(Error::Workload(format!(
            "good predicate position {good} outside 1..={} (there are {} join predicates)",
            m - 1,
            m - 1
        )));
    }
    let g = good - 1;
    let (ga, gb) = endpoints(pattern, g);
    let ids: Vec<i64> = (0..s as i64).collect();
    let mut tables = Vec::with_capacity(m);
    for t in 0..m {
        // Predicate i compares r of its first endpoint with l of its second.
        // One differing constant on the good predicate's private side empties
        // that join; the star center's r is shared, so the spoke side changes.
        let corr = mode == TortureMode::Correlation;
        let r = i64::from(corr && pattern == Pattern::Chain && t == ga);
        let l = i64::from(corr && pattern == Pattern::Star && t == gb);
        tables.push(ColumnTable::from_ints(
            format!("t{}", t + 1),
            &[("id", ids.clone()), ("l", vec![l; s]), ("r", vec![r; s])],
        )?);
    }
    let preds: Vec<String> = (0..m - 1)
        .map(|i| {
            let (a, b) = endpoints(pattern, i);
            match mode {
                TortureMode::Udf => {
                    let f = if i == g { "always_false" } else { "always_true" };
                    format!("{f}(t{}.id, t{}.id)", a + 1, b + 1)
                }
                TortureMode::Correlation => format!("t{}.r = t{}.l", a + 1, b + 1),
            }
        })
        .collect();
    let from: Vec<String> = (1..=m).map(|t| format!("t{t}")).collect();
    let sql = format!("SELECT COUNT(*) FROM {} WHERE {}", from.join(", "), preds.join(" AND "));
    Ok(TortureInstance { tables, sql })
}

impl TortureInstance {
    pub fn catalog(&self) -> Catalog {
        let mut c = Catalog::new();
        for t in &self.tables {
            c.register(t.clone()).expect("distinct generated names");
        }
        c
    }

    /// Writes one CSV per table, `query.sql` and `catalog.json`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = Manifest::default();
        for t in &self.tables {
            let file = format!("{}.csv", t.name());
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            w.write_record(t.columns().iter().map(|c| c.name.as_str()))?;
            for row in 0..t.row_count() {
                w.write_record((0..t.columns().len()).map(|c| t.value(c, row).to_owned().to_string()))?;
            }
            w.flush()?;
            manifest.tables.push(ManifestEntry {
                name: t.name().to_owned(),
                path: file.into(),
                header: true,
                schema: t
                    .columns()
                    .iter()
                    .map(|c| format!("{}:{}", c.name, c.data.column_type()))
                    .collect::<Vec<_>>()
                    .join(","),
            });
        }
        std::fs::write(dir.join("query.sql"), format!("{}\n", self.sql))?;
        manifest.write(&dir.join("catalog.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_manifest;
    use crate::oracle::{cout_cost, nested_loop_join, optimal_order, worst_order};
    use crate::query::{parse_query, BoundQuery};

    fn bound(inst: &TortureInstance) -> BoundQuery {
        BoundQuery::bind(&parse_query(&inst.sql).unwrap(), &inst.catalog()).unwrap()
    }

    fn spec(pattern: Pattern, mode: TortureMode, m: usize, s: usize, g: usize) -> TortureSpec {
        TortureSpec {
            pattern,
            mode,
            tables: m,
            rows: s,
            good: g,
        }
    }

    #[test]
    fn udf_chain_optimal_starts_at_good_end() {
        let inst = generate_torture(&spec(Pattern::Chain, TortureMode::Udf, 4, 3, 1)).unwrap();
        let q = bound(&inst);
        assert!(nested_loop_join(&q).is_empty());
        let (best, cost) = optimal_order(&q).unwrap();
        assert_eq!(best.first(), 0);
        assert_eq!(cost, 0);
    }

    #[test]
    fn correlation_chain_empties_one_join() {
        let inst = generate_torture(&spec(Pattern::Chain, TortureMode::Correlation, 4, 5, 2)).unwrap();
        let q = bound(&inst);
        assert!(nested_loop_join(&q).is_empty());
        assert_eq!(cout_cost(&q, &[1, 2, 3, 0]), 0);
        assert_eq!(cout_cost(&q, &[0, 1, 2, 3]), 25);
        assert_eq!(cout_cost(&q, &[2, 3, 1, 0]), 25);
        assert_eq!(cout_cost(&q, &[3, 2, 1, 0]), 25);
    }

    #[test]
    fn minimal_instance() {
        let inst = generate_torture(&spec(Pattern::Star, TortureMode::Udf, 3, 1, 2)).unwrap();
        assert!(inst.tables.iter().all(|t| t.row_count() == 1));
    }

    #[test]
    fn rejects_bad_parameters() {
        for (m, s, g) in [(1, 5, 1), (3, 0, 1), (3, 5, 0), (3, 5, 3)] {
            assert!(generate_torture(&spec(Pattern::Chain, TortureMode::Udf, m, s, g)).is_err());
        }
    }

    #[test]
    fn all_families_are_empty_with_growing_ratio() {
        for pattern in [Pattern::Chain, Pattern::Star] {
            for mode in [TortureMode::Udf, TortureMode::Correlation] {
                for m in 2..=4 {
                    for g in 1..m {
                        let s = 4;
                        let inst = generate_torture(&spec(pattern, mode, m, s, g)).unwrap();
                        let q = bound(&inst);
                        assert!(nested_loop_join(&q).is_empty());
                        let (_, best) = optimal_order(&q).unwrap();
                        let (_, worst) = worst_order(&q, u64::MAX).unwrap();
                        if m > 2 {
                            assert!(worst >= s as u64 * best.max(1), "{pattern} {mode:?} m={m} g={g}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn written_directory_round_trips() {
        let inst = generate_torture(&spec(Pattern::Chain, TortureMode::Correlation, 3, 4, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        inst.write_to(dir.path()).unwrap();
        let mut cat = Catalog::new();
        load_manifest(&dir.path().join("catalog.json"), &mut cat).unwrap();
        let sql = std::fs::read_to_string(dir.path().join("query.sql")).unwrap();
        let q = BoundQuery::bind(&parse_query(sql.trim()).unwrap(), &cat).unwrap();
        assert_eq!(q.table_count(), 3);
        assert_eq!(cat.get("t2").unwrap().row_count(), 4);
    }
}
