//! Materialization of result tuples into rows, ordering, projection and
//! whole-result aggregates.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::query::{AggregateKind, BoundColumn, BoundQuery, BoundSelect};
use crate::storage::Value;

pub type Row = Vec<Value>;

/// Query answer: column labels plus rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

/// Position of every alias column inside a wide row (all columns of all
/// aliases, alias order).
#[derive(Debug, Clone)]
pub struct WideLayout {
    starts: Vec<usize>,
    labels: Vec<String>,
}

impl WideLayout {
    pub fn new(query: &BoundQuery) -> Self {
        let mut starts = Vec::with_capacity(query.table_count());
        let mut labels = Vec::new();
        for (alias, t) in query.tables().iter().enumerate() {
            starts.push(labels.len());
            for column in 0..t.table.columns().len() {
                labels.push(query.column_label(BoundColumn { alias, column }));
            }
        }
        Self { starts, labels }
    }

    pub fn position(&self, c: BoundColumn) -> usize {
        self.starts[c.alias] + c.column
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Wide rows for source-row tuples (alias order).
pub fn materialize(query: &BoundQuery, tuples: &[Vec<u32>]) -> Vec<Row> {
    let tables = query.tables();
    tuples
        .iter()
        .map(|tuple| {
            tables
                .iter()
                .zip(tuple)
                .flat_map(|(t, &r)| (0..t.table.columns().len()).map(move |c| t.table.value(c, r as usize).to_owned()))
                .collect()
        })
        .collect()
}

fn cmp_values(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Str(x), Value::Str(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Value::Int(_), Value::Str(_)) => Ordering::Less,
        (Value::Str(_), Value::Int(_)) => Ordering::Greater,
    }
}

/// Stable sort by the given row positions.
pub fn order_rows(mut rows: Vec<Row>, keys: &[usize]) -> Vec<Row> {
    if !keys.is_empty() {
        rows.sort_by(|a, b| {
            keys.iter()
                .map(|&k| cmp_values(&a[k], &b[k]))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
    }
    rows
}

/// Narrows wide rows to the select list. Aggregates over an empty input
/// yield no row, except `COUNT` which yields zero.
pub fn project_rows(rows: Vec<Row>, select: &BoundSelect, layout: &WideLayout) -> QueryOutput {
    match select {
        BoundSelect::Star => QueryOutput {
            columns: layout.labels().to_vec(),
            rows,
        },
        BoundSelect::Columns { distinct, columns } => {
            let pos: Vec<usize> = columns.iter().map(|&c| layout.position(c)).collect();
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(rows.len());
            for r in rows {
                let p: Row = pos.iter().map(|&i| r[i].clone()).collect();
                if !*distinct || seen.insert(p.clone()) {
                    out.push(p);
                }
            }
            QueryOutput {
                columns: pos.iter().map(|&i| layout.labels()[i].clone()).collect(),
                rows: out,
            }
        }
        BoundSelect::Aggregate { kind, column } => {
            let pos = column.map(|c| layout.position(c));
            let label = match pos {
                Some(i) => format!("{}({})", kind_name(*kind), layout.labels()[i]),
                None => format!("{}(*)", kind_name(*kind)),
            };
            let value = match (kind, pos) {
                (AggregateKind::Count, _) => Some(Value::Int(rows.len() as i64)),
                (_, None) => None,
                (AggregateKind::Sum, Some(i)) => (!rows.is_empty()).then(|| {
                    Value::Int(rows.iter().fold(0i64, |acc, r| match &r[i] {
                        Value::Int(v) => acc.saturating_add(*v),
                        Value::Str(_) => acc,
                    }))
                }),
                (AggregateKind::Min, Some(i)) => rows.iter().map(|r| &r[i]).min_by(|a, b| cmp_values(a, b)).cloned(),
                (AggregateKind::Max, Some(i)) => rows.iter().map(|r| &r[i]).max_by(|a, b| cmp_values(a, b)).cloned(),
            };
            QueryOutput {
                columns: vec![label],
                rows: value.into_iter().map(|v| vec![v]).collect(),
            }
        }
    }
}

fn kind_name(kind: AggregateKind) -> &'static str {
    match kind {
        AggregateKind::Count => "count",
        AggregateKind::Sum => "sum",
        AggregateKind::Min => "min",
        AggregateKind::Max => "max",
    }
}

/// Full post-processing of source-row tuples: materialize, order, project.
pub fn finish(query: &BoundQuery, tuples: &[Vec<u32>]) -> QueryOutput {
    let layout = WideLayout::new(query);
    let keys: Vec<usize> = query.order_by().iter().map(|&c| layout.position(c)).collect();
    let rows = order_rows(materialize(query, tuples), &keys);
    project_rows(rows, query.select(), &layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use crate::storage::{Catalog, ColumnTable};

    fn query(sql: &str) -> BoundQuery {
        let mut c = Catalog::new();
        c.register(ColumnTable::from_ints("t", &[("a", vec![2, 1, 1]), ("b", vec![7, 8, 9])]).unwrap())
            .unwrap();
        BoundQuery::bind(&parse_query(sql).unwrap(), &c).unwrap()
    }

    fn ints(v: &[&[i64]]) -> Vec<Row> {
        v.iter().map(|r| r.iter().map(|&x| Value::Int(x)).collect()).collect()
    }

    #[test]
    fn order_rows_is_stable() {
        assert!(order_rows(Vec::new(), &[0]).is_empty());
        let rows = ints(&[&[2, 0], &[1, 1], &[1, 2]]);
        assert_eq!(order_rows(rows, &[0]), ints(&[&[1, 1], &[1, 2], &[2, 0]]));
        let sorted = ints(&[&[1, 5], &[1, 4], &[3, 0]]);
        assert_eq!(order_rows(sorted.clone(), &[0]), sorted);
    }

    #[test]
    fn strings_sort_bytewise() {
        let rows = vec![vec![Value::Str("b".into())], vec![Value::Str("B".into())], vec![Value::Str("a".into())]];
        let out = order_rows(rows, &[0]);
        let s: Vec<String> = out.iter().map(|r| r[0].to_string()).collect();
        assert_eq!(s, ["B", "a", "b"]);
    }

    #[test]
    fn star_is_identity() {
        let q = query("SELECT * FROM t");
        let out = finish(&q, &[vec![0], vec![1], vec![2]]);
        assert_eq!(out.columns, ["t.a", "t.b"]);
        assert_eq!(out.rows, ints(&[&[2, 7], &[1, 8], &[1, 9]]));
    }

    #[test]
    fn distinct_and_order_by() {
        let q = query("SELECT DISTINCT t.a FROM t ORDER BY t.a");
        let out = finish(&q, &[vec![0], vec![1], vec![2]]);
        assert_eq!(out.rows, ints(&[&[1], &[2]]));
        let q = query("SELECT t.a FROM t");
        assert_eq!(finish(&q, &[vec![0], vec![1], vec![2]]).rows.len(), 3);
    }

    #[test]
    fn aggregates() {
        let all = [vec![0], vec![1], vec![2]];
        assert_eq!(finish(&query("SELECT COUNT(*) FROM t"), &all).rows, ints(&[&[3]]));
        assert_eq!(finish(&query("SELECT COUNT(*) FROM t"), &[]).rows, ints(&[&[0]]));
        assert_eq!(finish(&query("SELECT SUM(t.b) FROM t"), &all).rows, ints(&[&[24]]));
        assert_eq!(finish(&query("SELECT MIN(t.a) FROM t"), &all).rows, ints(&[&[1]]));
        assert_eq!(finish(&query("SELECT MAX(t.b) FROM t"), &all).rows, ints(&[&[9]]));
        assert!(finish(&query("SELECT MAX(t.b) FROM t"), &[]).rows.is_empty());
    }
}
