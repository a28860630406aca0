//! Immutable in-memory column store: CSV ingestion, unary filtering and
//! equality-probe indexes over the filtered row space.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::query::BoundPredicate;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: expected {expected} fields, found {found}")]
    Arity {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: row {row}: column `{column}`: cannot parse `{value}` as int")]
    ParseInt {
        path: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}: {message}")]
    Csv {
        path: String,
        row: usize,
        message: String,
    },
    #[error("table `{table}` has no column `{column}`")]
    UnknownColumn { table: String, column: String },
    #[error("table `{table}`: column index {index} out of range")]
    ColumnIndex { table: String, index: usize },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("column `{column}` has {found} values, table has {expected} rows")]
    Length {
        column: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Int,
    Str,
}

impl ColumnType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "int" | "int64" | "integer" | "i64" => Some(ColumnType::Int),
            "str" | "string" | "utf8" | "text" => Some(ColumnType::Str),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnType::Int => f.write_str("int"),
            ColumnType::Str => f.write_str("str"),
        }
    }
}

/// Owned cell value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_ref(&self) -> ValueRef<'_> {
        match self {
            Value::Int(v) => ValueRef::Int(*v),
            Value::Str(s) => ValueRef::Str(s),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// Borrowed cell value, as read out of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueRef<'a> {
    Int(i64),
    Str(&'a str),
}

impl ValueRef<'_> {
    pub fn to_owned(self) -> Value {
        match self {
            ValueRef::Int(v) => Value::Int(v),
            ValueRef::Str(s) => Value::Str(s.to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int(Vec<i64>),
    Str(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) => v.len(),
            ColumnData::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            ColumnData::Int(_) => ColumnType::Int,
            ColumnData::Str(_) => ColumnType::Str,
        }
    }

    #[inline]
    pub fn get(&self, row: usize) -> ValueRef<'_> {
        match self {
            ColumnData::Int(v) => ValueRef::Int(v[row]),
            ColumnData::Str(v) => ValueRef::Str(&v[row]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

/// Immutable columnar table.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTable {
    name: String,
    columns: Vec<Column>,
    row_count: usize,
}

impl ColumnTable {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self, StorageError> {
        let row_count = columns.first().map_or(0, |c| c.data.len());
        for (i, c) in columns.iter().enumerate() {
            if c.data.len() != row_count {
                return Err(StorageError::Length {
                    column: c.name.clone(),
                    expected: row_count,
                    found: c.data.len(),
                });
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(StorageError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            columns,
            row_count,
        })
    }

    /// Convenience constructor for all-int tables.
    pub fn from_ints(name: impl Into<String>, cols: &[(&str, Vec<i64>)]) -> Result<Self, StorageError> {
        Self::new(
            name,
            cols.iter()
                .map(|(n, v)| Column {
                    name: (*n).to_owned(),
                    data: ColumnData::Int(v.clone()),
                })
                .collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    #[inline]
    pub fn value(&self, column: usize, row: usize) -> ValueRef<'_> {
        self.columns[column].data.get(row)
    }
}

/// Named tables available to queries.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Arc<ColumnTable>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, table: ColumnTable) -> Result<(), StorageError> {
        let key = table.name().to_ascii_lowercase();
        if self.tables.contains_key(&key) {
            return Err(StorageError::DuplicateTable(table.name().to_owned()));
        }
        self.tables.insert(key, Arc::new(table));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<ColumnTable>> {
        self.tables.get(&name.to_ascii_lowercase())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.values().map(|t| t.name())
    }
}

/// Loads a comma-delimited file. Row numbers in errors are 1-based data rows.
pub fn load_csv(
    path: impl AsRef<Path>,
    name: &str,
    schema: &[(String, ColumnType)],
    has_header: bool,
) -> Result<ColumnTable, StorageError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| StorageError::Io {
        path: shown.clone(),
        source,
    })?;
    read_csv(file, &shown, name, schema, has_header)
}

/// Same as [`load_csv`] over any reader; `origin` labels error messages.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    origin: &str,
    name: &str,
    schema: &[(String, ColumnType)],
    has_header: bool,
) -> Result<ColumnTable, StorageError> {
    let mut data: Vec<ColumnData> = schema
        .iter()
        .map(|(_, t)| match t {
            ColumnType::Int => ColumnData::Int(Vec::new()),
            ColumnType::Str => ColumnData::Str(Vec::new()),
        })
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| StorageError::Csv {
            path: origin.to_owned(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != schema.len() {
            return Err(StorageError::Arity {
                path: origin.to_owned(),
                row,
                expected: schema.len(),
                found: record.len(),
            });
        }
        for ((field, col), (col_name, _)) in record.iter().zip(data.iter_mut()).zip(schema) {
            match col {
                ColumnData::Int(v) => {
                    let parsed = field.trim().parse::<i64>().map_err(|_| StorageError::ParseInt {
                        path: origin.to_owned(),
                        row,
                        column: col_name.clone(),
                        value: field.to_owned(),
                    })?;
                    v.push(parsed);
                }
                ColumnData::Str(v) => v.push(field.to_owned()),
            }
        }
    }
    ColumnTable::new(
        name,
        schema
            .iter()
            .zip(data)
            .map(|((n, _), d)| Column { name: n.clone(), data: d })
            .collect(),
    )
}

/// Rows of a source table surviving unary predicates, compacted into a dense
/// `0..cardinality` index space.
#[derive(Debug, Clone)]
pub struct FilteredTable {
    source: Arc<ColumnTable>,
    rows: Vec<u32>,
}

impl FilteredTable {
    /// All rows survive.
    pub fn identity(source: Arc<ColumnTable>) -> Self {
        let rows = (0..source.row_count() as u32).collect();
        Self { source, rows }
    }

    pub fn source(&self) -> &Arc<ColumnTable> {
        &self.source
    }

    /// Surviving source rows, ascending.
    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn cardinality(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn source_row(&self, index: usize) -> usize {
        self.rows[index] as usize
    }

    #[inline]
    pub fn value(&self, column: usize, index: usize) -> ValueRef<'_> {
        self.source.value(column, self.rows[index] as usize)
    }
}

/// Keeps the rows of `table` satisfying every predicate. Each predicate must
/// reference only this table; column references are validated against it.
pub fn filter_unary(
    table: Arc<ColumnTable>,
    predicates: &[&BoundPredicate],
) -> Result<FilteredTable, StorageError> {
    for p in predicates {
        for c in p.columns() {
            if c.column >= table.columns().len() {
                return Err(StorageError::ColumnIndex {
                    table: table.name().to_owned(),
                    index: c.column,
                });
            }
        }
    }
    if predicates.is_empty() {
        return Ok(FilteredTable::identity(table));
    }
    let rows = (0..table.row_count())
        .filter(|&r| predicates.iter().all(|p| p.eval(|c| table.value(c.column, r))))
        .map(|r| r as u32)
        .collect();
    Ok(FilteredTable { source: table, rows })
}

/// Value -> ascending posting list of dense row indices.
#[derive(Debug, Clone)]
pub enum HashIndex {
    Int(HashMap<i64, Vec<u32>>),
    Str(HashMap<String, Vec<u32>>),
}

impl HashIndex {
    /// Indexes `column` of the filtered rows; posting lists hold dense indices.
    pub fn build(table: &FilteredTable, column: &str) -> Result<Self, StorageError> {
        let col = table
            .source()
            .column_index(column)
            .ok_or_else(|| StorageError::UnknownColumn {
                table: table.source().name().to_owned(),
                column: column.to_owned(),
            })?;
        Ok(Self::build_by_index(table, col))
    }

    pub fn build_by_index(table: &FilteredTable, column: usize) -> Self {
        let data = &table.source().column(column).data;
        match data {
            ColumnData::Int(values) => {
                let mut map: HashMap<i64, Vec<u32>> = HashMap::new();
                for (i, &r) in table.rows().iter().enumerate() {
                    map.entry(values[r as usize]).or_default().push(i as u32);
                }
                HashIndex::Int(map)
            }
            ColumnData::Str(values) => {
                let mut map: HashMap<String, Vec<u32>> = HashMap::new();
                for (i, &r) in table.rows().iter().enumerate() {
                    map.entry(values[r as usize].clone()).or_default().push(i as u32);
                }
                HashIndex::Str(map)
            }
        }
    }

    /// Ascending indices holding `value`; empty when absent or mistyped.
    pub fn probe(&self, value: ValueRef<'_>) -> &[u32] {
        let hit = match (self, value) {
            (HashIndex::Int(m), ValueRef::Int(v)) => m.get(&v),
            (HashIndex::Str(m), ValueRef::Str(s)) => m.get(s),
            _ => None,
        };
        hit.map_or(&[], Vec::as_slice)
    }

    /// Smallest index in the posting list for `value` that is `>= from`.
    pub fn next_at_least(&self, value: ValueRef<'_>, from: usize) -> Option<usize> {
        let list = self.probe(value);
        let pos = list.partition_point(|&i| (i as usize) < from);
        list.get(pos).map(|&i| i as usize)
    }

    pub fn posting_lists(&self) -> Box<dyn Iterator<Item = &[u32]> + '_> {
        match self {
            HashIndex::Int(m) => Box::new(m.values().map(Vec::as_slice)),
            HashIndex::Str(m) => Box::new(m.values().map(Vec::as_slice)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{parse_query, BoundQuery};
    use proptest::prelude::*;

    fn schema_a() -> Vec<(String, ColumnType)> {
        vec![("a".to_owned(), ColumnType::Int)]
    }

    #[test]
    fn empty_csv_gives_empty_table() {
        let t = read_csv("".as_bytes(), "mem", "t", &schema_a(), false).unwrap();
        assert_eq!(t.row_count(), 0);
    }

    #[test]
    fn parses_int_rows() {
        let t = read_csv("1\n2\n3".as_bytes(), "mem", "t", &schema_a(), false).unwrap();
        assert_eq!(t.column(0).data, ColumnData::Int(vec![1, 2, 3]));
    }

    #[test]
    fn unparsable_int_names_row() {
        let err = read_csv("x".as_bytes(), "mem", "t", &schema_a(), false).unwrap_err();
        match err {
            StorageError::ParseInt { row, .. } => assert_eq!(row, 1),
            e => panic!("unexpected {e}"),
        }
        assert!(read_csv("1\n2\nzz".as_bytes(), "mem", "t", &schema_a(), false)
            .unwrap_err()
            .to_string()
            .contains("row 3"));
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let err = read_csv("1,2".as_bytes(), "mem", "t", &schema_a(), false).unwrap_err();
        assert!(matches!(err, StorageError::Arity { row: 1, expected: 1, found: 2, .. }));
    }

    #[test]
    fn header_and_strings() {
        let schema = vec![("a".to_owned(), ColumnType::Int), ("s".to_owned(), ColumnType::Str)];
        let t = read_csv("a,s\n1,\"x,y\"\n2,z".as_bytes(), "mem", "t", &schema, true).unwrap();
        assert_eq!(t.row_count(), 2);
        assert_eq!(t.value(1, 0), ValueRef::Str("x,y"));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "t", &schema_a(), false),
            Err(StorageError::Io { .. })
        ));
    }

    fn table(vals: Vec<i64>) -> Arc<ColumnTable> {
        Arc::new(ColumnTable::from_ints("t", &[("a", vals)]).unwrap())
    }

    #[test]
    fn probe_examples() {
        let idx = HashIndex::build(&FilteredTable::identity(table(vec![5, 3, 5])), "a").unwrap();
        assert_eq!(idx.probe(ValueRef::Int(5)), &[0, 2]);
        assert_eq!(idx.probe(ValueRef::Int(3)), &[1]);
        let empty = HashIndex::build(&FilteredTable::identity(table(vec![])), "a").unwrap();
        assert!(empty.probe(ValueRef::Int(1)).is_empty());
        let one = HashIndex::build(&FilteredTable::identity(table(vec![7])), "a").unwrap();
        assert!(one.probe(ValueRef::Int(8)).is_empty());
        assert!(HashIndex::build(&FilteredTable::identity(table(vec![7])), "zz").is_err());
    }

    #[test]
    fn next_at_least_binary_search() {
        let idx = HashIndex::build(&FilteredTable::identity(table(vec![1, 2, 1, 2, 1])), "a").unwrap();
        assert_eq!(idx.next_at_least(ValueRef::Int(1), 1), Some(2));
        assert_eq!(idx.next_at_least(ValueRef::Int(1), 5), None);
        assert_eq!(idx.next_at_least(ValueRef::Int(9), 0), None);
    }

    fn unary(t: &Arc<ColumnTable>, sql: &str) -> FilteredTable {
        let mut cat = Catalog::new();
        cat.register((**t).clone()).unwrap();
        let q = BoundQuery::bind(&parse_query(sql).unwrap(), &cat).unwrap();
        let preds: Vec<&BoundPredicate> = q.predicates().iter().collect();
        filter_unary(t.clone(), &preds).unwrap()
    }

    #[test]
    fn filter_examples() {
        let t = table(vec![1, 2, 3]);
        assert_eq!(unary(&t, "SELECT * FROM t").rows(), &[0, 1, 2]);
        assert_eq!(unary(&t, "SELECT * FROM t WHERE a > 1").rows(), &[1, 2]);
        assert!(unary(&t, "SELECT * FROM t WHERE always_false(a)").rows().is_empty());
    }

    #[test]
    fn filter_rejects_foreign_column() {
        let wide = Arc::new(ColumnTable::from_ints("w", &[("a", vec![1]), ("b", vec![2])]).unwrap());
        let mut cat = Catalog::new();
        cat.register((*wide).clone()).unwrap();
        let q = BoundQuery::bind(&parse_query("SELECT * FROM w WHERE b = 2").unwrap(), &cat).unwrap();
        let preds: Vec<&BoundPredicate> = q.predicates().iter().collect();
        assert!(matches!(
            filter_unary(table(vec![1]), &preds),
            Err(StorageError::ColumnIndex { .. })
        ));
    }

    #[test]
    fn duplicate_table_rejected() {
        let mut cat = Catalog::new();
        cat.register(ColumnTable::from_ints("t", &[("a", vec![])]).unwrap()).unwrap();
        assert!(cat.register(ColumnTable::from_ints("T", &[("a", vec![])]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn posting_lists_partition_rows(vals in prop::collection::vec(0i64..6, 0..60)) {
            let n = vals.len();
            let idx = HashIndex::build(&FilteredTable::identity(table(vals)), "a").unwrap();
            let mut all: Vec<u32> = Vec::new();
            for list in idx.posting_lists() {
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
                all.extend_from_slice(list);
            }
            all.sort_unstable();
            prop_assert_eq!(all, (0..n as u32).collect::<Vec<_>>());
        }

        #[test]
        fn conjunction_equals_composed_filters(vals in prop::collection::vec(0i64..10, 0..40), lo in 0i64..10, hi in 0i64..10) {
            let t = table(vals);
            let both = unary(&t, &format!("SELECT * FROM t WHERE a > {lo} AND a < {hi}"));
            let first = unary(&t, &format!("SELECT * FROM t WHERE a > {lo}"));
            let second = unary(&t, &format!("SELECT * FROM t WHERE a < {hi}"));
            let composed: Vec<u32> = first.rows().iter().copied().filter(|r| second.rows().contains(r)).collect();
            prop_assert_eq!(both.rows(), composed.as_slice());
        }
    }
}
