//! Mini-SQL for select-project-join queries: parsing, binding against a
//! catalog, predicate classification and the join graph.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::storage::{Catalog, ColumnTable, ColumnType, Value, ValueRef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown function `{0}`")]
    UnknownUdf(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("ambiguous column `{0}`")]
    AmbiguousColumn(String),
    #[error("duplicate alias `{0}`")]
    DuplicateAlias(String),
    #[error("type mismatch in `{0}`")]
    TypeMismatch(String),
    #[error("predicate `{0}` references no table")]
    EmptyFootprint(String),
    #[error("queries are limited to {max} tables, got {got}")]
    TooManyTables { max: usize, got: usize },
    #[error("invalid join order: {0}")]
    InvalidOrder(String),
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRef {
    pub alias: Option<String>,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Column(ColumnRef),
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    fn apply<T: Ord + ?Sized>(self, l: &T, r: &T) -> bool {
        match self {
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
            CmpOp::Lt => l < r,
            CmpOp::Gt => l > r,
            CmpOp::Le => l <= r,
            CmpOp::Ge => l >= r,
        }
    }
}

/// Builtin deterministic functions usable as predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Udf {
    AlwaysTrue,
    AlwaysFalse,
    /// `mod_eq_<k>`: all int arguments are congruent modulo k.
    ModEq(i64),
}

impl Udf {
    pub fn lookup(name: &str) -> Option<Udf> {
        match name {
            "always_true" => Some(Udf::AlwaysTrue),
            "always_false" => Some(Udf::AlwaysFalse),
            _ => name
                .strip_prefix("mod_eq_")
                .and_then(|k| k.parse::<i64>().ok())
                .filter(|&k| k > 0)
                .map(Udf::ModEq),
        }
    }

    fn eval<'a>(self, mut args: impl Iterator<Item = ValueRef<'a>>) -> bool {
        match self {
            Udf::AlwaysTrue => true,
            Udf::AlwaysFalse => false,
            Udf::ModEq(k) => {
                let mut first = None;
                args.all(|v| {
                    let ValueRef::Int(x) = v else { return false };
                    let r = x.rem_euclid(k);
                    *first.get_or_insert(r) == r
                })
            }
        }
    }
}

impl fmt::Display for Udf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Udf::AlwaysTrue => f.write_str("always_true"),
            Udf::AlwaysFalse => f.write_str("always_false"),
            Udf::ModEq(k) => write!(f, "mod_eq_{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Compare { left: Operand, op: CmpOp, right: Operand },
    Udf { func: Udf, args: Vec<ColumnRef> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateKind {
    Count,
    Sum,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectList {
    Star,
    Columns { distinct: bool, columns: Vec<ColumnRef> },
    /// `COUNT(*)` carries no column.
    Aggregate { kind: AggregateKind, column: Option<ColumnRef> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRef {
    pub table: String,
    pub alias: String,
}

/// Parsed, not yet bound, query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub tables: Vec<TableRef>,
    pub select: SelectList,
    pub predicates: Vec<Predicate>,
    pub order_by: Vec<ColumnRef>,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.alias {
            Some(a) => write!(f, "{a}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => c.fmt(f),
            Operand::Int(v) => write!(f, "{v}"),
            Operand::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { left, op, right } => write!(f, "{left} {op} {right}"),
            Predicate::Udf { func, args } => {
                write!(f, "{func}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt(f)?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        it.fmt(f)?;
    }
    Ok(())
}

impl fmt::Display for QuerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.select {
            SelectList::Star => f.write_str("*")?,
            SelectList::Columns { distinct, columns } => {
                if *distinct {
                    f.write_str("DISTINCT ")?;
                }
                write_list(f, columns)?;
            }
            SelectList::Aggregate { kind, column } => {
                let name = match kind {
                    AggregateKind::Count => "COUNT",
                    AggregateKind::Sum => "SUM",
                    AggregateKind::Min => "MIN",
                    AggregateKind::Max => "MAX",
                };
                match column {
                    Some(c) => write!(f, "{name}({c})")?,
                    None => write!(f, "{name}(*)")?,
                }
            }
        }
        f.write_str(" FROM ")?;
        for (i, t) in self.tables.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if t.alias == t.table {
                f.write_str(&t.table)?;
            } else {
                write!(f, "{} {}", t.table, t.alias)?;
            }
        }
        if !self.predicates.is_empty() {
            f.write_str(" WHERE ")?;
            for (i, p) in self.predicates.iter().enumerate() {
                if i > 0 {
                    f.write_str(" AND ")?;
                }
                p.fmt(f)?;
            }
        }
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            write_list(f, &self.order_by)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

fn syntax(position: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_ascii_lowercase()), start));
        } else if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = text[start..i]
                .parse::<i64>()
                .map_err(|_| syntax(start, "integer literal out of range"))?;
            out.push((Tok::Int(v), start));
        } else if c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match bytes.get(i) {
                    None => return Err(syntax(start, "unterminated string literal")),
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = text[i..].chars().next().unwrap();
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push((Tok::Str(s), start));
        } else {
            let two = text.get(i..i + 2);
            let sym = match two {
                Some("<=") => "<=",
                Some(">=") => ">=",
                Some("<>") => "<>",
                Some("!=") => "<>",
                _ => match c {
                    b',' => ",",
                    b'.' => ".",
                    b'(' => "(",
                    b')' => ")",
                    b'*' => "*",
                    b'=' => "=",
                    b'<' => "<",
                    b'>' => ">",
                    b';' => ";",
                    _ => return Err(syntax(start, format!("unexpected character `{}`", c as char))),
                },
            };
            i += if matches!(two, Some("<=" | ">=" | "<>" | "!=")) { 2 } else { 1 };
            out.push((Tok::Sym(sym), start));
        }
    }
    Ok(out)
}

const KEYWORDS: &[&str] = &["select", "from", "where", "and", "order", "by", "distinct"];

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(syntax(self.offset(), message))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), QueryError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(x)) if x == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {}", kw.to_ascii_uppercase()))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn column(&mut self) -> Result<ColumnRef, QueryError> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            let column = self.ident()?;
            Ok(ColumnRef {
                alias: Some(first),
                column,
            })
        } else {
            Ok(ColumnRef {
                alias: None,
                column: first,
            })
        }
    }

    fn query(&mut self) -> Result<QuerySpec, QueryError> {
        self.expect_kw("select")?;
        let select = self.select()?;
        self.expect_kw("from")?;
        let mut tables = vec![self.table()?];
        while self.eat_sym(",") {
            tables.push(self.table()?);
        }
        let mut predicates = Vec::new();
        if self.eat_kw("where") {
            predicates.push(self.predicate()?);
            while self.eat_kw("and") {
                predicates.push(self.predicate()?);
            }
        }
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            order_by.push(self.column()?);
            while self.eat_sym(",") {
                order_by.push(self.column()?);
            }
        }
        self.eat_sym(";");
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok(QuerySpec {
            tables,
            select,
            predicates,
            order_by,
        })
    }

    fn select(&mut self) -> Result<SelectList, QueryError> {
        if self.eat_sym("*") {
            return Ok(SelectList::Star);
        }
        let agg = match self.peek() {
            Some(Tok::Ident(s)) if matches!(self.peek_at(1), Some(Tok::Sym("("))) => match s.as_str() {
                "count" => Some(AggregateKind::Count),
                "sum" => Some(AggregateKind::Sum),
                "min" => Some(AggregateKind::Min),
                "max" => Some(AggregateKind::Max),
                _ => None,
            },
            _ => None,
        };
        if let Some(kind) = agg {
            self.pos += 2;
            let column = if kind == AggregateKind::Count {
                self.expect_sym("*")?;
                None
            } else {
                Some(self.column()?)
            };
            self.expect_sym(")")?;
            return Ok(SelectList::Aggregate { kind, column });
        }
        let distinct = self.eat_kw("distinct");
        let mut columns = vec![self.column()?];
        while self.eat_sym(",") {
            columns.push(self.column()?);
        }
        Ok(SelectList::Columns { distinct, columns })
    }

    fn table(&mut self) -> Result<TableRef, QueryError> {
        let table = self.ident()?;
        let alias = match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => self.ident()?,
            _ => table.clone(),
        };
        Ok(TableRef { table, alias })
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Operand::Int(v))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Operand::Str(s))
            }
            Some(Tok::Ident(_)) => Ok(Operand::Column(self.column()?)),
            _ => self.err("expected column or literal"),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, QueryError> {
        if let (Some(Tok::Ident(name)), Some(Tok::Sym("("))) = (self.peek().cloned(), self.peek_at(1)) {
            let func = Udf::lookup(&name).ok_or(QueryError::UnknownUdf(name))?;
            self.pos += 2;
            let mut args = vec![self.column()?];
            while self.eat_sym(",") {
                args.push(self.column()?);
            }
            self.expect_sym(")")?;
            return Ok(Predicate::Udf { func, args });
        }
        let left = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("<>")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => return self.err("expected comparison operator"),
        };
        self.pos += 1;
        let right = self.operand()?;
        Ok(Predicate::Compare { left, op, right })
    }
}

/// Parses query text. Table and column names are resolved later by
/// [`BoundQuery::bind`]; unknown function names fail here.
pub fn parse_query(text: &str) -> Result<QuerySpec, QueryError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    p.query()
}

// ---------------------------------------------------------------------------
// Table sets, join graph, join orders
// ---------------------------------------------------------------------------

/// Maximum number of tables in one query.
pub const MAX_TABLES: usize = 64;

/// Set of alias ordinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TableSet(u64);

impl TableSet {
    pub const EMPTY: TableSet = TableSet(0);

    pub fn all(m: usize) -> Self {
        if m >= 64 {
            TableSet(u64::MAX)
        } else {
            TableSet((1u64 << m) - 1)
        }
    }

    pub fn single(t: usize) -> Self {
        TableSet(1 << t)
    }

    pub fn from_iter<I: IntoIterator<Item = usize>>(it: I) -> Self {
        it.into_iter().fold(Self::EMPTY, |s, t| s.with(t))
    }

    pub fn with(self, t: usize) -> Self {
        TableSet(self.0 | (1 << t))
    }

    pub fn contains(self, t: usize) -> bool {
        self.0 & (1 << t) != 0
    }

    pub fn union(self, o: Self) -> Self {
        TableSet(self.0 | o.0)
    }

    pub fn minus(self, o: Self) -> Self {
        TableSet(self.0 & !o.0)
    }

    pub fn is_subset(self, o: Self) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(t)
            }
        })
    }
}

/// Undirected adjacency over alias ordinals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinGraph {
    adj: Vec<TableSet>,
}

impl JoinGraph {
    pub fn new(m: usize) -> Self {
        Self {
            adj: vec![TableSet::EMPTY; m],
        }
    }

    /// Edges are the pairwise projections of every footprint.
    pub fn from_footprints<I: IntoIterator<Item = TableSet>>(m: usize, footprints: I) -> Self {
        let mut g = Self::new(m);
        for fp in footprints {
            for a in fp.iter() {
                for b in fp.iter() {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a] = self.adj[a].with(b);
            self.adj[b] = self.adj[b].with(a);
        }
    }

    pub fn table_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, t: usize) -> TableSet {
        self.adj[t]
    }

    /// Candidates for the next join-order position (Cartesian-product avoidance).
    pub fn eligible_tables(&self, chosen: TableSet) -> TableSet {
        let all = TableSet::all(self.adj.len());
        let remaining = all.minus(chosen);
        if chosen.is_empty() {
            return all;
        }
        let adjacent = chosen
            .iter()
            .fold(TableSet::EMPTY, |acc, t| acc.union(self.adj[t]))
            .minus(chosen);
        if adjacent.is_empty() {
            remaining
        } else {
            adjacent
        }
    }
}

/// Free-function form of [`JoinGraph::eligible_tables`].
pub fn eligible_tables(graph: &JoinGraph, chosen: TableSet) -> TableSet {
    graph.eligible_tables(chosen)
}

/// Permutation of alias ordinals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JoinOrder(Vec<usize>);

impl JoinOrder {
    pub fn new(order: Vec<usize>, m: usize) -> Result<Self, QueryError> {
        if order.len() != m {
            return Err(QueryError::InvalidOrder(format!("expected {m} tables, got {}", order.len())));
        }
        let mut seen = TableSet::EMPTY;
        for &t in &order {
            if t >= m || seen.contains(t) {
                return Err(QueryError::InvalidOrder(format!("{order:?} is not a permutation")));
            }
            seen = seen.with(t);
        }
        Ok(Self(order))
    }

    pub(crate) fn from_vec_unchecked(order: Vec<usize>) -> Self {
        Self(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> usize {
        self.0[0]
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl std::ops::Deref for JoinOrder {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// Binding
// ---------------------------------------------------------------------------

/// Column of a query alias: alias ordinal plus column index in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundColumn {
    pub alias: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundOperand {
    Column(BoundColumn),
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundKind {
    Compare {
        left: BoundOperand,
        op: CmpOp,
        right: BoundOperand,
    },
    Udf {
        func: Udf,
        args: Vec<BoundColumn>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPredicate {
    kind: BoundKind,
    footprint: TableSet,
    text: String,
}

impl BoundPredicate {
    pub fn kind(&self) -> &BoundKind {
        &self.kind
    }

    pub fn footprint(&self) -> TableSet {
        self.footprint
    }

    pub fn is_unary(&self) -> bool {
        self.footprint.len() == 1
    }

    pub fn columns(&self) -> Vec<BoundColumn> {
        match &self.kind {
            BoundKind::Compare { left, right, .. } => [left, right]
                .into_iter()
                .filter_map(|o| match o {
                    BoundOperand::Column(c) => Some(*c),
                    BoundOperand::Literal(_) => None,
                })
                .collect(),
            BoundKind::Udf { args, .. } => args.clone(),
        }
    }

    /// Equality between columns of two different aliases.
    pub fn equi_join(&self) -> Option<(BoundColumn, BoundColumn)> {
        match &self.kind {
            BoundKind::Compare {
                left: BoundOperand::Column(l),
                op: CmpOp::Eq,
                right: BoundOperand::Column(r),
            } if l.alias != r.alias => Some((*l, *r)),
            _ => None,
        }
    }

    /// Evaluates against column values supplied by `fetch`.
    #[inline]
    pub fn eval<'a, F: FnMut(BoundColumn) -> ValueRef<'a>>(&self, mut fetch: F) -> bool {
        match &self.kind {
            BoundKind::Compare { left, op, right } => {
                let l = match left {
                    BoundOperand::Column(c) => fetch(*c),
                    BoundOperand::Literal(v) => v.as_ref(),
                };
                let r = match right {
                    BoundOperand::Column(c) => fetch(*c),
                    BoundOperand::Literal(v) => v.as_ref(),
                };
                match (l, r) {
                    (ValueRef::Int(a), ValueRef::Int(b)) => op.apply(&a, &b),
                    (ValueRef::Str(a), ValueRef::Str(b)) => op.apply(a.as_bytes(), b.as_bytes()),
                    _ => false,
                }
            }
            BoundKind::Udf { func, args } => func.eval(args.iter().map(|&c| fetch(c))),
        }
    }
}

impl fmt::Display for BoundPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone)]
pub struct BoundTable {
    pub alias: String,
    pub table: Arc<ColumnTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundSelect {
    Star,
    Columns { distinct: bool, columns: Vec<BoundColumn> },
    Aggregate { kind: AggregateKind, column: Option<BoundColumn> },
}

/// Query resolved against a catalog.
#[derive(Debug, Clone)]
pub struct BoundQuery {
    tables: Vec<BoundTable>,
    predicates: Vec<BoundPredicate>,
    select: BoundSelect,
    order_by: Vec<BoundColumn>,
    graph: JoinGraph,
}

impl BoundQuery {
    pub fn bind(spec: &QuerySpec, catalog: &Catalog) -> Result<Self, QueryError> {
        let m = spec.tables.len();
        if m == 0 {
            return Err(syntax(0, "query has no tables"));
        }
        if m > MAX_TABLES {
            return Err(QueryError::TooManyTables { max: MAX_TABLES, got: m });
        }
        let mut tables: Vec<BoundTable> = Vec::with_capacity(m);
        for t in &spec.tables {
            if tables.iter().any(|b| b.alias == t.alias) {
                return Err(QueryError::DuplicateAlias(t.alias.clone()));
            }
            let table = catalog
                .get(&t.table)
                .ok_or_else(|| QueryError::UnknownTable(t.table.clone()))?
                .clone();
            tables.push(BoundTable {
                alias: t.alias.clone(),
                table,
            });
        }
        let resolve = |c: &ColumnRef| -> Result<BoundColumn, QueryError> {
            match &c.alias {
                Some(a) => {
                    let alias = tables
                        .iter()
                        .position(|t| &t.alias == a)
                        .ok_or_else(|| QueryError::UnknownTable(a.clone()))?;
                    let column = tables[alias]
                        .table
                        .column_index(&c.column)
                        .ok_or_else(|| QueryError::UnknownColumn(c.to_string()))?;
                    Ok(BoundColumn { alias, column })
                }
                None => {
                    let mut hits = tables
                        .iter()
                        .enumerate()
                        .filter_map(|(alias, t)| t.table.column_index(&c.column).map(|column| BoundColumn { alias, column }));
                    let first = hits.next().ok_or_else(|| QueryError::UnknownColumn(c.to_string()))?;
                    if hits.next().is_some() {
                        return Err(QueryError::AmbiguousColumn(c.to_string()));
                    }
                    Ok(first)
                }
            }
        };
        let col_type = |b: BoundColumn| tables[b.alias].table.column(b.column).data.column_type();

        let mut predicates = Vec::with_capacity(spec.predicates.len());
        for p in &spec.predicates {
            let text = p.to_string();
            let kind = match p {
                Predicate::Compare { left, op, right } => {
                    let bind_op = |o: &Operand| -> Result<(BoundOperand, ColumnType), QueryError> {
                        Ok(match o {
                            Operand::Column(c) => {
                                let b = resolve(c)?;
                                (BoundOperand::Column(b), col_type(b))
                            }
                            Operand::Int(v) => (BoundOperand::Literal(Value::Int(*v)), ColumnType::Int),
                            Operand::Str(s) => (BoundOperand::Literal(Value::Str(s.clone())), ColumnType::Str),
                        })
                    };
                    let (l, lt) = bind_op(left)?;
                    let (r, rt) = bind_op(right)?;
                    if lt != rt {
                        return Err(QueryError::TypeMismatch(text));
                    }
                    BoundKind::Compare { left: l, op: *op, right: r }
                }
                Predicate::Udf { func, args } => {
                    let args = args.iter().map(&resolve).collect::<Result<Vec<_>, _>>()?;
                    if matches!(func, Udf::ModEq(_)) && args.iter().any(|&a| col_type(a) != ColumnType::Int) {
                        return Err(QueryError::TypeMismatch(text));
                    }
                    BoundKind::Udf { func: *func, args }
                }
            };
            let mut bp = BoundPredicate {
                kind,
                footprint: TableSet::EMPTY,
                text,
            };
            bp.footprint = TableSet::from_iter(bp.columns().iter().map(|c| c.alias));
            if bp.footprint.is_empty() {
                return Err(QueryError::EmptyFootprint(bp.text));
            }
            predicates.push(bp);
        }

        let select = match &spec.select {
            SelectList::Star => BoundSelect::Star,
            SelectList::Columns { distinct, columns } => BoundSelect::Columns {
                distinct: *distinct,
                columns: columns.iter().map(&resolve).collect::<Result<_, _>>()?,
            },
            SelectList::Aggregate { kind, column } => {
                let column = column.as_ref().map(&resolve).transpose()?;
                if *kind == AggregateKind::Sum && column.is_some_and(|c| col_type(c) != ColumnType::Int) {
                    return Err(QueryError::TypeMismatch(format!("SUM({})", column_name(&tables, column.unwrap()))));
                }
                BoundSelect::Aggregate { kind: *kind, column }
            }
        };
        let order_by = spec.order_by.iter().map(&resolve).collect::<Result<Vec<_>, _>>()?;
        let graph = JoinGraph::from_footprints(m, predicates.iter().map(|p| p.footprint));
        Ok(Self {
            tables,
            predicates,
            select,
            order_by,
            graph,
        })
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[BoundTable] {
        &self.tables
    }

    pub fn predicates(&self) -> &[BoundPredicate] {
        &self.predicates
    }

    pub fn select(&self) -> &BoundSelect {
        &self.select
    }

    pub fn order_by(&self) -> &[BoundColumn] {
        &self.order_by
    }

    pub fn graph(&self) -> &JoinGraph {
        &self.graph
    }

    pub fn alias_index(&self, alias: &str) -> Option<usize> {
        let alias = alias.to_ascii_lowercase();
        self.tables.iter().position(|t| t.alias == alias)
    }

    /// Unary predicates of one alias.
    pub fn unary_predicates(&self, alias: usize) -> Vec<&BoundPredicate> {
        self.predicates
            .iter()
            .filter(|p| p.is_unary() && p.footprint.contains(alias))
            .collect()
    }

    /// Indices of predicates spanning two or more aliases.
    pub fn join_predicates(&self) -> Vec<usize> {
        (0..self.predicates.len())
            .filter(|&i| !self.predicates[i].is_unary())
            .collect()
    }

    pub fn column_label(&self, c: BoundColumn) -> String {
        column_name(&self.tables, c)
    }

    /// Parses a comma-separated list of aliases into an order.
    pub fn parse_order(&self, text: &str) -> Result<JoinOrder, QueryError> {
        let order = text
            .split(',')
            .map(|a| {
                let a = a.trim();
                self.alias_index(a)
                    .ok_or_else(|| QueryError::InvalidOrder(format!("unknown alias `{a}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        JoinOrder::new(order, self.table_count())
    }

    pub fn format_order(&self, order: &[usize]) -> String {
        order
            .iter()
            .map(|&t| self.tables[t].alias.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn column_name(tables: &[BoundTable], c: BoundColumn) -> String {
    format!("{}.{}", tables[c.alias].alias, tables[c.alias].table.column(c.column).name)
}

/// Join predicates (by index into `predicates`) first applicable at
/// `position` of `order`: the footprint is covered by the prefix and contains
/// the table at `position`. Unary predicates are never returned.
pub fn newly_applicable(predicates: &[BoundPredicate], order: &[usize], position: usize) -> Vec<usize> {
    let prefix = TableSet::from_iter(order[..=position].iter().copied());
    let current = order[position];
    predicates
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_unary() && p.footprint.contains(current) && p.footprint.is_subset(prefix))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::ColumnTable;
    use proptest::prelude::*;

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        for name in ["t", "t1", "t2", "a", "b", "c"] {
            c.register(ColumnTable::from_ints(name, &[("a", vec![1]), ("b", vec![2]), ("x", vec![3])]).unwrap())
                .unwrap();
        }
        c
    }

    #[test]
    fn parses_join_query() {
        let q = parse_query("SELECT * FROM t1, t2 WHERE t1.a = t2.b").unwrap();
        assert_eq!(q.tables.len(), 2);
        assert_eq!(q.predicates.len(), 1);
        let b = BoundQuery::bind(&q, &catalog()).unwrap();
        assert_eq!(b.join_predicates(), vec![0]);
        assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn parses_count_star() {
        let q = parse_query("select count(*) from t").unwrap();
        assert_eq!(
            q.select,
            SelectList::Aggregate {
                kind: AggregateKind::Count,
                column: None
            }
        );
        assert!(q.predicates.is_empty());
    }

    #[test]
    fn dangling_where_is_syntax_error() {
        assert!(matches!(
            parse_query("SELECT * FROM t WHERE"),
            Err(QueryError::Syntax { position: 21, .. })
        ));
        assert!(matches!(parse_query("SELECT FROM t"), Err(QueryError::Syntax { .. })));
        assert!(matches!(parse_query("SELECT * FROM t WHERE a = 'x"), Err(QueryError::Syntax { .. })));
    }

    #[test]
    fn unknown_names() {
        assert_eq!(
            parse_query("SELECT * FROM t WHERE frob(t.a)"),
            Err(QueryError::UnknownUdf("frob".into()))
        );
        let cat = catalog();
        let bind = |s: &str| BoundQuery::bind(&parse_query(s).unwrap(), &cat);
        assert!(matches!(bind("SELECT * FROM nope"), Err(QueryError::UnknownTable(_))));
        assert!(matches!(bind("SELECT * FROM t WHERE t.zz = 1"), Err(QueryError::UnknownColumn(_))));
        assert!(matches!(bind("SELECT * FROM t1, t2 WHERE a = 1"), Err(QueryError::AmbiguousColumn(_))));
        assert!(matches!(bind("SELECT * FROM t, t"), Err(QueryError::DuplicateAlias(_))));
        assert!(matches!(bind("SELECT * FROM t WHERE a = 'x'"), Err(QueryError::TypeMismatch(_))));
        assert!(matches!(bind("SELECT * FROM t WHERE 1 = 1"), Err(QueryError::EmptyFootprint(_))));
    }

    #[test]
    fn aliases_strings_and_order_by() {
        let q = parse_query("SELECT DISTINCT x.a, y.b FROM t x, t y WHERE x.a <> y.b AND mod_eq_3(x.a, y.x) AND x.a >= -2 ORDER BY y.b").unwrap();
        assert_eq!(q.tables[1], TableRef { table: "t".into(), alias: "y".into() });
        assert_eq!(parse_query(&q.to_string()).unwrap(), q);
        let b = BoundQuery::bind(&q, &catalog()).unwrap();
        assert_eq!(b.join_predicates(), vec![0, 1]);
        assert_eq!(b.unary_predicates(0).len(), 1);
    }

    #[test]
    fn udf_semantics() {
        let v = |xs: &[i64]| xs.iter().map(|&x| ValueRef::Int(x)).collect::<Vec<_>>();
        assert!(Udf::ModEq(3).eval(v(&[1, 4, -2]).into_iter()));
        assert!(!Udf::ModEq(3).eval(v(&[1, 5]).into_iter()));
        assert!(Udf::AlwaysTrue.eval(v(&[0]).into_iter()));
        assert!(!Udf::AlwaysFalse.eval(v(&[0]).into_iter()));
        assert_eq!(Udf::lookup("mod_eq_0"), None);
    }

    fn chain3() -> JoinGraph {
        let mut g = JoinGraph::new(3);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g
    }

    #[test]
    fn eligible_examples() {
        let g = chain3();
        assert_eq!(g.eligible_tables(TableSet::single(0)), TableSet::single(1));
        assert_eq!(g.eligible_tables(TableSet::EMPTY), TableSet::all(3));
        let mut split = JoinGraph::new(3);
        split.add_edge(0, 1);
        assert_eq!(split.eligible_tables(TableSet::single(2)), TableSet::from_iter([0, 1]));
    }

    fn bound(sql: &str) -> BoundQuery {
        BoundQuery::bind(&parse_query(sql).unwrap(), &catalog()).unwrap()
    }

    #[test]
    fn newly_applicable_examples() {
        let q = bound("SELECT * FROM a, b, c WHERE a.x = c.x");
        let preds = q.predicates();
        assert_eq!(newly_applicable(preds, &[0, 1, 2], 2), vec![0]);
        assert!(newly_applicable(preds, &[0, 1, 2], 1).is_empty());
        assert!(newly_applicable(preds, &[0, 1, 2], 0).is_empty());
        let q = bound("SELECT * FROM a, b, c WHERE b.x = c.x AND a.a > 0");
        assert_eq!(newly_applicable(q.predicates(), &[2, 0, 1], 2), vec![0]);
        assert!(newly_applicable(q.predicates(), &[2, 0, 1], 1).is_empty());
    }

    #[test]
    fn ternary_footprint_edges() {
        let q = bound("SELECT * FROM a, b, c WHERE mod_eq_2(a.x, b.x, c.x)");
        assert_eq!(q.graph().neighbors(0), TableSet::from_iter([1, 2]));
        assert_eq!(newly_applicable(q.predicates(), &[1, 2, 0], 2), vec![0]);
    }

    #[test]
    fn order_validation() {
        assert!(JoinOrder::new(vec![0, 0], 2).is_err());
        assert!(JoinOrder::new(vec![0], 2).is_err());
        let q = bound("SELECT * FROM a, b");
        assert_eq!(q.parse_order("b, a").unwrap().as_slice(), &[1, 0]);
        assert!(q.parse_order("a,zz").is_err());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, u64)> {
        (2usize..7).prop_flat_map(|m| (Just(m), prop::collection::vec((0..m, 0..m), 0..10), any::<u64>()))
    }

    proptest! {
        #[test]
        fn eligible_never_returns_chosen((m, edges, mask) in arb_graph()) {
            let mut g = JoinGraph::new(m);
            for (a, b) in edges { g.add_edge(a, b); }
            let chosen = TableSet(mask & TableSet::all(m).0);
            let e = g.eligible_tables(chosen);
            prop_assert!(e.minus(TableSet::all(m)).is_empty());
            for t in e.iter() { prop_assert!(!chosen.contains(t)); }
            if chosen.len() < m { prop_assert!(!e.is_empty()); }
        }

        #[test]
        fn each_join_predicate_applies_once(perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
            let q = bound("SELECT * FROM a, b, c, t WHERE a.x = b.x AND mod_eq_2(b.a, c.a, t.a) AND c.b < a.b AND t.x = 3");
            let mut hits = vec![0; q.predicates().len()];
            for pos in 0..perm.len() {
                for i in newly_applicable(q.predicates(), &perm, pos) { hits[i] += 1; }
            }
            prop_assert_eq!(hits, vec![1, 1, 1, 0]);
        }
    }
}
