//! Learned join ordering for select-project-join queries.
//!
//! Join orders are chosen by UCT over order prefixes and executed in small
//! time slices, either by a customized depth-first multiway join that keeps
//! progress across orders ([`executor`]) or by batched invocations of a
//! black-box engine under a pyramid timeout scheme ([`generic`]).

pub mod executor;
pub mod generic;
pub mod manifest;
pub mod num;
pub mod oracle;
pub mod postproc;
pub mod progress;
pub mod query;
pub mod reward;
pub mod stats;
pub mod storage;
pub mod uct;
pub mod workload;

use thiserror::Error;

pub use num::Real;
pub use query::{parse_query, BoundQuery, JoinGraph, JoinOrder, QuerySpec, TableSet};
pub use stats::RunStats;
pub use storage::{Catalog, ColumnTable, ColumnType, Value};

pub type UctTreeF64 = uct::UctTree<f64>;
pub type UctTreeF32 = uct::UctTree<f32>;
pub type GenericLearnerF64 = generic::GenericLearner<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Storage(#[from] storage::StorageError),
    #[error(transparent)]
    Query(#[from] query::QueryError),
    #[error("optimal-order enumeration is capped at {cap} tables, query has {tables}")]
    EnumerationCap { cap: usize, tables: usize },
    #[error("invalid workload parameters: {0}")]
    Workload(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
