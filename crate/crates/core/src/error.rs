use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("vertex sets overlap")]
    OverlappingSets,
    #[error("vertex {0} is not a decision vertex")]
    NotDecisionVertex(usize),
    #[error("order is not a topological order: {0}")]
    NotTopological(String),
    #[error("relevance graph is cyclic")]
    NotSoluble,
    #[error("invalid seed set for vertex {0}")]
    InvalidSeed(usize),
    #[error("policy is missing or malformed for decision {0}")]
    IncompletePolicy(usize),
    #[error("{count} deterministic policies exceed the cap {cap}")]
    TooManyPolicies { count: f64, cap: f64 },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("time limit reached")]
    TimeLimit,
    #[error("external solver failed: {0}")]
    SolverProcessFailed(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("solution has fractional decision variable {0}")]
    FractionalSolution(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
