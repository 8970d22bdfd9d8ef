use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("negative entry at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize },
    #[error("row {row} sums to 1 {deviation:+e}")]
    RowSumViolation { row: usize, deviation: f64 },
    #[error("at least {min} classes are required, got {got}")]
    TooFewClasses { min: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{function}({x}) is outside the domain x > 0")]
    DomainError { function: &'static str, x: f64 },

    #[error("invalid neighbour count k = {k} for n = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("points {i} and {j} coincide and the neighbour tie cannot be broken")]
    DuplicatePoints { i: usize, j: usize },
    #[error("point {0} has no neighbour within the cutoff")]
    IsolatedPoint(usize),
    #[error("points {i} and {j} are at zero distance")]
    ZeroDistance { i: usize, j: usize },
    #[error("weights matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("negative weight at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize },
    #[error("non-zero diagonal weight at row {0}")]
    NonzeroDiagonal(usize),
    #[error("rho = {0} lies outside [-1, 1]")]
    RhoOutOfRange(f64),
    #[error("I - rho W is numerically singular (rho = {rho}, rcond = {rcond:e})")]
    SingularLag { rho: f64, rcond: f64 },

    #[error("linear predictor is not finite at row {0}")]
    NonFiniteLinearPredictor(usize),
    #[error("precision linear predictor {value} at row {row} overflows exp")]
    Overflow { row: usize, value: f64 },
    #[error("label y[{row}, {col}] = {value} is not strictly positive")]
    NonPositiveLabel { row: usize, col: usize, value: f64 },
    #[error("probability p[{row}, {col}] = {value} is not strictly positive where y > 0")]
    NonPositiveProbability { row: usize, col: usize, value: f64 },
    #[error("first column of beta must be identically zero")]
    UnpinnedReferenceColumn,

    #[error("objective or gradient is not finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },
    #[error("line search failed at iteration {iteration}")]
    LineSearchFailure { iteration: usize },
    #[error("information matrix is singular or indefinite")]
    SingularInformation,
    #[error("class {0} has zero variance")]
    ZeroVariance(usize),
    #[error("row {0} is identically zero")]
    ZeroRow(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
