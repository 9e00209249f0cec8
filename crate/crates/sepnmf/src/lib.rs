//! Separable nonnegative matrix factorization by linear programming.
//!
//! The crate builds and solves the Hottopixx LP, extracts anchor columns from
//! its solution (top-r diagonal selection or the clustering post-processing),
//! measures the conditioning of a factor `W`, generates the adversarial
//! instances used to probe the model, and runs recovery benchmarks.

pub mod bench;
pub mod cond;
pub mod extract;
pub mod gen;
pub mod hottopixx;
pub mod io;
pub mod lp;
pub mod matrix;

pub use matrix::{DenseMatrix, IndexSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("every column is zero")]
    AllZeroColumns,
    #[error("linear program not solved: {0:?}")]
    Lp(lp::LpStatus),
    #[error("column {col}: linear program not solved: {status:?}")]
    LpColumn { col: usize, status: lp::LpStatus },
    #[error("extracted index set did not stabilize before K = {0}")]
    KNotStable(f64),
    #[error("could not draw a matrix with kappa >= {floor} after {tries} tries")]
    KappaFloor { floor: f64, tries: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
