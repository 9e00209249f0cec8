//! A small dense-inverse revised simplex solver and an l1-regression helper.

mod l1;
mod simplex;

pub use l1::{l1_fit, L1Fit};
pub use simplex::solve_lp;

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Sparse row: `(variable index, coefficient)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// A claimed optimum failed the final feasibility check.
    Numerical,
}

/// `min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    pub c: Vec<f64>,
    pub a_eq: Vec<SparseRow>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<SparseRow>,
    pub b_ub: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// `num_vars` variables in `[0, inf)`, zero objective, no rows.
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            c: vec![0.0; num_vars],
            a_eq: vec![],
            b_eq: vec![],
            a_ub: vec![],
            b_ub: vec![],
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn add_eq(&mut self, row: SparseRow, b: f64) {
        self.a_eq.push(row);
        self.b_eq.push(b);
    }

    pub fn add_le(&mut self, row: SparseRow, b: f64) {
        self.a_ub.push(row);
        self.b_ub.push(b);
    }

    pub fn num_constraints(&self) -> usize {
        self.a_eq.len() + self.a_ub.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.c.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Shape("objective or bounds length differs from num_vars".into()));
        }
        if self.a_eq.len() != self.b_eq.len() || self.a_ub.len() != self.b_ub.len() {
            return Err(Error::Shape("row and right-hand-side counts differ".into()));
        }
        for row in self.a_eq.iter().chain(&self.a_ub) {
            if row.iter().any(|&(j, v)| j >= n || !v.is_finite()) {
                return Err(Error::InvalidParam("row entry out of range or not finite".into()));
            }
        }
        if self.c.iter().chain(&self.b_eq).chain(&self.b_ub).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("objective and right-hand sides must be finite".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::InvalidParam(format!("bad bounds on variable {j}")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Plain-text listing of the problem, for debugging.
    pub fn to_listing(&self) -> String {
        let term = |row: &SparseRow| {
            row.iter().map(|&(j, v)| format!("{v:+} x{j}")).collect::<Vec<_>>().join(" ")
        };
        let mut s = String::from("minimize\n ");
        let obj: SparseRow = self.c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
        s += &term(&obj);
        s += "\nsubject to\n";
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            let _ = writeln!(s, " {} = {b}", term(row));
        }
        for (row, b) in self.a_ub.iter().zip(&self.b_ub) {
            let _ = writeln!(s, " {} <= {b}", term(row));
        }
        s += "bounds\n";
        for j in 0..self.num_vars {
            let _ = writeln!(s, " {} <= x{j} <= {}", self.lower[j], self.upper[j]);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    /// Defaults to `50 * (num_vars + num_constraints)`.
    pub max_iter: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Iterations between recomputing primal values and reduced costs.
    pub refresh_every: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            pivot_tol: 1e-7,
            max_iter: None,
            bland_after: 50,
            refresh_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ConstraintRef {
    Eq(usize),
    Ub(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub at: ConstraintRef,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub pass: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.amount).fold(0.0, f64::max)
    }
}

fn row_dot(row: &SparseRow, x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

/// Lists every constraint or bound violated by more than `tol`.
pub fn check_feasible(p: &LpProblem, x: &[f64], tol: f64) -> Result<FeasibilityReport> {
    if x.len() != p.num_vars {
        return Err(Error::Shape(format!("point has {} entries, problem has {} variables", x.len(), p.num_vars)));
    }
    let mut violations = vec![];
    let mut push = |at, amount: f64| {
        if amount > tol {
            violations.push(Violation { at, amount });
        }
    };
    for (i, (row, b)) in p.a_eq.iter().zip(&p.b_eq).enumerate() {
        push(ConstraintRef::Eq(i), (row_dot(row, x) - b).abs());
    }
    for (i, (row, b)) in p.a_ub.iter().zip(&p.b_ub).enumerate() {
        push(ConstraintRef::Ub(i), row_dot(row, x) - b);
    }
    for j in 0..p.num_vars {
        push(ConstraintRef::Lower(j), p.lower[j] - x[j]);
        push(ConstraintRef::Upper(j), x[j] - p.upper[j]);
    }
    Ok(FeasibilityReport { pass: violations.is_empty(), violations })
}
