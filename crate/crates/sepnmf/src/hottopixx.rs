//! The Hottopixx linear program.
//!
//! ```text
//! min  p' diag(X)
//! s.t. ||Mt(:,j) - Mt X(:,j)||_1 <= 2 eps   for every column j
//!      tr(X) = r,  0 <= X(i,i) <= 1,  0 <= X(i,j) <= X(i,i)
//! ```
//!
//! The absolute values are linearized with an auxiliary block `T >= |Mt - Mt X|`.

use crate::lp::{solve_lp, LpOptions, LpProblem, LpSolution, LpStatus, SparseRow};
use crate::matrix::{l1_dist, IndexSet};
use crate::{DenseMatrix, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ModelOptions {
    /// Adds `sum_i X(i,j) = 1` for every column.
    pub sum_to_one: bool,
    /// Omits the `X(i,j) <= X(i,i)` rows.
    pub drop_offdiag_cap: bool,
}

#[derive(Clone, Debug)]
pub struct HottopixxModel {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub eps: f64,
    pub p: Vec<f64>,
    pub opts: ModelOptions,
}

impl HottopixxModel {
    /// LP column of `X(i,j)`.
    pub fn x_var(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// LP column of `T(i,j)`.
    pub fn t_var(&self, i: usize, j: usize) -> usize {
        self.n * self.n + j * self.m + i
    }

    pub fn num_vars(&self) -> usize {
        self.n * self.n + self.m * self.n
    }

    /// Reads the `X` block out of an LP point.
    pub fn x_from(&self, v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_col_major(self.n, self.n, v[..self.n * self.n].to_vec()).expect("X block is n x n and finite")
    }

    /// LP point for a given `X`, with `T` set to the induced absolute residuals.
    pub fn lp_point(&self, mt: &DenseMatrix, x: &DenseMatrix) -> Result<Vec<f64>> {
        let r = mt.sub(&mt.matmul(x)?)?;
        let mut v = x.as_slice().to_vec();
        v.extend(r.as_slice().iter().map(|e| e.abs()));
        Ok(v)
    }
}

/// Builds the LP. Variables are `X` (column-major, `n^2`) followed by `T`
/// (column-major, `m n`). Inequality rows come in the order: residual pairs
/// per column, column budgets, off-diagonal caps. Equality rows: trace, then
/// optional column sums.
pub fn build_model(
    mt: &DenseMatrix,
    r: usize,
    eps: f64,
    p: &[f64],
    opts: ModelOptions,
) -> Result<(HottopixxModel, LpProblem)> {
    let (m, n) = (mt.rows(), mt.cols());
    if r > n {
        return Err(Error::InvalidParam(format!("r = {r} exceeds n = {n}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParam(format!("eps must be nonnegative, got {eps}")));
    }
    if p.len() != n {
        return Err(Error::Shape(format!("p has {} entries, expected {n}", p.len())));
    }
    let model = HottopixxModel { m, n, r, eps, p: p.to_vec(), opts };
    let mut lp = LpProblem::new(model.num_vars());
    for i in 0..n {
        lp.c[model.x_var(i, i)] = p[i];
        lp.upper[model.x_var(i, i)] = 1.0;
    }

    for j in 0..n {
        for i in 0..m {
            let mut row: SparseRow = (0..n).filter(|&l| mt[(i, l)] != 0.0).map(|l| (model.x_var(l, j), -mt[(i, l)])).collect();
            let k = row.len();
            row.push((model.t_var(i, j), -1.0));
            lp.add_le(row.clone(), -mt[(i, j)]);
            for e in &mut row[..k] {
                e.1 = -e.1;
            }
            lp.add_le(row, mt[(i, j)]);
        }
    }
    for j in 0..n {
        lp.add_le((0..m).map(|i| (model.t_var(i, j), 1.0)).collect(), 2.0 * eps);
    }
    if !opts.drop_offdiag_cap {
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    lp.add_le(vec![(model.x_var(i, j), 1.0), (model.x_var(i, i), -1.0)], 0.0);
                }
            }
        }
    }
    lp.add_eq((0..n).map(|i| (model.x_var(i, i), 1.0)).collect(), r as f64);
    if opts.sum_to_one {
        for j in 0..n {
            lp.add_eq((0..n).map(|i| (model.x_var(i, j), 1.0)).collect(), 1.0);
        }
    }
    Ok((model, lp))
}

/// Solves the model and returns the optimal `X`.
pub fn solve_hottopixx(model: &HottopixxModel, lp: &LpProblem) -> Result<(DenseMatrix, LpSolution)> {
    let sol = solve_lp(lp, &LpOptions::default())?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(sol.status));
    }
    Ok((model.x_from(&sol.x), sol))
}

/// Objective weights: i.i.d. uniform on `[0, 1]`, redrawn until no two
/// entries are within `1e-12` of each other.
pub fn default_p(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if all_distinct(&p, 1e-12) {
            return p;
        }
    }
}

pub(crate) fn all_distinct(p: &[f64], tol: f64) -> bool {
    let mut s = p.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s.windows(2).all(|w| w[1] - w[0] > tol)
}

/// The noiseless solution: row `anchors[k]` of `X0` is row `k` of `H`, all
/// other rows are zero.
pub fn embed_x0(h: &DenseMatrix, anchors: &IndexSet, n: usize) -> Result<DenseMatrix> {
    let r = h.rows();
    if h.cols() != n || anchors.len() != r {
        return Err(Error::Shape(format!("H is {}x{}, anchors {}, n {n}", h.rows(), h.cols(), anchors.len())));
    }
    for (k, &a) in anchors.iter().enumerate() {
        if a >= n || (0..r).any(|l| h[(l, a)] != if l == k { 1.0 } else { 0.0 }) {
            return Err(Error::InvalidParam(format!("column {a} of H is not unit vector e_{k}")));
        }
    }
    let mut x = DenseMatrix::zeros(n, n);
    for (k, &a) in anchors.iter().enumerate() {
        for j in 0..n {
            x[(a, j)] = h[(k, j)];
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantViolation {
    pub what: &'static str,
    pub col: usize,
    pub value: f64,
    pub bound: f64,
}

/// Column-sum, reconstruction and anchor-diagonal bounds that every feasible
/// `X` satisfies when `eps < 1`.
///
/// `m_clean` is the noiseless data. The anchor check is skipped when
/// `beta >= 1`.
pub fn feasibility_invariants(
    x: &DenseMatrix,
    m_clean: &DenseMatrix,
    eps: f64,
    kappa: f64,
    beta: f64,
    anchors: &IndexSet,
    tol: f64,
) -> Result<Vec<InvariantViolation>> {
    let n = x.cols();
    let mut out = vec![];
    let slack = 4.0 * eps / (1.0 - eps);
    let mx = m_clean.matmul(x)?;
    for j in 0..n {
        let s = x.col_l1(j);
        if s > 1.0 + slack + tol {
            out.push(InvariantViolation { what: "column l1 norm", col: j, value: s, bound: 1.0 + slack });
        }
        let e = l1_dist(m_clean.col(j), mx.col(j));
        if e > slack + tol {
            out.push(InvariantViolation { what: "clean residual", col: j, value: e, bound: slack });
        }
    }
    if beta < 1.0 {
        let bound = 1.0 - 8.0 * eps / (kappa * (1.0 - beta) * (1.0 - eps));
        for &a in anchors {
            if x[(a, a)] < bound - tol {
                out.push(InvariantViolation { what: "anchor diagonal", col: a, value: x[(a, a)], bound });
            }
        }
    }
    Ok(out)
}

/// Checks the constraint families directly on `X`, returning the largest
/// violation of each: residual budget, trace, diagonal range, nonnegativity,
/// off-diagonal cap.
pub fn direct_violations(mt: &DenseMatrix, x: &DenseMatrix, r: usize, eps: f64, opts: ModelOptions) -> Result<[f64; 6]> {
    let n = x.cols();
    let res = mt.sub(&mt.matmul(x)?)?;
    let budget = (0..n).map(|j| res.col_l1(j) - 2.0 * eps).fold(f64::NEG_INFINITY, f64::max);
    let trace = (x.diag().iter().sum::<f64>() - r as f64).abs();
    let diag = x.diag().iter().map(|&d| (d - 1.0).max(-d)).fold(f64::NEG_INFINITY, f64::max);
    let neg = x.as_slice().iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    let mut cap = f64::NEG_INFINITY;
    if !opts.drop_offdiag_cap {
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    cap = cap.max(x[(i, j)] - x[(i, i)]);
                }
            }
        }
    }
    let mut sums = 0.0f64;
    if opts.sum_to_one {
        for j in 0..n {
            sums = sums.max((x.col(j).iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok([budget, trace, diag, neg, cap, sums])
}
