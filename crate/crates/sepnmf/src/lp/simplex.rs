//! Two-phase bounded-variable revised simplex with an explicit dense basis
//! inverse.
//!
//! Every variable is shifted or reflected so that it lives in `[0, u]`.
//! Inequality rows get a slack; equality rows and rows whose shifted
//! right-hand side is negative start on an artificial variable, which phase 1
//! drives to zero and phase 2 pins at zero.

use super::{check_feasible, LpOptions, LpProblem, LpSolution, LpStatus};
use crate::Result;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Basic,
    Lower,
    Upper,
}

#[derive(Clone, Copy)]
enum VarMap {
    /// `x = l + x'`
    Shift(f64),
    /// `x = u - x'`
    Reflect(f64),
    /// `x = x' - x''`, the second part stored at the given column.
    Split(usize),
}

enum Step {
    Flip,
    Pivot { pos: usize, theta: f64, to_upper: bool },
    Unbounded,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex<'o> {
    opts: &'o LpOptions,
    m: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Column-major `m x m`; entry `(i, k)` lives at `k * m + i`.
    binv: Vec<f64>,
    d: Vec<f64>,
    iters: usize,
    limit: usize,
    degenerate_run: usize,
}

/// Solves `p`. Identical inputs always give bit-identical outputs.
pub fn solve_lp(p: &LpProblem, opts: &LpOptions) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars;
    let meq = p.a_eq.len();
    let m = meq + p.a_ub.len();

    // Variable standardization.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = n;
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        maps.push(if l.is_finite() {
            VarMap::Shift(l)
        } else if u.is_finite() {
            VarMap::Reflect(u)
        } else {
            ncols += 1;
            VarMap::Split(ncols - 1)
        });
    }
    let n_struct = ncols;

    let scale = p.c.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut cost2 = vec![0.0; n_struct];
    let mut upper = vec![f64::INFINITY; n_struct];
    for j in 0..n {
        let c = p.c[j] / scale;
        match maps[j] {
            VarMap::Shift(l) => {
                cost2[j] = c;
                upper[j] = p.upper[j] - l;
            }
            VarMap::Reflect(_) => cost2[j] = -c,
            VarMap::Split(k) => {
                cost2[j] = c;
                cost2[k] = -c;
            }
        }
    }

    let mut cols: Vec<Vec<(usize, f64)>> = vec![vec![]; n_struct];
    let mut b = Vec::with_capacity(m);
    for (i, (row, &rhs)) in p.a_eq.iter().zip(&p.b_eq).chain(p.a_ub.iter().zip(&p.b_ub)).enumerate() {
        let mut bi = rhs;
        for &(j, v) in row {
            match maps[j] {
                VarMap::Shift(l) => {
                    cols[j].push((i, v));
                    bi -= v * l;
                }
                VarMap::Reflect(u) => {
                    cols[j].push((i, -v));
                    bi -= v * u;
                }
                VarMap::Split(k) => {
                    cols[j].push((i, v));
                    cols[k].push((i, -v));
                }
            }
        }
        b.push(bi);
    }

    // Logical columns: slacks for inequality rows, then artificials.
    let mut basis = vec![usize::MAX; m];
    for i in meq..m {
        cols.push(vec![(i, 1.0)]);
        upper.push(f64::INFINITY);
        if b[i] >= 0.0 {
            basis[i] = cols.len() - 1;
        }
    }
    let first_art = cols.len();
    for i in 0..m {
        if basis[i] == usize::MAX {
            cols.push(vec![(i, if b[i] >= 0.0 { 1.0 } else { -1.0 })]);
            upper.push(f64::INFINITY);
            basis[i] = cols.len() - 1;
        }
    }
    let total = cols.len();

    let mut col_ptr = Vec::with_capacity(total + 1);
    let mut row_idx = vec![];
    let mut vals = vec![];
    col_ptr.push(0);
    for c in &cols {
        for &(i, v) in c {
            row_idx.push(i);
            vals.push(v);
        }
        col_ptr.push(row_idx.len());
    }

    let mut state = vec![State::Lower; total];
    let mut binv = vec![0.0; m * m];
    for (i, &j) in basis.iter().enumerate() {
        state[j] = State::Basic;
        binv[i * m + i] = vals[col_ptr[j]];
    }

    let limit = opts.max_iter.unwrap_or(50 * (p.num_vars + p.num_constraints()));
    let mut s = Simplex {
        opts,
        m,
        col_ptr,
        row_idx,
        vals,
        upper,
        cost: vec![0.0; total],
        b,
        x: vec![0.0; total],
        state,
        basis,
        binv,
        d: vec![0.0; total],
        iters: 0,
        limit,
        degenerate_run: 0,
    };

    let finish = |s: &Simplex, status: LpStatus| -> LpSolution {
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = match maps[j] {
                VarMap::Shift(l) => l + s.x[j],
                VarMap::Reflect(u) => u - s.x[j],
                VarMap::Split(k) => s.x[j] - s.x[k],
            };
        }
        LpSolution { status, objective: p.objective(&x), x, iterations: s.iters }
    };

    // Phase 1.
    if first_art < total {
        for j in first_art..total {
            s.cost[j] = 1.0;
        }
        s.refresh();
        match s.run() {
            Outcome::IterationLimit => return Ok(finish(&s, LpStatus::IterationLimit)),
            Outcome::Unbounded => unreachable!("phase 1 objective is bounded below by zero"),
            Outcome::Optimal => {}
        }
        let infeas: f64 = (first_art..total).map(|j| s.x[j]).sum();
        if infeas > opts.feas_tol {
            return Ok(finish(&s, LpStatus::Infeasible));
        }
        for j in first_art..total {
            s.upper[j] = 0.0;
            s.cost[j] = 0.0;
            if s.state[j] == State::Upper {
                s.state[j] = State::Lower;
            }
        }
    }

    // Phase 2.
    s.cost[..n_struct].copy_from_slice(&cost2);
    s.refresh();
    let status = match s.run() {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    s.refresh_primal();
    let mut sol = finish(&s, status);
    if sol.status == LpStatus::Optimal && !check_feasible(p, &sol.x, FINAL_TOL)?.pass {
        sol.status = LpStatus::Numerical;
    }
    Ok(sol)
}

/// Feasibility tolerance applied to a claimed optimum in the caller's
/// variables; anything worse is reported as a numerical failure.
const FINAL_TOL: f64 = 1e-7;

impl Simplex<'_> {
    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    fn binv_col(&self, k: usize) -> &[f64] {
        &self.binv[k * self.m..(k + 1) * self.m]
    }

    /// `B^-1 a_j` as a dense vector.
    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (k, v) in self.col(j) {
            for (o, &bk) in out.iter_mut().zip(self.binv_col(k)) {
                *o += v * bk;
            }
        }
        out
    }

    fn ftran(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (k, &v) in rhs.iter().enumerate() {
            if v != 0.0 {
                for (o, &bk) in out.iter_mut().zip(self.binv_col(k)) {
                    *o += v * bk;
                }
            }
        }
        out
    }

    fn refresh(&mut self) {
        self.refresh_primal();
        self.refresh_duals();
    }

    /// Recomputes basic values from the nonbasic ones, with one step of
    /// iterative refinement.
    fn refresh_primal(&mut self) {
        let mut r = self.b.clone();
        for j in 0..self.x.len() {
            match self.state[j] {
                State::Basic => {}
                State::Lower => self.x[j] = 0.0,
                State::Upper => self.x[j] = self.upper[j],
            }
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, v) in self.col(j).collect::<Vec<_>>() {
                    r[i] -= v * xj;
                }
            }
        }
        let xb = self.ftran(&r);
        for (i, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[i];
        }
        let mut e = r;
        for &j in &self.basis {
            let xj = self.x[j];
            for (i, v) in self.col(j) {
                e[i] -= v * xj;
            }
        }
        let dx = self.ftran(&e);
        for (i, &j) in self.basis.iter().enumerate() {
            self.x[j] += dx[i];
        }
    }

    fn refresh_duals(&mut self) {
        let m = self.m;
        let y: Vec<f64> = (0..m)
            .map(|k| {
                let col = self.binv_col(k);
                self.basis.iter().enumerate().map(|(i, &j)| self.cost[j] * col[i]).sum()
            })
            .collect();
        for j in 0..self.x.len() {
            self.d[j] = if self.state[j] == State::Basic {
                0.0
            } else {
                self.cost[j] - self.col(j).map(|(i, v)| v * y[i]).sum::<f64>()
            };
        }
    }

    /// Direction in which `j` may improve the objective, if any.
    fn eligible(&self, j: usize) -> Option<f64> {
        let tol = self.opts.opt_tol;
        match self.state[j] {
            State::Lower if self.upper[j] > 0.0 && self.d[j] < -tol => Some(1.0),
            State::Upper if self.d[j] > tol => Some(-1.0),
            _ => None,
        }
    }

    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_val = 0.0;
        for j in 0..self.x.len() {
            if let Some(dir) = self.eligible(j) {
                if bland {
                    return Some((j, dir));
                }
                let v = self.d[j].abs();
                if v > best_val {
                    best_val = v;
                    best = Some((j, dir));
                }
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> Step {
        let piv = self.opts.pivot_tol;
        let delta = 0.1 * self.opts.feas_tol;
        let ratio = |i: usize, relax: f64| -> Option<(f64, bool)> {
            let g = dir * alpha[i];
            let xb = self.x[self.basis[i]];
            if g > piv {
                Some(((xb + relax) / g, false))
            } else if g < -piv {
                let u = self.upper[self.basis[i]];
                u.is_finite().then(|| ((u - xb + relax) / -g, true))
            } else {
                None
            }
        };
        let mut theta_max = f64::INFINITY;
        for i in 0..self.m {
            if let Some((t, _)) = ratio(i, delta) {
                theta_max = theta_max.min(t);
            }
        }
        let uq = self.upper[q];
        if uq <= theta_max {
            return if uq.is_finite() { Step::Flip } else { Step::Unbounded };
        }
        // Rows whose exact ratio fits under the relaxed bound (Harris).
        let cands: Vec<(usize, f64, bool)> = (0..self.m)
            .filter_map(|i| ratio(i, 0.0).filter(|&(t, _)| t <= theta_max).map(|(t, u)| (i, t, u)))
            .collect();
        let big = cands.iter().fold(0.0f64, |a, &(i, _, _)| a.max(alpha[i].abs()));
        // Largest pivot; in anti-cycling mode, the lowest variable index among
        // pivots within a factor of ten of the largest.
        let pick = if bland {
            cands.iter().filter(|&&(i, _, _)| alpha[i].abs() >= 0.1 * big).min_by_key(|&&(i, _, _)| self.basis[i])
        } else {
            cands.iter().max_by(|a, b| {
                alpha[a.0].abs().total_cmp(&alpha[b.0].abs()).then(self.basis[b.0].cmp(&self.basis[a.0]))
            })
        };
        match pick {
            Some(&(pos, t, to_upper)) => Step::Pivot { pos, theta: t.max(0.0), to_upper },
            None => Step::Unbounded,
        }
    }

    fn run(&mut self) -> Outcome {
        let mut since_refresh = 0;
        loop {
            let bland = self.degenerate_run >= self.opts.bland_after;
            let Some((q, dir)) = self.price(bland) else {
                // Confirm optimality on freshly computed values.
                self.refresh();
                since_refresh = 0;
                if self.price(false).is_none() {
                    return Outcome::Optimal;
                }
                continue;
            };
            if self.iters >= self.limit {
                return Outcome::IterationLimit;
            }
            self.iters += 1;
            let alpha = self.ftran_col(q);
            match self.ratio_test(q, dir, &alpha, bland) {
                Step::Unbounded => {
                    self.refresh();
                    since_refresh = 0;
                    let again = self.ftran_col(q);
                    if self.eligible(q).is_some() {
                        if let Step::Unbounded = self.ratio_test(q, dir, &again, bland) {
                            return Outcome::Unbounded;
                        }
                    }
                    continue;
                }
                Step::Flip => {
                    let step = dir * self.upper[q];
                    for (i, &a) in alpha.iter().enumerate() {
                        self.x[self.basis[i]] -= step * a;
                    }
                    self.state[q] = if self.state[q] == State::Lower { State::Upper } else { State::Lower };
                    self.x[q] = if self.state[q] == State::Upper { self.upper[q] } else { 0.0 };
                    self.degenerate_run = 0;
                }
                Step::Pivot { pos, theta, to_upper } => {
                    self.pivot(q, dir, pos, theta, to_upper, &alpha);
                    if theta <= 1e-12 {
                        self.degenerate_run += 1;
                    } else {
                        self.degenerate_run = 0;
                    }
                }
            }
            since_refresh += 1;
            if since_refresh >= self.opts.refresh_every {
                self.refresh();
                since_refresh = 0;
            }
        }
    }

    fn pivot(&mut self, q: usize, dir: f64, r: usize, theta: f64, to_upper: bool, alpha: &[f64]) {
        let m = self.m;
        let leave = self.basis[r];
        let ar = alpha[r];

        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                self.x[self.basis[i]] -= dir * theta * a;
            }
        }
        self.x[q] += dir * theta;
        self.x[leave] = if to_upper { self.upper[leave] } else { 0.0 };

        // Reduced costs through the pivot row of B^-1.
        let rho: Vec<f64> = (0..m).map(|k| self.binv[k * m + r]).collect();
        let ratio = self.d[q] / ar;
        if ratio != 0.0 {
            for j in 0..self.x.len() {
                if self.state[j] == State::Basic || j == q {
                    continue;
                }
                let arj: f64 = self.col(j).map(|(i, v)| v * rho[i]).sum();
                if arj != 0.0 {
                    self.d[j] -= ratio * arj;
                }
            }
        }
        self.d[leave] = -ratio;
        self.d[q] = 0.0;

        // Rank-one update of the inverse, touching only rows where alpha is
        // nonzero.
        let nz: Vec<(usize, f64)> =
            alpha.iter().enumerate().filter(|&(i, &a)| i != r && a != 0.0).map(|(i, &a)| (i, a)).collect();
        for k in 0..m {
            let base = k * m;
            let t = self.binv[base + r];
            if t == 0.0 {
                continue;
            }
            let t = t / ar;
            let col = &mut self.binv[base..base + m];
            for &(i, a) in &nz {
                col[i] -= a * t;
            }
            col[r] = t;
        }

        self.state[leave] = if to_upper { State::Upper } else { State::Lower };
        self.state[q] = State::Basic;
        self.basis[r] = q;
    }
}
