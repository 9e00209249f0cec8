//! Column-major dense matrices, l1 norms, column distances and the
//! permutation-matched error between two sets of columns.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordered list of distinct column indices.
pub type IndexSet = Vec<usize>;

/// Columns with l1 norm below this are treated as zero.
pub const ZERO_COL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from column-major data.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("matrix entries must be finite".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds from a list of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("matrix entries must be finite".into()));
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn select_cols(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        DenseMatrix { rows: self.rows, cols: idx.len(), data }
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in oc.iter().enumerate() {
                if b != 0.0 {
                    for (d, &a) in dst.iter_mut().zip(self.col(k)) {
                        *d += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    /// Horizontal concatenation.
    pub fn hcat(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::Shape("hcat needs equal row counts".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DenseMatrix { rows: self.rows, cols: self.cols + other.cols, data })
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn col_l1(&self, j: usize) -> f64 {
        self.col(j).iter().map(|v| v.abs()).sum()
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Scales every column to unit sum, dropping (near-)zero columns.
pub fn normalize_columns(a: &DenseMatrix) -> Result<(DenseMatrix, IndexSet)> {
    let kept: IndexSet = (0..a.cols()).filter(|&j| a.col_l1(j) >= ZERO_COL_TOL).collect();
    if kept.is_empty() {
        return Err(Error::AllZeroColumns);
    }
    let mut out = a.select_cols(&kept);
    for j in 0..out.cols() {
        let s: f64 = out.col(j).iter().sum();
        out.col_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    Ok((out, kept))
}

/// Induced l1 norm: the largest column l1 norm.
pub fn l1_operator_norm(a: &DenseMatrix) -> f64 {
    (0..a.cols()).map(|j| a.col_l1(j)).fold(0.0, f64::max)
}

/// Pairwise l1 distances between columns.
pub fn col_distance_matrix(a: &DenseMatrix) -> DenseMatrix {
    let n = a.cols();
    let mut d = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = l1_dist(a.col(i), a.col(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Bottleneck assignment between the columns of `w` and `wt`.
///
/// Returns `min_P max_k ||w(:,k) - wt(:,P(k))||_1` and the minimizing `P`
/// (`perm[k]` is the column of `wt` matched to column `k` of `w`).
pub fn perm_matched_error(w: &DenseMatrix, wt: &DenseMatrix) -> Result<(f64, Vec<usize>)> {
    if w.rows() != wt.rows() || w.cols() != wt.cols() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            w.rows(),
            w.cols(),
            wt.rows(),
            wt.cols()
        )));
    }
    let r = w.cols();
    let d: Vec<Vec<f64>> = (0..r).map(|k| (0..r).map(|l| l1_dist(w.col(k), wt.col(l))).collect()).collect();
    Ok(if r <= 8 { bottleneck_brute(&d) } else { bottleneck_matching(&d) })
}

/// Exhaustive search in lexicographic order; the first optimum wins.
pub fn bottleneck_brute(d: &[Vec<f64>]) -> (f64, Vec<usize>) {
    fn rec(d: &[Vec<f64>], k: usize, used: &mut [bool], cur: &mut Vec<usize>, worst: f64, best: &mut (f64, Vec<usize>)) {
        if worst >= best.0 {
            return;
        }
        if k == d.len() {
            *best = (worst, cur.clone());
            return;
        }
        for l in 0..d.len() {
            if !used[l] {
                used[l] = true;
                cur.push(l);
                rec(d, k + 1, used, cur, worst.max(d[k][l]), best);
                cur.pop();
                used[l] = false;
            }
        }
    }
    let r = d.len();
    let mut best = (f64::INFINITY, (0..r).collect());
    if r == 0 {
        return (0.0, vec![]);
    }
    rec(d, 0, &mut vec![false; r], &mut Vec::with_capacity(r), f64::NEG_INFINITY, &mut best);
    best
}

/// Binary search over the distinct distances with a perfect-matching test.
pub fn bottleneck_matching(d: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let r = d.len();
    if r == 0 {
        return (0.0, vec![]);
    }
    let mut vals: Vec<f64> = d.iter().flatten().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals.dedup();
    let (mut lo, mut hi) = (0, vals.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(d, vals[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let perm = perfect_matching(d, vals[lo]).expect("largest threshold always admits a matching");
    (vals[lo], perm)
}

/// Kuhn's augmenting-path matching on edges with `d[k][l] <= t`.
fn perfect_matching(d: &[Vec<f64>], t: f64) -> Option<Vec<usize>> {
    fn augment(d: &[Vec<f64>], t: f64, k: usize, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for l in 0..d.len() {
            if d[k][l] <= t && !seen[l] {
                seen[l] = true;
                if owner[l].is_none_or(|o| augment(d, t, o, seen, owner)) {
                    owner[l] = Some(k);
                    return true;
                }
            }
        }
        false
    }
    let r = d.len();
    let mut owner = vec![None; r];
    for k in 0..r {
        if !augment(d, t, k, &mut vec![false; r], &mut owner) {
            return None;
        }
    }
    let mut perm = vec![0; r];
    for (l, o) in owner.iter().enumerate() {
        perm[o.unwrap()] = l;
    }
    Some(perm)
}
