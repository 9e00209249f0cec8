//! Conditioning of the factor `W`: how far each column is from the cone
//! (`kappa`) or convex hull (`alpha`) of the others, the smallest pairwise
//! distance (`omega`), the largest interior weight in `H` (`beta`), and the
//! margin between interior columns and the columns of `W`.

use crate::lp::{l1_fit, L1Fit};
use crate::matrix::{l1_dist, IndexSet};
use crate::{DenseMatrix, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub alpha: f64,
    pub kappa: f64,
    pub omega: f64,
    /// Minimizing coefficients for each column, cone version.
    pub kappa_witness: Vec<Vec<f64>>,
    /// Minimizing coefficients for each column, simplex version.
    pub alpha_witness: Vec<Vec<f64>>,
}

/// Fits every column of `w` on the remaining ones.
fn leave_one_out(w: &DenseMatrix, simplex: bool) -> Result<Vec<L1Fit>> {
    let r = w.cols();
    let fit = |k: usize| {
        let others: Vec<usize> = (0..r).filter(|&l| l != k).collect();
        l1_fit(w.col(k), &w.select_cols(&others), simplex)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..r).into_par_iter().map(fit).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..r).map(fit).collect()
    }
}

fn min_residual(fits: &[L1Fit]) -> f64 {
    fits.iter().map(|f| f.residual).fold(f64::INFINITY, f64::min)
}

/// Smallest l1 distance from a column of `w` to the cone of the others.
pub fn kappa(w: &DenseMatrix) -> Result<f64> {
    if w.cols() == 1 {
        return Ok(1.0);
    }
    Ok(min_residual(&leave_one_out(w, false)?))
}

/// Smallest l1 distance from a column of `w` to the convex hull of the others.
pub fn alpha(w: &DenseMatrix) -> Result<f64> {
    if w.cols() < 2 {
        return Err(Error::InvalidParam("alpha needs at least two columns".into()));
    }
    Ok(min_residual(&leave_one_out(w, true)?))
}

/// Smallest pairwise l1 distance between columns.
pub fn omega(w: &DenseMatrix) -> Result<f64> {
    let r = w.cols();
    if r < 2 {
        return Err(Error::InvalidParam("omega needs at least two columns".into()));
    }
    let mut best = f64::INFINITY;
    for i in 0..r {
        for j in i + 1..r {
            best = best.min(l1_dist(w.col(i), w.col(j)));
        }
    }
    Ok(best)
}

pub fn condition(w: &DenseMatrix) -> Result<ConditioningReport> {
    let kf = leave_one_out(w, false)?;
    let af = leave_one_out(w, true)?;
    Ok(ConditioningReport {
        alpha: min_residual(&af),
        kappa: min_residual(&kf),
        omega: omega(w)?,
        kappa_witness: kf.into_iter().map(|f| f.x).collect(),
        alpha_witness: af.into_iter().map(|f| f.x).collect(),
    })
}

fn check_anchor_block(h: &DenseMatrix, anchors: &IndexSet) -> Result<()> {
    let r = h.rows();
    if anchors.len() != r {
        return Err(Error::Shape(format!("{} anchors for {r} rows of H", anchors.len())));
    }
    for (k, &a) in anchors.iter().enumerate() {
        if a >= h.cols() || (0..r).any(|l| h[(l, a)] != if l == k { 1.0 } else { 0.0 }) {
            return Err(Error::InvalidParam(format!("column {a} of H is not unit vector e_{k}")));
        }
    }
    Ok(())
}

/// Largest entry of `H` outside the anchor columns; 0 if there are none.
pub fn beta_of_h(h: &DenseMatrix, anchors: &IndexSet) -> Result<f64> {
    check_anchor_block(h, anchors)?;
    let mut beta = 0.0f64;
    for j in (0..h.cols()).filter(|j| !anchors.contains(j)) {
        beta = h.col(j).iter().copied().fold(beta, f64::max);
    }
    Ok(beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Margin {
    Finite(f64),
    /// No column outside the anchor set.
    Infinite,
}

/// Smallest distance from a non-anchor column of `m` to any column of `w`.
pub fn margin(m: &DenseMatrix, w: &DenseMatrix, anchors: &IndexSet) -> Result<Margin> {
    if m.rows() != w.rows() {
        return Err(Error::Shape("M and W row counts differ".into()));
    }
    let mut best: Option<f64> = None;
    for j in (0..m.cols()).filter(|j| !anchors.contains(j)) {
        for k in 0..w.cols() {
            let d = l1_dist(m.col(j), w.col(k));
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    Ok(best.map_or(Margin::Infinite, Margin::Finite))
}
