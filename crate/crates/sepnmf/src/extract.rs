//! Turning an LP solution into anchor columns.

use crate::gen::SeparableInstance;
use crate::lp::l1_fit;
use crate::matrix::{col_distance_matrix, l1_operator_norm, IndexSet};
use crate::{DenseMatrix, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionResult {
    pub indices: IndexSet,
    /// `Mt(:, indices)`.
    pub wt: DenseMatrix,
    pub diag: Vec<f64>,
    pub nu_final: Option<f64>,
    pub loop_count: usize,
    pub h_fit: Option<DenseMatrix>,
    pub residual: Option<f64>,
    /// Set when the relaxed-threshold fallback produced the indices.
    pub fallback: bool,
    /// How many of the `r` columns could not be found.
    pub deficit: usize,
}

/// The serializable part of an [`ExtractionResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionManifest {
    pub method: String,
    pub indices: IndexSet,
    pub nu_final: Option<f64>,
    pub loop_count: usize,
    pub residual: Option<f64>,
    pub fallback: bool,
    pub deficit: usize,
    pub diag: Vec<f64>,
}

impl ExtractionResult {
    fn new(mt: &DenseMatrix, indices: IndexSet, diag: Vec<f64>) -> Self {
        ExtractionResult {
            wt: mt.select_cols(&indices),
            indices,
            diag,
            nu_final: None,
            loop_count: 0,
            h_fit: None,
            residual: None,
            fallback: false,
            deficit: 0,
        }
    }

    /// Fits `H` by l1 regression onto the extracted columns.
    pub fn with_fit(mut self, mt: &DenseMatrix) -> Result<Self> {
        let (h, res) = fit_h(mt, &self.wt)?;
        self.h_fit = Some(h);
        self.residual = Some(res);
        Ok(self)
    }

    pub fn manifest(&self, method: &str) -> ExtractionManifest {
        ExtractionManifest {
            method: method.to_string(),
            indices: self.indices.clone(),
            nu_final: self.nu_final,
            loop_count: self.loop_count,
            residual: self.residual,
            fallback: self.fallback,
            deficit: self.deficit,
            diag: self.diag.clone(),
        }
    }
}

/// Indices of the `r` largest diagonal entries, largest first; ties go to the
/// lower index.
pub fn top_r_diag(x: &DenseMatrix, r: usize) -> Result<IndexSet> {
    if x.rows() != x.cols() {
        return Err(Error::Shape("X must be square".into()));
    }
    let n = x.cols();
    if r > n {
        return Err(Error::InvalidParam(format!("r = {r} exceeds n = {n}")));
    }
    let d = x.diag();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    idx.truncate(r);
    Ok(idx)
}

/// Plain Hottopixx: the columns with the `r` largest diagonal entries.
pub fn hottopixx_extract(mt: &DenseMatrix, x: &DenseMatrix, r: usize) -> Result<ExtractionResult> {
    let idx = top_r_diag(x, r)?;
    Ok(ExtractionResult::new(mt, idx, x.diag()))
}

/// Column-by-column `min_{Y >= 0} ||Mt - Wt Y||_1`. The residual is the
/// largest column residual.
pub fn fit_h(mt: &DenseMatrix, wt: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    if mt.rows() != wt.rows() {
        return Err(Error::Shape(format!("Mt has {} rows, Wt has {}", mt.rows(), wt.rows())));
    }
    let solve = |j: usize| {
        l1_fit(mt.col(j), wt, false).map_err(|e| match e {
            Error::Lp(status) => Error::LpColumn { col: j, status },
            other => other,
        })
    };
    #[cfg(feature = "parallel")]
    let fits: Vec<_> = {
        use rayon::prelude::*;
        (0..mt.cols()).into_par_iter().map(solve).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<_> = (0..mt.cols()).map(solve).collect::<Result<_>>()?;

    let mut h = DenseMatrix::zeros(wt.cols(), mt.cols());
    let mut worst = 0.0f64;
    for (j, f) in fits.into_iter().enumerate() {
        h.col_mut(j).copy_from_slice(&f.x);
        worst = worst.max(f.residual);
    }
    Ok((h, worst))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterParams {
    /// Merge radius.
    pub nu: f64,
    /// Accept clusters of any positive weight instead of weight > r/(r+1).
    pub relax_threshold: bool,
}

/// Greedy weighted clustering of the columns behind `d`.
///
/// Every point `i` collects the weight of its `nu`-ball; the heaviest ball is
/// taken as a centroid while its weight exceeds `r/(r+1)`, and its members'
/// weight is removed from every overlapping ball. At most `r` centroids.
pub fn cluster_extract(d: &DenseMatrix, x: &[f64], r: usize, params: ClusterParams) -> IndexSet {
    let n = x.len();
    let balls: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| d[(i, j)] <= params.nu).collect()).collect();
    let mut member = vec![vec![false; n]; n];
    for (i, b) in balls.iter().enumerate() {
        for &j in b {
            member[i][j] = true;
        }
    }
    let mut w: Vec<f64> = balls.iter().map(|b| b.iter().map(|&j| x[j]).sum()).collect();
    let threshold = if params.relax_threshold { 0.0 } else { r as f64 / (r as f64 + 1.0) };
    let mut picked = vec![];
    while picked.len() < r {
        let (k, wk) = w.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if n == 0 || wk <= threshold {
            break;
        }
        picked.push(k);
        for &j in &balls[k] {
            w[j] = 0.0;
        }
        for i in 0..n {
            if !member[k][i] {
                for &j in &balls[k] {
                    if member[i][j] {
                        w[i] -= x[j];
                    }
                }
            }
        }
    }
    picked
}

/// Hottopixx with clustering post-processing.
///
/// Starts from the diagonal entries above `r/(r+1)`; while fewer than `r`
/// are found, clusters the diagonal weights at radius `nu = 2 eps`, doubling
/// `nu` each round up to `2 ||Mt||_1`. If that never yields `r` centroids,
/// the weight threshold is relaxed and the smallest radius tried that yields
/// `r` centroids is used; failing that, the largest set found is returned
/// and the shortfall is recorded in `deficit`.
pub fn postprocessed_extract(mt: &DenseMatrix, x: &DenseMatrix, r: usize, eps: f64) -> Result<ExtractionResult> {
    if x.rows() != x.cols() || x.cols() != mt.cols() {
        return Err(Error::Shape("X must be n x n with n = columns of Mt".into()));
    }
    let diag = x.diag();
    let cut = r as f64 / (r as f64 + 1.0);
    let mut k: IndexSet = top_r_diag(x, r)?.into_iter().filter(|&i| diag[i] > cut).collect();
    if k.len() >= r {
        return Ok(ExtractionResult::new(mt, k, diag));
    }

    let d = col_distance_matrix(mt);
    let limit = 2.0 * l1_operator_norm(mt);
    let mut nu = (2.0 * eps).max(1e-12);
    let mut tried = vec![];
    let mut best = k.clone();
    let mut best_nu = None;
    let mut loops = 0;
    while k.len() < r && nu <= limit {
        k = cluster_extract(&d, &diag, r, ClusterParams { nu, relax_threshold: false });
        tried.push(nu);
        loops += 1;
        if k.len() > best.len() {
            best = k.clone();
            best_nu = Some(nu);
        }
        if k.len() < r {
            nu *= 2.0;
        }
    }
    if k.len() >= r {
        let mut out = ExtractionResult::new(mt, k, diag);
        out.nu_final = Some(nu);
        out.loop_count = loops;
        return Ok(out);
    }

    let mut fallback: Option<(IndexSet, f64)> = None;
    for &nu in &tried {
        let kr = cluster_extract(&d, &diag, r, ClusterParams { nu, relax_threshold: true });
        if fallback.as_ref().is_none_or(|(f, _)| kr.len() > f.len()) {
            let done = kr.len() >= r;
            fallback = Some((kr, nu));
            if done {
                break;
            }
        }
    }
    let (indices, nu_final) = match fallback {
        Some((f, nu)) if f.len() >= best.len() => (f, Some(nu)),
        _ => (best, best_nu),
    };
    let mut out = ExtractionResult::new(mt, indices, diag);
    out.deficit = r - out.indices.len();
    out.nu_final = nu_final;
    out.loop_count = loops;
    out.fallback = true;
    Ok(out)
}

/// Fraction of anchor groups hit by `indices`.
pub fn recovery_of(indices: &[usize], groups: &[IndexSet]) -> f64 {
    if groups.is_empty() {
        return 1.0;
    }
    let hit = groups.iter().filter(|g| g.iter().any(|j| indices.contains(j))).count();
    hit as f64 / groups.len() as f64
}

pub fn recovery_rate(result: &ExtractionResult, inst: &SeparableInstance) -> f64 {
    recovery_of(&result.indices, &inst.anchor_groups)
}
