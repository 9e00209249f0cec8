use super::{solve_lp, LpOptions, LpProblem, LpStatus};
use crate::{DenseMatrix, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct L1Fit {
    pub x: Vec<f64>,
    pub residual: f64,
}

/// `min_{x >= 0} ||target - basis x||_1`, optionally with `sum(x) = 1`.
///
/// One LP with `basis.cols() + m` variables: the coefficients followed by the
/// absolute residuals.
pub fn l1_fit(target: &[f64], basis: &DenseMatrix, simplex: bool) -> Result<L1Fit> {
    let m = target.len();
    let k = basis.cols();
    if basis.rows() != m {
        return Err(Error::Shape(format!("target has {m} rows, basis has {}", basis.rows())));
    }
    if simplex && k == 0 {
        return Err(Error::InvalidParam("simplex-constrained fit needs at least one column".into()));
    }
    let mut p = LpProblem::new(k + m);
    for i in 0..m {
        p.c[k + i] = 1.0;
        let mut row: Vec<(usize, f64)> = (0..k).filter(|&c| basis[(i, c)] != 0.0).map(|c| (c, basis[(i, c)])).collect();
        let k_nz = row.len();
        row.push((k + i, -1.0));
        p.add_le(row.clone(), target[i]);
        for e in row.iter_mut().take(k_nz) {
            e.1 = -e.1;
        }
        p.add_le(row, -target[i]);
    }
    if simplex {
        p.add_eq((0..k).map(|c| (c, 1.0)).collect(), 1.0);
    }
    let sol = solve_lp(&p, &LpOptions::default())?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(sol.status));
    }
    let x: Vec<f64> = sol.x[..k].iter().map(|v| v.max(0.0)).collect();
    let residual = (0..m)
        .map(|i| (target[i] - (0..k).map(|c| basis[(i, c)] * x[c]).sum::<f64>()).abs())
        .sum();
    Ok(L1Fit { x, residual })
}
