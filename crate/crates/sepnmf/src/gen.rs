//! Seeded instance generators: a random family for property tests and the
//! hand-built adversarial constructions on which Hottopixx fails or is tight.

use crate::cond::kappa;
use crate::hottopixx::{all_distinct, default_p};
use crate::matrix::{l1_operator_norm, IndexSet};
use crate::{DenseMatrix, Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How the LP objective weights are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSpec {
    Explicit(Vec<f64>),
    Random { seed: u64 },
}

/// A noisy separable matrix together with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableInstance {
    pub family: String,
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub noise: DenseMatrix,
    pub mt: DenseMatrix,
    pub eps: f64,
    pub r: usize,
    /// Columns of `mt` whose clean column is `w(:,k)`, one group per `k`.
    pub anchor_groups: Vec<IndexSet>,
    pub p: PSpec,
    /// `permutation[j]` is the construction-order index of column `j`.
    pub permutation: Vec<usize>,
    pub params: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl SeparableInstance {
    fn assemble(
        family: &str,
        w: DenseMatrix,
        h: DenseMatrix,
        noise: DenseMatrix,
        eps: f64,
        p: PSpec,
        params: &[(&str, f64)],
    ) -> Result<Self> {
        let mt = w.matmul(&h)?.add(&noise)?;
        let r = w.cols();
        let n = h.cols();
        let anchor_groups = (0..r)
            .map(|k| (0..n).filter(|&j| (0..r).all(|l| h[(l, j)] == if l == k { 1.0 } else { 0.0 })).collect())
            .collect();
        Ok(SeparableInstance {
            family: family.to_string(),
            w,
            h,
            noise,
            mt,
            eps,
            r,
            anchor_groups,
            p,
            permutation: (0..n).collect(),
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            notes: vec![],
        })
    }

    pub fn n(&self) -> usize {
        self.mt.cols()
    }

    /// The noiseless data `W H`.
    pub fn m_clean(&self) -> DenseMatrix {
        self.w.matmul(&self.h).expect("W and H are conformable by construction")
    }

    pub fn p_vector(&self) -> Vec<f64> {
        match &self.p {
            PSpec::Explicit(p) => p.clone(),
            PSpec::Random { seed } => default_p(self.n(), *seed),
        }
    }

    /// One representative column per anchor group (the lowest index).
    pub fn anchors(&self) -> IndexSet {
        self.anchor_groups.iter().map(|g| g[0]).collect()
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    /// Reorders columns: new column `j` is old column `perm[j]`.
    pub fn permute(&mut self, perm: &[usize]) {
        self.h = self.h.select_cols(perm);
        self.noise = self.noise.select_cols(perm);
        self.mt = self.mt.select_cols(perm);
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        for g in &mut self.anchor_groups {
            for j in g.iter_mut() {
                *j = inv[*j];
            }
            g.sort_unstable();
        }
        if let PSpec::Explicit(p) = &mut self.p {
            *p = perm.iter().map(|&j| p[j]).collect();
        }
        self.permutation = perm.iter().map(|&j| self.permutation[j]).collect();
    }

    /// Lists every broken invariant; empty means the instance is consistent.
    pub fn check(&self) -> Vec<String> {
        let mut bad = vec![];
        let (m, n, r) = (self.mt.rows(), self.n(), self.r);
        if self.w.rows() != m || self.w.cols() != r || self.h.rows() != r || self.h.cols() != n {
            bad.push("shape mismatch between W, H and Mt".to_string());
            return bad;
        }
        let rebuilt = self.m_clean().add(&self.noise).expect("shapes checked");
        let gap = rebuilt.max_abs_diff(&self.mt);
        if gap > 1e-12 {
            bad.push(format!("Mt differs from WH + N by {gap:e}"));
        }
        let nn = l1_operator_norm(&self.noise);
        if nn > self.eps + 1e-12 {
            bad.push(format!("||N||_1 = {nn} exceeds eps = {}", self.eps));
        }
        let clean = self.m_clean();
        for j in 0..n {
            let s: f64 = clean.col(j).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                bad.push(format!("clean column {j} sums to {s}"));
            }
            let s: f64 = self.h.col(j).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                bad.push(format!("H column {j} sums to {s}"));
            }
        }
        let mut seen = vec![false; n];
        if self.anchor_groups.len() != r {
            bad.push(format!("{} anchor groups for r = {r}", self.anchor_groups.len()));
        }
        for (k, g) in self.anchor_groups.iter().enumerate() {
            if g.is_empty() {
                bad.push(format!("anchor group {k} is empty"));
            }
            for &j in g {
                if j >= n || seen[j] {
                    bad.push(format!("anchor column {j} out of range or shared"));
                    continue;
                }
                seen[j] = true;
                if (0..r).any(|l| self.h[(l, j)] != if l == k { 1.0 } else { 0.0 }) {
                    bad.push(format!("column {j} of H is not e_{k}"));
                }
            }
        }
        bad
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normalize_cols(a: &mut DenseMatrix) {
    for j in 0..a.cols() {
        let s: f64 = a.col(j).iter().sum();
        a.col_mut(j).iter_mut().for_each(|v| *v /= s);
    }
}

const KAPPA_FLOOR: f64 = 0.05;
const KAPPA_TRIES: usize = 100;

/// Random separable instance: uniform `W` with `kappa(W) >= 0.05`, `H = [I, H']`
/// with `H'` uniform on the simplex, every noise column of l1 norm exactly
/// `eps`, and a random column permutation.
///
/// The noise directions are drawn even when `eps = 0`, so a given seed yields
/// the same `W`, `H` and permutation for every `eps`.
pub fn gen_generic(m: usize, r: usize, n: usize, eps: f64, seed: u64) -> Result<SeparableInstance> {
    if r == 0 || r > m || r > n {
        return Err(Error::InvalidParam(format!("need 1 <= r <= min(m, n), got m={m} r={r} n={n}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParam("eps must be nonnegative".into()));
    }
    let mut g = rng(seed);
    let mut w = None;
    for _ in 0..KAPPA_TRIES {
        let mut cand = DenseMatrix::from_fn(m, r, |_, _| g.random::<f64>());
        normalize_cols(&mut cand);
        if kappa(&cand)? >= KAPPA_FLOOR {
            w = Some(cand);
            break;
        }
    }
    let w = w.ok_or(Error::KappaFloor { floor: KAPPA_FLOOR, tries: KAPPA_TRIES })?;
    let mut h = DenseMatrix::zeros(r, n);
    for k in 0..r {
        h[(k, k)] = 1.0;
    }
    for j in r..n {
        let e: Vec<f64> = (0..r).map(|_| Exp1.sample(&mut g)).collect();
        let s: f64 = e.iter().sum();
        for k in 0..r {
            h[(k, j)] = e[k] / s;
        }
    }
    let mut noise = DenseMatrix::from_fn(m, n, |_, _| g.random_range(-1.0..=1.0));
    for j in 0..n {
        let s: f64 = noise.col_l1(j);
        noise.col_mut(j).iter_mut().for_each(|v| *v *= if s > 0.0 { eps / s } else { 0.0 });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut g);
    let p_seed = g.random::<u64>();
    let mut inst = SeparableInstance::assemble(
        "generic",
        w,
        h,
        noise,
        eps,
        PSpec::Random { seed: p_seed },
        &[("m", m as f64), ("n", n as f64), ("seed", seed as f64)],
    )?;
    inst.permute(&perm);
    Ok(inst)
}

/// `r` distinct conical columns whose noisy versions all coincide.
pub fn gen_necessity(r: usize, alpha: f64) -> Result<SeparableInstance> {
    if r < 2 || !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParam(format!("need r >= 2 and 0 < alpha <= 2, got r={r} alpha={alpha}")));
    }
    let w = conical_w(r, alpha, 0);
    let noise = DenseMatrix::from_fn(r + 1, r, |i, j| if i == j { -alpha / 2.0 } else { 0.0 });
    SeparableInstance::assemble(
        "necessity",
        w,
        DenseMatrix::identity(r),
        noise,
        alpha / 2.0,
        PSpec::Random { seed: 0 },
        &[("alpha", alpha)],
    )
}

/// `[c/2 I_r; (1 - c/2) e'; 0_{pad x r}]`.
fn conical_w(r: usize, c: f64, pad: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r + 1 + pad, r, |i, j| {
        if i < r {
            if i == j { c / 2.0 } else { 0.0 }
        } else if i == r {
            1.0 - c / 2.0
        } else {
            0.0
        }
    })
}

fn lbdelta_w(alpha: f64) -> DenseMatrix {
    let t = 0.5 - alpha / 4.0;
    DenseMatrix::from_rows(&[vec![1.0, 0.0, t], vec![0.0, 1.0, t], vec![0.0, 0.0, alpha / 2.0]]).expect("3x3")
}

/// Three anchors and two interior columns placed so that Hottopixx picks an
/// interior column instead of the third anchor.
///
/// `lambda = 1 - 3 eps/alpha`, or `1 - eps/alpha` with `midpoint`, in which
/// case the noisy third column is exactly the midpoint of the interior ones.
pub fn gen_lbdelta(alpha: f64, eps: f64, k: f64, midpoint: bool) -> Result<SeparableInstance> {
    let hi = if midpoint { alpha / 2.0 } else { alpha / 3.0 };
    let ok = alpha > 0.0 && alpha <= 2.0 && eps >= 0.0 && if midpoint { eps < hi } else { eps <= hi };
    if !ok {
        return Err(Error::InvalidParam(format!("eps = {eps} outside the window for alpha = {alpha}")));
    }
    let lambda = if midpoint { 1.0 - eps / alpha } else { 1.0 - 3.0 * eps / alpha };
    let h = DenseMatrix::from_rows(&[
        vec![1.0, 0.0, 0.0, 1.0 - lambda, 0.0],
        vec![0.0, 1.0, 0.0, 0.0, 1.0 - lambda],
        vec![0.0, 0.0, 1.0, lambda, lambda],
    ])?;
    let mut noise = DenseMatrix::zeros(3, 5);
    noise.col_mut(2).copy_from_slice(&[eps / 4.0, eps / 4.0, -eps / 2.0]);
    SeparableInstance::assemble(
        "lbdelta",
        lbdelta_w(alpha),
        h,
        noise,
        eps,
        PSpec::Explicit(vec![-k, -k, k * k, -1.0, 0.0]),
        &[("alpha", alpha), ("lambda", lambda), ("K", k), ("midpoint", if midpoint { 1.0 } else { 0.0 })],
    )
}

/// Feasible point for the lbdelta model with `mu = (1 - lambda)/(2 - lambda)`.
pub fn lbdelta_witness(inst: &SeparableInstance) -> DenseMatrix {
    let lambda = inst.param("lambda").expect("lbdelta instance");
    let mu = (1.0 - lambda) / (2.0 - lambda);
    DenseMatrix::from_rows(&[
        vec![1.0, 0.0, 0.0, mu, 0.0],
        vec![0.0, 1.0, 0.0, 0.0, mu],
        vec![0.0; 5],
        vec![0.0, 0.0, 0.5, 0.5, 0.5 - mu],
        vec![0.0, 0.0, 0.5, 0.5 - mu, 0.5],
    ])
    .expect("5x5")
}

/// The same noisy matrix written as 3-separable and as 4-separable data.
#[derive(Clone, Debug)]
pub struct Ambiguity {
    pub inst3: SeparableInstance,
    pub inst4: SeparableInstance,
    /// `[M, c W e; 0, c]` with `c = 1 - alpha/eps`.
    pub padded3: DenseMatrix,
    /// `[M4, c W4 e; 0, c]`.
    pub padded4: DenseMatrix,
}

pub fn gen_ambiguity(alpha: f64, eps: f64) -> Result<Ambiguity> {
    let mut inst3 = gen_lbdelta(alpha, eps, 1.0, true)?;
    inst3.family = "ambiguity".into();
    inst3.p = PSpec::Random { seed: 0 };
    let m = inst3.m_clean();
    let v = [eps / 4.0, eps / 4.0, -eps / 2.0];
    let w4 = DenseMatrix::from_fn(3, 4, |i, k| match k {
        0 | 1 => m[(i, k)],
        _ => m[(i, k + 1)] - v[i],
    });
    let h4 = DenseMatrix::from_rows(&[
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.5, 1.0, 0.0],
        vec![0.0, 0.0, 0.5, 0.0, 1.0],
    ])?;
    let n4 = DenseMatrix::from_fn(3, 5, |i, j| if j >= 2 { v[i] } else { 0.0 });
    let mut inst4 = SeparableInstance::assemble(
        "ambiguity4",
        w4.clone(),
        h4,
        n4,
        eps,
        PSpec::Random { seed: 0 },
        &[("alpha", alpha)],
    )?;
    // The 4-separable form reproduces the 3-separable one only up to
    // rounding; both sides must present identical data.
    let gap = inst4.mt.max_abs_diff(&inst3.mt);
    if gap > 1e-12 {
        return Err(Error::InvalidParam(format!("3- and 4-separable forms differ by {gap:e}")));
    }
    inst4.noise = inst3.mt.sub(&inst4.m_clean())?;
    inst4.mt = inst3.mt.clone();
    let c = 1.0 - alpha / eps;
    let pad = |base: &DenseMatrix, w: &DenseMatrix| {
        let (rows, cols) = (base.rows(), base.cols());
        DenseMatrix::from_fn(rows + 1, cols + 1, |i, j| match (i < rows, j < cols) {
            (true, true) => base[(i, j)],
            (true, false) => c * w.row(i).iter().sum::<f64>(),
            (false, true) => 0.0,
            (false, false) => c,
        })
    };
    let padded3 = pad(&m, &inst3.w);
    let padded4 = pad(&inst4.m_clean(), &w4);
    Ok(Ambiguity { inst3, inst4, padded3, padded4 })
}

/// Largest noise level at which Hottopixx can still fail on the nc1 family.
pub fn nc1_bound(r: usize, kappa: f64, beta: f64) -> f64 {
    kappa * (1.0 - beta) / ((r as f64 - 1.0) * (1.0 - beta) + 1.0)
}

/// Noiseless conical instance where every interior column leans towards one
/// anchor with weight `beta`; at `eps_scale = 1` it sits on the bound where
/// Hottopixx selects an interior column.
pub fn gen_nc1(r: usize, kappa: f64, beta: f64, eps_scale: f64, k: f64) -> Result<SeparableInstance> {
    let rf = r as f64;
    if r < 3 || !(beta > 1.0 / rf && beta < 1.0) || !(eps_scale > 0.0 && eps_scale <= 1.0) || !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidParam(format!("r={r} kappa={kappa} beta={beta} eps_scale={eps_scale} outside the window")));
    }
    let eps = eps_scale * nc1_bound(r, kappa, beta);
    let n = 2 * r;
    let h = DenseMatrix::from_fn(r, n, |i, j| {
        if j < r {
            if i == j { 1.0 } else { 0.0 }
        } else if i == j - r {
            beta
        } else {
            (1.0 - beta) / (rf - 1.0)
        }
    });
    let mut p: Vec<f64> = (1..r).map(|i| i as f64).collect();
    p.push(-k);
    p.extend((1..r).map(|i| -(i as f64)));
    p.push(-k * k);
    let omega = eps / (kappa * (1.0 - beta));
    SeparableInstance::assemble(
        "nc1",
        conical_w(r, kappa, 0),
        h,
        DenseMatrix::zeros(r + 1, n),
        eps,
        PSpec::Explicit(p),
        &[("kappa", kappa), ("beta", beta), ("eps_scale", eps_scale), ("K", k), ("omega", omega), ("delta", (2.0 - beta) * omega)],
    )
}

/// The hand-built feasible point for the nc1 family, entry by entry.
pub fn nc1_witness(inst: &SeparableInstance) -> DenseMatrix {
    let (r, beta) = (inst.r, inst.param("beta").expect("nc1 instance"));
    let (om, de) = (inst.param("omega").unwrap(), inst.param("delta").unwrap());
    let n = 2 * r;
    let rf = r as f64;
    let g = ((1.0 - om) / (1.0 - de) - beta) / (rf - 1.0);
    let mut x = DenseMatrix::zeros(n, n);
    for i in 0..r - 1 {
        for j in 0..r - 1 {
            x[(i, j)] = if i == j { 1.0 - de } else { (de - om) / (rf - 1.0) };
            x[(i, r + j)] = (1.0 - de) * if i == j { beta } else { g };
        }
        x[(r - 1, i)] = (de - om) / (rf - 1.0);
        x[(r - 1, r + i)] = (1.0 - de) * g;
        x[(r + i, i)] = om;
        x[(r + i, r + i)] = om;
    }
    x[(r - 1, r - 1)] = 1.0;
    x[(n - 1, n - 1)] = 1.0;
    x
}

/// Validity window of the th7 family: `(kappa/(r-1)^2, kappa/(2(r-1))]`.
pub fn th7_window(r: usize, kappa: f64) -> (f64, f64) {
    let rm = r as f64 - 1.0;
    (kappa / (rm * rm), kappa / (2.0 * rm))
}

/// Instance on which Hottopixx never extracts `W(:, r)`.
///
/// `W = [kappa/2 I_r; (1 - kappa/2) e'; 0_{r x r}]`. Columns `r..2r-2` are
/// mixtures `lambda W(:,i) + (1 - lambda) W(:,r)` with `lambda = 2 eps/kappa`
/// and the last column is the average of the first `r - 1` anchors. The noise
/// adds `eps` in row `r + 1` of the first `r - 1` columns and of the last
/// column, and a zero-row-sum block `Z` below the interior columns.
pub fn gen_th7(r: usize, kappa: f64, eps: f64, k: f64) -> Result<SeparableInstance> {
    let (lo, hi) = th7_window(r, kappa);
    if r < 3 || !(eps > lo && eps <= hi) {
        return Err(Error::InvalidParam(format!("eps = {eps} outside ({lo}, {hi}] for r = {r}")));
    }
    th7_unchecked(r, kappa, eps, k)
}

/// The th7 construction on the wider range `0 <= eps <= kappa/(2(r-1))`,
/// where it is still a valid separable instance but the failure argument no
/// longer applies. Used to probe the small-noise regime.
pub fn gen_th7_relaxed(r: usize, kappa: f64, eps: f64, k: f64) -> Result<SeparableInstance> {
    let (_, hi) = th7_window(r, kappa);
    if r < 3 || !(eps >= 0.0 && eps <= hi) {
        return Err(Error::InvalidParam(format!("eps = {eps} outside [0, {hi}] for r = {r}")));
    }
    th7_unchecked(r, kappa, eps, k)
}

fn th7_unchecked(r: usize, kappa: f64, eps: f64, k: f64) -> Result<SeparableInstance> {
    let rf = r as f64;
    let lambda = 2.0 * eps / kappa;
    let n = 2 * r;
    let m = 2 * r + 1;
    let mut h = DenseMatrix::zeros(r, n);
    for i in 0..r {
        h[(i, i)] = 1.0;
    }
    for i in 0..r - 1 {
        h[(i, r + i)] = lambda;
        h[(r - 1, r + i)] = 1.0 - lambda;
        h[(i, n - 1)] = 1.0 / (rf - 1.0);
    }
    let mut noise = DenseMatrix::zeros(m, n);
    for j in 0..r - 1 {
        noise[(r + 1, j)] = eps;
    }
    noise[(r + 1, n - 1)] = eps;
    let x = eps / (rf - 1.0);
    let y = -x / (rf - 2.0);
    for a in 0..r - 1 {
        for b in 0..r - 1 {
            noise[(r + 2 + a, r + b)] = if a == b { x } else { y };
        }
    }
    let mut p: Vec<f64> = (1..r).map(|i| i as f64).collect();
    p.push(k.powi(3));
    p.extend((0..r - 1).map(|i| k * k + i as f64));
    p.push(-k);
    SeparableInstance::assemble(
        "th7",
        conical_w(r, kappa, r),
        h,
        noise,
        eps,
        PSpec::Explicit(p),
        &[("kappa", kappa), ("lambda", lambda), ("K", k)],
    )
}

/// The th7 feasible point exactly as displayed with the construction.
pub fn th7_witness_literal(inst: &SeparableInstance) -> DenseMatrix {
    th7_witness(inst, false)
}

/// The th7 feasible point with its two block typos repaired: the
/// first-block entries of the last column are divided by `r - 1`, and the
/// first-block rows carry no weight on the interior columns.
pub fn th7_witness_corrected(inst: &SeparableInstance) -> DenseMatrix {
    th7_witness(inst, true)
}

fn th7_witness(inst: &SeparableInstance, corrected: bool) -> DenseMatrix {
    let r = inst.r;
    let rf = r as f64;
    let (kappa, lambda) = (inst.param("kappa").unwrap(), inst.param("lambda").unwrap());
    let eps = inst.eps;
    let n = 2 * r;
    let mut x = DenseMatrix::zeros(n, n);
    for i in 0..r - 1 {
        x[(i, i)] = 1.0 - lambda;
        if !corrected {
            x[(i, r + i)] = lambda * (rf - 2.0) / (rf - 1.0);
        }
        let last = 1.0 - 2.0 * eps * (rf - 1.0) / kappa;
        x[(i, n - 1)] = if corrected { last / (rf - 1.0) } else { last };
        x[(r + i, r - 1)] = 1.0 / (rf - 1.0);
        for j in 0..r - 1 {
            x[(r + i, r + j)] = 1.0 / (rf - 1.0);
        }
        x[(n - 1, i)] = lambda;
    }
    x[(n - 1, n - 1)] = (rf - 1.0) * lambda;
    x
}

/// Appends two exact copies of every anchor column, shuffles all columns,
/// and perturbs the duplicated objective weights with N(0, 0.1^2) noise.
///
/// The base weights are the instance's explicit `p`, or `1..n` when it has
/// none.
pub fn apply_experiment5(inst: &SeparableInstance, seed: u64) -> Result<SeparableInstance> {
    let base_p = match &inst.p {
        PSpec::Explicit(p) => p.clone(),
        PSpec::Random { .. } => (1..=inst.n()).map(|i| i as f64).collect(),
    };
    let anchors = inst.anchors();
    let mut cols: Vec<usize> = (0..inst.n()).collect();
    cols.extend(&anchors);
    cols.extend(&anchors);
    let mut out = inst.clone();
    out.h = inst.h.select_cols(&cols);
    out.noise = inst.noise.select_cols(&cols);
    out.mt = inst.mt.select_cols(&cols);
    out.permutation = cols.iter().map(|&j| inst.permutation[j]).collect();
    let n0 = inst.n();
    for (k, g) in out.anchor_groups.iter_mut().enumerate() {
        g.push(n0 + k);
        g.push(n0 + inst.r + k);
    }
    let p_dup: Vec<f64> = cols.iter().map(|&j| base_p[j]).collect();
    out.p = PSpec::Explicit(p_dup);

    let mut g = rng(seed);
    let mut perm: Vec<usize> = (0..cols.len()).collect();
    perm.shuffle(&mut g);
    out.permute(&perm);
    let PSpec::Explicit(shuffled) = out.p.clone() else { unreachable!() };
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let p = loop {
        let cand: Vec<f64> = shuffled.iter().map(|v| v + normal.sample(&mut g)).collect();
        if all_distinct(&cand, 1e-12) {
            break cand;
        }
    };
    out.p = PSpec::Explicit(p);
    out.family = format!("{}+experiment5", inst.family);
    out.params.insert("experiment5_seed".into(), seed as f64);
    if matches!(inst.p, PSpec::Random { .. }) {
        out.notes.push("base p = 1..n (not specified by the construction), duplicated then perturbed".into());
    }
    Ok(out)
}

const K_START: f64 = 5.0;
const K_CAP: f64 = 1048576.0;

/// Doubles `K` from 5 until two consecutive values give the same extracted
/// set, and returns the larger of the two.
pub fn escalate_k(
    template: impl Fn(f64) -> Result<SeparableInstance>,
    extractor: impl Fn(&SeparableInstance) -> Result<IndexSet>,
) -> Result<f64> {
    let sorted = |k: f64| -> Result<IndexSet> {
        let mut s = extractor(&template(k)?)?;
        s.sort_unstable();
        Ok(s)
    };
    let mut k = K_START;
    let mut prev = sorted(k)?;
    while k < K_CAP {
        let next = sorted(2.0 * k)?;
        k *= 2.0;
        if next == prev {
            return Ok(k);
        }
        prev = next;
    }
    Err(Error::KNotStable(K_CAP))
}

/// Family selector with its parameters, as used by the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GenSpec {
    Generic { m: usize, r: usize, n: usize, eps: f64 },
    Necessity { r: usize, alpha: f64 },
    Lbdelta { alpha: f64, eps: f64, k: f64, midpoint: bool },
    Ambiguity { alpha: f64, eps: f64 },
    Nc1 { r: usize, kappa: f64, beta: f64, eps_scale: f64, k: f64 },
    Th7 { r: usize, kappa: f64, eps: f64, k: f64 },
    Experiment5 { base: Box<GenSpec> },
}

impl GenSpec {
    pub fn generate(&self, seed: u64) -> Result<SeparableInstance> {
        match self {
            GenSpec::Generic { m, r, n, eps } => gen_generic(*m, *r, *n, *eps, seed),
            GenSpec::Necessity { r, alpha } => gen_necessity(*r, *alpha),
            GenSpec::Lbdelta { alpha, eps, k, midpoint } => gen_lbdelta(*alpha, *eps, *k, *midpoint),
            GenSpec::Ambiguity { alpha, eps } => Ok(gen_ambiguity(*alpha, *eps)?.inst3),
            GenSpec::Nc1 { r, kappa, beta, eps_scale, k } => gen_nc1(*r, *kappa, *beta, *eps_scale, *k),
            GenSpec::Th7 { r, kappa, eps, k } => gen_th7(*r, *kappa, *eps, *k),
            GenSpec::Experiment5 { base } => apply_experiment5(&base.generate(seed)?, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cond::{alpha, omega};
    use crate::hottopixx::{build_model, direct_violations, embed_x0, ModelOptions};
    use crate::lp::{check_feasible, ConstraintRef};
    use crate::matrix::col_distance_matrix;

    fn assert_valid(inst: &SeparableInstance) {
        let bad = inst.check();
        assert!(bad.is_empty(), "{}: {bad:?}", inst.family);
    }

    #[test]
    fn generic_is_valid_and_deterministic() {
        for seed in 0..5 {
            let a = gen_generic(6, 3, 9, 0.02, seed).unwrap();
            assert_valid(&a);
            assert_eq!(a, gen_generic(6, 3, 9, 0.02, seed).unwrap());
            for j in 0..9 {
                assert!((a.noise.col_l1(j) - 0.02).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generic_shape_is_independent_of_eps() {
        let a = gen_generic(5, 2, 6, 0.0, 3).unwrap();
        let b = gen_generic(5, 2, 6, 0.1, 3).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.h, b.h);
        assert_eq!(a.permutation, b.permutation);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn generic_noiseless_embedding_is_feasible() {
        let inst = gen_generic(6, 3, 9, 0.0, 11).unwrap();
        assert_eq!(inst.mt, inst.m_clean());
        let x0 = embed_x0(&inst.h, &inst.anchors(), inst.n()).unwrap();
        let v = direct_violations(&inst.mt, &x0, 3, 0.0, ModelOptions::default()).unwrap();
        assert!(v.iter().all(|&e| e <= 1e-12), "{v:?}");
    }

    #[test]
    fn generic_rejects_bad_rank() {
        assert!(gen_generic(2, 3, 5, 0.0, 0).is_err());
    }

    #[test]
    fn necessity_columns_coincide() {
        let inst = gen_necessity(2, 0.1).unwrap();
        assert_valid(&inst);
        for j in 0..2 {
            let c = inst.mt.col(j);
            assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15 && (c[2] - 0.95).abs() < 1e-15);
        }
        assert!((l1_operator_norm(&inst.noise) - 0.05).abs() < 1e-15);
        assert!((alpha(&inst.w).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lbdelta_midpoint_identity_and_witness() {
        let inst = gen_lbdelta(0.2, 0.03, 5.0, false).unwrap();
        assert_valid(&inst);
        let m = inst.m_clean();
        for i in 0..3 {
            let lhs = inst.mt[(i, 2)] + 2.0 * inst.noise[(i, 2)];
            assert!((lhs - (m[(i, 3)] + m[(i, 4)]) / 2.0).abs() < 1e-12);
        }
        let (model, lp) = build_model(&inst.mt, 3, inst.eps, &inst.p_vector(), ModelOptions::default()).unwrap();
        let x = lbdelta_witness(&inst);
        assert!(check_feasible(&lp, &model.lp_point(&inst.mt, &x).unwrap(), 1e-9).unwrap().pass);
        assert!(gen_lbdelta(0.2, 0.07, 5.0, false).is_err());
        assert!(gen_lbdelta(0.2, 0.07, 5.0, true).is_ok());
        assert!((alpha(&inst.w).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn lbdelta_witness_needs_small_lambda() {
        // Column 4 of M - M X is lambda mu (W3 - (W1 + W2)/2), of l1 norm
        // lambda mu alpha, which fits the 2 eps budget only for lambda <= 0.8.
        for (eps, fits) in [(0.01, false), (0.0134, true), (0.03, true)] {
            let inst = gen_lbdelta(0.2, eps, 5.0, false).unwrap();
            let lambda = inst.param("lambda").unwrap();
            let mu = (1.0 - lambda) / (2.0 - lambda);
            let x = lbdelta_witness(&inst);
            let res = inst.mt.sub(&inst.mt.matmul(&x).unwrap()).unwrap();
            assert!((res.col_l1(3) - lambda * mu * 0.2).abs() < 1e-12);
            assert_eq!(lambda <= 0.8, fits);
            let v = direct_violations(&inst.mt, &x, 3, eps, ModelOptions::default()).unwrap();
            assert_eq!(v[0] <= 1e-12, fits, "eps={eps} {v:?}");
        }
    }

    #[test]
    fn ambiguity_two_readings_agree() {
        let (a, e) = (0.2, 0.04);
        let amb = gen_ambiguity(a, e).unwrap();
        assert_valid(&amb.inst3);
        assert!(amb.inst4.check().iter().all(|s| !s.contains("differs")));
        let lhs = amb.inst3.w.matmul(&amb.inst3.h).unwrap().add(&amb.inst3.noise).unwrap();
        let rhs = amb.inst4.w.matmul(&amb.inst4.h).unwrap().add(&DenseMatrix::from_fn(3, 5, |i, j| {
            if j >= 2 { [e / 4.0, e / 4.0, -e / 2.0][i] } else { 0.0 }
        })).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        assert_eq!(amb.inst3.mt, amb.inst4.mt);
        let d = col_distance_matrix(&amb.inst3.m_clean());
        for i in 0..5 {
            for j in 0..i {
                assert!(d[(i, j)] >= e / a - 1e-12, "{i} {j} {}", d[(i, j)]);
            }
        }
        assert!((l1_operator_norm(&amb.inst4.noise) - e).abs() < 1e-12);
        assert_eq!((amb.padded3.rows(), amb.padded3.cols()), (4, 6));
        assert!((amb.padded4[(3, 5)] - (1.0 - a / e)).abs() < 1e-15);
    }

    #[test]
    fn nc1_residuals_and_witness() {
        let inst = gen_nc1(3, 0.1, 0.5, 1.0, 5.0).unwrap();
        assert_valid(&inst);
        assert!((kappa(&inst.w).unwrap() - 0.1).abs() < 1e-12);
        let x = nc1_witness(&inst);
        assert_eq!(x[(5, 5)], 1.0);
        // The displayed point overshoots the trace by exactly omega; every
        // other constraint holds.
        let (model, lp) = build_model(&inst.mt, 3, inst.eps, &inst.p_vector(), ModelOptions::default()).unwrap();
        let rep = check_feasible(&lp, &model.lp_point(&inst.mt, &x).unwrap(), 1e-9).unwrap();
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].at, ConstraintRef::Eq(0));
        assert!((rep.violations[0].amount - inst.param("omega").unwrap()).abs() < 1e-12);
    }

    #[test]
    fn th7_structure() {
        for r in [3usize, 4, 5, 10] {
            let (lo, hi) = th7_window(r, 0.1);
            if lo >= hi {
                assert!(gen_th7(r, 0.1, hi, 5.0).is_err() || r > 3);
                continue;
            }
            let inst = gen_th7(r, 0.1, (lo + hi) / 2.0, 5.0).unwrap();
            assert_valid(&inst);
            for j in 0..inst.n() {
                assert!(inst.noise.col_l1(j) <= inst.eps + 1e-15);
            }
            for i in r + 2..2 * r + 1 {
                let s: f64 = inst.noise.row(i).iter().sum();
                assert!(s.abs() < 1e-15);
            }
            assert!((kappa(&inst.w).unwrap() - 0.1).abs() < 1e-12);
            assert!((omega(&inst.w).unwrap() - 0.1).abs() < 1e-12);
            let a = alpha(&inst.w).unwrap();
            assert!(a >= 0.1 - 1e-12 && a <= 0.2 + 1e-12);
            assert_eq!(inst.p_vector().len(), 2 * r);
        }
    }

    #[test]
    fn th7_window_is_empty_for_three() {
        let (lo, hi) = th7_window(3, 0.1);
        assert_eq!(lo, hi);
        assert!(gen_th7(3, 0.1, hi, 5.0).is_err());
        assert!(gen_th7_relaxed(3, 0.1, hi, 5.0).is_ok());
    }

    #[test]
    fn th7_witnesses() {
        for r in [4usize, 5, 10] {
            let (lo, hi) = th7_window(r, 0.1);
            for t in [0.1, 0.5, 1.0] {
                let inst = gen_th7(r, 0.1, lo + (hi - lo) * t, 5.0).unwrap();
                let (model, lp) = build_model(&inst.mt, r, inst.eps, &inst.p_vector(), ModelOptions::default()).unwrap();
                let fixed = th7_witness_corrected(&inst);
                let rep = check_feasible(&lp, &model.lp_point(&inst.mt, &fixed).unwrap(), 1e-9).unwrap();
                assert!(rep.pass, "r={r} t={t}: {:?}", rep.violations);
                let literal = th7_witness_literal(&inst);
                assert!(!check_feasible(&lp, &model.lp_point(&inst.mt, &literal).unwrap(), 1e-9).unwrap().pass);
            }
        }
    }

    #[test]
    fn experiment5_duplicates() {
        let base = gen_th7(4, 0.1, 0.015, 5.0).unwrap();
        let a = apply_experiment5(&base, 9).unwrap();
        assert_valid(&a);
        assert_eq!(a.n(), base.n() + 2 * base.r);
        assert!(a.anchor_groups.iter().all(|g| g.len() == 3));
        for g in &a.anchor_groups {
            assert_eq!(a.mt.col(g[0]), a.mt.col(g[1]));
            assert_eq!(a.mt.col(g[0]), a.mt.col(g[2]));
        }
        assert_eq!(a, apply_experiment5(&base, 9).unwrap());
        assert!(all_distinct(&a.p_vector(), 1e-12));
        let generic = gen_generic(5, 2, 4, 0.0, 1).unwrap();
        let b = apply_experiment5(&generic, 2).unwrap();
        assert_valid(&b);
        assert_eq!(b.notes.len(), 1);
    }

    #[test]
    fn escalation_stops_or_fails() {
        let k = escalate_k(|k| gen_lbdelta(0.2, 0.03, k, false), |_| Ok(vec![0, 1, 2])).unwrap();
        assert_eq!(k, 10.0);
        let counter = std::cell::Cell::new(0usize);
        let err = escalate_k(
            |k| gen_lbdelta(0.2, 0.03, k, false),
            |_| {
                counter.set(counter.get() + 1);
                Ok(vec![counter.get()])
            },
        );
        assert!(matches!(err, Err(Error::KNotStable(_))));
    }

    #[test]
    fn spec_round_trip() {
        let spec = GenSpec::Experiment5 { base: Box::new(GenSpec::Th7 { r: 4, kappa: 0.1, eps: 0.015, k: 5.0 }) };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GenSpec>(&json).unwrap(), spec);
        assert_eq!(spec.generate(3).unwrap().n(), 16);
    }
}
