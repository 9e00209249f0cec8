//! Recovery benchmarks of plain Hottopixx against the post-processed variant,
//! with CSV and SVG output.

use crate::extract::{hottopixx_extract, postprocessed_extract, recovery_rate, ExtractionResult};
use crate::gen::{apply_experiment5, gen_generic, gen_th7, gen_th7_relaxed, th7_window, SeparableInstance};
use crate::hottopixx::{build_model, solve_hottopixx, ModelOptions};
use crate::matrix::perm_matched_error;
use crate::{DenseMatrix, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;

pub const CSV_HEADER: &str = "family,r,eps,seed,algorithm,recovery,perm_error,lp_wall_ms,post_wall_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Hottopixx,
    Postprocessed,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Hottopixx => "hottopixx",
            Algorithm::Postprocessed => "postprocessed",
        }
    }
}

/// One algorithm on one trial. A failed LP leaves `recovery` and
/// `perm_error` as NaN and the reason in `error`.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub family: String,
    pub r: usize,
    pub eps: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub recovery: f64,
    pub perm_error: f64,
    pub lp_wall_ms: f64,
    pub post_wall_ms: f64,
    /// Hash of the LP solution both algorithms read; not written to CSV.
    pub x_hash: Option<u64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchFamily {
    /// `gen_generic` with `m` rows and `n_per_r * r` columns.
    Generic { m: usize, n_per_r: usize },
    /// `gen_th7`; `relaxed` admits noise below the failure window.
    Th7 { kappa: f64, k: f64, relaxed: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub family: BenchFamily,
    /// Append two copies of every anchor and perturb `p`.
    pub duplicates: bool,
    pub rs: Vec<usize>,
    pub eps: Vec<f64>,
    /// When set, `eps` is ignored and each `r` gets this many evenly spaced
    /// noise levels in its th7 window (left end excluded).
    #[serde(default)]
    pub window_points: Option<usize>,
    pub trials: usize,
    pub base_seed: u64,
}

impl BenchGrid {
    /// Th7 with duplicates at `r`, `kappa = 0.1`, `K = 5`, over `points`
    /// evenly spaced noise levels in the failure window (left end excluded).
    pub fn th7_duplicates(rs: &[usize], points: usize, trials: usize, base_seed: u64) -> Self {
        BenchGrid {
            family: BenchFamily::Th7 { kappa: 0.1, k: 5.0, relaxed: false },
            duplicates: true,
            rs: rs.to_vec(),
            eps: vec![],
            window_points: Some(points),
            trials,
            base_seed,
        }
    }

    /// Noise levels used for rank `r`.
    pub fn eps_for(&self, r: usize) -> Vec<f64> {
        match self.window_points {
            Some(points) => {
                let kappa = match self.family {
                    BenchFamily::Th7 { kappa, .. } => kappa,
                    BenchFamily::Generic { .. } => 0.1,
                };
                let (lo, hi) = th7_window(r, kappa);
                (1..=points).map(|i| lo + (hi - lo) * i as f64 / points as f64).collect()
            }
            None => self.eps.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let no_eps = match self.window_points {
            Some(p) => p == 0,
            None => self.eps.is_empty(),
        };
        if self.rs.is_empty() || no_eps || self.trials == 0 {
            return Err(Error::InvalidParam("grid needs at least one r, one eps and one trial".into()));
        }
        Ok(())
    }

    fn family_tag(&self) -> String {
        let base = match self.family {
            BenchFamily::Generic { .. } => "generic",
            BenchFamily::Th7 { .. } => "th7",
        };
        if self.duplicates { format!("{base}+dup") } else { base.to_string() }
    }

    fn instance(&self, r: usize, eps: f64, seed: u64) -> Result<SeparableInstance> {
        let inst = match self.family {
            BenchFamily::Generic { m, n_per_r } => gen_generic(m, r, n_per_r * r, eps, seed)?,
            BenchFamily::Th7 { kappa, k, relaxed: false } => gen_th7(r, kappa, eps, k)?,
            BenchFamily::Th7 { kappa, k, relaxed: true } => gen_th7_relaxed(r, kappa, eps, k)?,
        };
        if self.duplicates { apply_experiment5(&inst, seed) } else { Ok(inst) }
    }
}

/// Seed of trial `t` in cell `c`.
pub fn trial_seed(base: u64, cell: usize, trial: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(((cell as u64) << 20) | trial as u64)
}

pub fn hash_matrix(x: &DenseMatrix) -> u64 {
    let mut h = DefaultHasher::new();
    for v in x.as_slice() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Elapsed milliseconds; always 0 on wasm32.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64() * 1e3;
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

fn score(inst: &SeparableInstance, res: &ExtractionResult) -> (f64, f64) {
    let perm = if res.indices.len() == inst.r {
        perm_matched_error(&inst.w, &res.wt).map(|p| p.0).unwrap_or(f64::NAN)
    } else {
        f64::INFINITY
    };
    (recovery_rate(res, inst), perm)
}

/// Both algorithms on one trial, sharing a single LP solve.
pub fn run_trial(family: &str, inst: &SeparableInstance, seed: u64) -> [BenchRecord; 2] {
    let blank = |algorithm| BenchRecord {
        family: family.to_string(),
        r: inst.r,
        eps: inst.eps,
        seed,
        algorithm,
        recovery: f64::NAN,
        perm_error: f64::NAN,
        lp_wall_ms: 0.0,
        post_wall_ms: 0.0,
        x_hash: None,
        error: None,
    };
    let mut out = [blank(Algorithm::Hottopixx), blank(Algorithm::Postprocessed)];
    let fail = |out: &mut [BenchRecord; 2], e: Error| {
        for rec in out.iter_mut() {
            rec.error = Some(e.to_string());
        }
    };
    let (model, lp) = match build_model(&inst.mt, inst.r, inst.eps, &inst.p_vector(), ModelOptions::default()) {
        Ok(v) => v,
        Err(e) => {
            fail(&mut out, e);
            return out;
        }
    };
    let t = Stopwatch::start();
    let solved = solve_hottopixx(&model, &lp);
    let lp_ms = t.ms();
    let x = match solved {
        Ok((x, _)) => x,
        Err(e) => {
            fail(&mut out, e);
            for rec in out.iter_mut() {
                rec.lp_wall_ms = lp_ms;
            }
            return out;
        }
    };
    let hash = hash_matrix(&x);
    for rec in out.iter_mut() {
        let t = Stopwatch::start();
        let res = match rec.algorithm {
            Algorithm::Hottopixx => hottopixx_extract(&inst.mt, &x, inst.r),
            Algorithm::Postprocessed => postprocessed_extract(&inst.mt, &x, inst.r, inst.eps),
        };
        rec.post_wall_ms = t.ms();
        rec.lp_wall_ms = lp_ms;
        rec.x_hash = Some(hash);
        match res {
            Ok(res) => (rec.recovery, rec.perm_error) = score(inst, &res),
            Err(e) => rec.error = Some(e.to_string()),
        }
    }
    out
}

/// Runs every (r, eps, trial) of the grid. Records come out in
/// (r, eps, trial, algorithm) order whatever the scheduling.
pub fn run_bench(grid: &BenchGrid) -> Result<Vec<BenchRecord>> {
    grid.validate()?;
    let tag = grid.family_tag();
    let mut jobs = vec![];
    for &r in &grid.rs {
        for eps in grid.eps_for(r) {
            let cell = jobs.len() / grid.trials;
            for t in 0..grid.trials {
                jobs.push((r, eps, trial_seed(grid.base_seed, cell, t)));
            }
        }
    }
    let job = |&(r, eps, seed): &(usize, f64, u64)| -> Vec<BenchRecord> {
        match grid.instance(r, eps, seed) {
            Ok(inst) => run_trial(&tag, &inst, seed).to_vec(),
            Err(e) => [Algorithm::Hottopixx, Algorithm::Postprocessed]
                .map(|algorithm| BenchRecord {
                    family: tag.clone(),
                    r,
                    eps,
                    seed,
                    algorithm,
                    recovery: f64::NAN,
                    perm_error: f64::NAN,
                    lp_wall_ms: 0.0,
                    post_wall_ms: 0.0,
                    x_hash: None,
                    error: Some(e.to_string()),
                })
                .to_vec(),
        }
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<BenchRecord>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<BenchRecord>> = jobs.iter().map(job).collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Writes the CSV. With `timings = false` the two wall-clock columns are
/// written as 0 so that reruns are byte-identical.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W, timings: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for rec in records {
        let (lp, post) = if timings { (rec.lp_wall_ms, rec.post_wall_ms) } else { (0.0, 0.0) };
        w.write_record([
            rec.family.clone(),
            rec.r.to_string(),
            format!("{:?}", rec.eps),
            rec.seed.to_string(),
            rec.algorithm.name().to_string(),
            format!("{:?}", rec.recovery),
            format!("{:?}", rec.perm_error),
            format!("{lp:?}"),
            format!("{post:?}"),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[BenchRecord], path: &Path, timings: bool) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?, timings)
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")));
    let int = |s: &str| s.parse::<u64>().map_err(|_| Error::Parse(format!("not an integer: {s:?}")));
    let mut out = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let algorithm = match &rec[4] {
            "hottopixx" => Algorithm::Hottopixx,
            "postprocessed" => Algorithm::Postprocessed,
            other => return Err(Error::Parse(format!("unknown algorithm {other:?}"))),
        };
        out.push(BenchRecord {
            family: rec[0].to_string(),
            r: int(&rec[1])? as usize,
            eps: num(&rec[2])?,
            seed: int(&rec[3])?,
            algorithm,
            recovery: num(&rec[5])?,
            perm_error: num(&rec[6])?,
            lp_wall_ms: num(&rec[7])?,
            post_wall_ms: num(&rec[8])?,
            x_hash: None,
            error: None,
        });
    }
    Ok(out)
}

/// Mean recovery per (algorithm, eps), skipping failed trials.
pub fn mean_recovery(records: &[BenchRecord]) -> BTreeMap<(Algorithm, u64), (f64, f64)> {
    let mut acc: BTreeMap<(Algorithm, u64), (f64, f64, usize)> = BTreeMap::new();
    for rec in records.iter().filter(|r| r.recovery.is_finite()) {
        let e = acc.entry((rec.algorithm, rec.eps.to_bits())).or_insert((rec.eps, 0.0, 0));
        e.1 += rec.recovery;
        e.2 += 1;
    }
    acc.into_iter().map(|(k, (eps, s, c))| (k, (eps, s / c as f64))).collect()
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// Plot coordinates of a point with noise `eps` in `[lo, hi]` and recovery `y`.
pub fn svg_point(eps: f64, y: f64, lo: f64, hi: f64) -> (f64, f64) {
    let w = SVG_W - 2.0 * MARGIN;
    let h = SVG_H - 2.0 * MARGIN;
    let fx = if hi > lo { (eps - lo) / (hi - lo) } else { 0.5 };
    (MARGIN + fx * w, SVG_H - MARGIN - y * h)
}

/// Mean recovery against noise level, one polyline per algorithm.
pub fn render_svg(records: &[BenchRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidParam("no records to plot".into()));
    };
    if records.iter().any(|r| r.r != first.r || r.family != first.family) {
        return Err(Error::InvalidParam("plot needs records of a single family and r".into()));
    }
    let means = mean_recovery(records);
    let lo = records.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.eps).fold(f64::NEG_INFINITY, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0) = svg_point(lo, 0.0, lo, hi);
    let (x1, y1) = svg_point(hi, 1.0, lo, hi);
    let (xl, xr) = (MARGIN, SVG_W - MARGIN);
    let _ = writeln!(s, r#"<line x1="{xl}" y1="{y0}" x2="{xr}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{xl}" y1="{y0}" x2="{xl}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let (_, y) = svg_point(lo, v, lo, hi);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, xl - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{x0:.2}" y="{:.2}" text-anchor="middle">{lo:.4}</text>"#, y0 + 18.0);
    if hi > lo {
        let _ = writeln!(s, r#"<text x="{x1:.2}" y="{:.2}" text-anchor="middle">{hi:.4}</text>"#, y0 + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">noise level eps</text>"#, SVG_W / 2.0, SVG_H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">mean recovery</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle">{} r = {}</text>"#,
        SVG_W / 2.0,
        xml_escape(&first.family),
        first.r
    );
    for (i, (alg, color)) in [(Algorithm::Hottopixx, "#d62728"), (Algorithm::Postprocessed, "#1f77b4")].into_iter().enumerate() {
        let pts: Vec<String> = means
            .iter()
            .filter(|((a, _), _)| *a == alg)
            .map(|(_, &(eps, y))| {
                let (x, y) = svg_point(eps, y, lo, hi);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<polyline id="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            alg.name(),
            pts.join(" ")
        );
        let ly = MARGIN + 10.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, xr - 130.0, xr - 110.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, xr - 104.0, ly + 4.0, alg.name());
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_svg(records: &[BenchRecord], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(alg: Algorithm, eps: f64, recovery: f64) -> BenchRecord {
        BenchRecord {
            family: "th7".into(),
            r: 4,
            eps,
            seed: 7,
            algorithm: alg,
            recovery,
            perm_error: 0.125,
            lp_wall_ms: 3.5,
            post_wall_ms: 0.25,
            x_hash: None,
            error: None,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = vec![];
        write_csv(&[], &mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_round_trip() {
        let mut rs = vec![rec(Algorithm::Hottopixx, 0.1 / 3.0, 0.75), rec(Algorithm::Postprocessed, 0.1 / 3.0, 1.0)];
        rs[1].perm_error = f64::INFINITY;
        let mut buf = vec![];
        write_csv(&rs, &mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 3);
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), rs);
    }

    #[test]
    fn timings_can_be_blanked() {
        let mut buf = vec![];
        write_csv(&[rec(Algorithm::Hottopixx, 0.5, 1.0)], &mut buf, false).unwrap();
        let back = parse_csv(buf.as_slice()).unwrap();
        assert_eq!((back[0].lp_wall_ms, back[0].post_wall_ms), (0.0, 0.0));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn polyline(svg: &str, id: &str) -> Vec<(f64, f64)> {
        let start = svg.find(&format!("id=\"{id}\"")).unwrap();
        let tail = &svg[start..];
        let p = tail.find("points=\"").unwrap() + 8;
        let end = tail[p..].find('"').unwrap();
        tail[p..p + end]
            .split_whitespace()
            .map(|xy| {
                let (x, y) = xy.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    }

    /// Tags nest properly and attribute quotes balance.
    fn well_formed(svg: &str) -> bool {
        let mut stack = vec![];
        let mut rest = svg;
        while let Some(i) = rest.find('<') {
            let j = rest[i..].find('>').unwrap() + i;
            let tag = &rest[i + 1..j];
            if tag.matches('"').count() % 2 != 0 {
                return false;
            }
            if let Some(name) = tag.strip_prefix('/') {
                if stack.pop() != Some(name.to_string()) {
                    return false;
                }
            } else if !tag.ends_with('/') {
                stack.push(tag.split_whitespace().next().unwrap().to_string());
            }
            rest = &rest[j + 1..];
        }
        stack.is_empty()
    }

    #[test]
    fn one_point_per_algorithm() {
        let svg = render_svg(&[rec(Algorithm::Hottopixx, 0.02, 0.5), rec(Algorithm::Postprocessed, 0.02, 1.0)]).unwrap();
        assert_eq!(polyline(&svg, "hottopixx").len(), 1);
        assert_eq!(polyline(&svg, "postprocessed").len(), 1);
    }

    #[test]
    fn svg_coordinates_match_means() {
        let mut rs = vec![];
        for (i, eps) in [0.01, 0.02, 0.04].into_iter().enumerate() {
            for t in 0..2 {
                rs.push(rec(Algorithm::Hottopixx, eps, 0.5 + 0.1 * i as f64 + 0.1 * t as f64));
                rs.push(rec(Algorithm::Postprocessed, eps, 1.0));
            }
        }
        let svg = render_svg(&rs).unwrap();
        let pts = polyline(&svg, "hottopixx");
        let h = SVG_H - 2.0 * MARGIN;
        for (i, &(x, y)) in pts.iter().enumerate() {
            let mean = 0.55 + 0.1 * i as f64;
            let want_y = SVG_H - MARGIN - mean * h;
            assert!((y - want_y).abs() <= 0.01, "{y} vs {want_y}");
            let eps = [0.01, 0.02, 0.04][i];
            let want_x = MARGIN + (eps - 0.01) / 0.03 * (SVG_W - 2.0 * MARGIN);
            assert!((x - want_x).abs() <= 0.01);
        }
        assert!(well_formed(&svg));
    }

    #[test]
    fn mixed_r_is_rejected() {
        let mut b = rec(Algorithm::Hottopixx, 0.1, 1.0);
        b.r = 5;
        assert!(render_svg(&[rec(Algorithm::Hottopixx, 0.1, 1.0), b]).is_err());
    }

    #[test]
    fn noiseless_generic_grid_recovers_everything() {
        let grid = BenchGrid {
            family: BenchFamily::Generic { m: 6, n_per_r: 3 },
            duplicates: false,
            rs: vec![2, 3],
            eps: vec![0.0],
            window_points: None,
            trials: 3,
            base_seed: 1,
        };
        let recs = run_bench(&grid).unwrap();
        assert_eq!(recs.len(), 12);
        for pair in recs.chunks(2) {
            assert_eq!(pair[0].x_hash, pair[1].x_hash);
            assert!(pair[0].x_hash.is_some());
        }
        for r in &recs {
            assert_eq!(r.recovery, 1.0, "{r:?}");
            assert!(r.perm_error < 1e-12);
        }
    }

    #[test]
    fn bench_is_deterministic() {
        let grid = BenchGrid::th7_duplicates(&[4], 2, 2, 5);
        let run = || {
            let mut buf = vec![];
            write_csv(&run_bench(&grid).unwrap(), &mut buf, false).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_cell_is_recorded_not_fatal() {
        let grid = BenchGrid {
            family: BenchFamily::Th7 { kappa: 0.1, k: 5.0, relaxed: false },
            duplicates: false,
            rs: vec![4],
            eps: vec![1.0],
            window_points: None,
            trials: 1,
            base_seed: 0,
        };
        let recs = run_bench(&grid).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.error.is_some() && r.recovery.is_nan()));
    }
}
