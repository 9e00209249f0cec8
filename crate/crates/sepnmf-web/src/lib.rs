//! Browser bindings. Each exported function takes plain numbers or text and
//! returns JSON or SVG, so the page needs no glue beyond `JSON.parse`.

use sepnmf::bench::{mean_recovery, render_svg, run_bench, write_csv, BenchGrid};
use sepnmf::cond::condition;
use sepnmf::extract::{hottopixx_extract, postprocessed_extract, recovery_rate};
use sepnmf::gen::{apply_experiment5, gen_th7, th7_window};
use sepnmf::hottopixx::{build_model, solve_hottopixx, ModelOptions};
use sepnmf::io::read_matrix;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Res<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Generates a th7 instance, solves the LP once and extracts with both methods.
pub fn th7_solve(r: usize, kappa: f64, eps: f64, k: f64, duplicates: bool, seed: u64) -> Res<Value> {
    let mut inst = gen_th7(r, kappa, eps, k).map_err(err)?;
    if duplicates {
        inst = apply_experiment5(&inst, seed).map_err(err)?;
    }
    let (model, lp) = build_model(&inst.mt, inst.r, inst.eps, &inst.p_vector(), ModelOptions::default()).map_err(err)?;
    let (x, sol) = solve_hottopixx(&model, &lp).map_err(err)?;
    let hott = hottopixx_extract(&inst.mt, &x, r).map_err(err)?;
    let post = postprocessed_extract(&inst.mt, &x, r, eps).map_err(err)?;
    let (lo, hi) = th7_window(r, kappa);
    Ok(json!({
        "n": inst.n(),
        "window": [lo, hi],
        "anchor_groups": inst.anchor_groups,
        "diag": hott.diag,
        "iterations": sol.iterations,
        "hottopixx": { "indices": hott.indices, "recovery": recovery_rate(&hott, &inst) },
        "post": {
            "indices": post.indices,
            "recovery": recovery_rate(&post, &inst),
            "fallback": post.fallback,
            "nu": post.nu_final,
        },
    }))
}

/// alpha, kappa and omega of a matrix given as CSV text.
pub fn conditioning_of(csv: &str) -> Res<Value> {
    let w = read_matrix(csv.as_bytes()).map_err(err)?;
    let c = condition(&w).map_err(err)?;
    Ok(json!({ "rows": w.rows(), "cols": w.cols(), "alpha": c.alpha, "kappa": c.kappa, "omega": c.omega }))
}

/// Recovery against noise across the th7 window with duplicated anchors.
pub fn recovery_curve_of(r: usize, points: usize, trials: usize, seed: u64) -> Res<Value> {
    let grid = BenchGrid::th7_duplicates(&[r], points, trials, seed);
    let records = run_bench(&grid).map_err(err)?;
    let svg = render_svg(&records).map_err(err)?;
    let mut csv = vec![];
    write_csv(&records, &mut csv, false).map_err(err)?;
    let means: Vec<Value> = mean_recovery(&records)
        .into_iter()
        .map(|((alg, _), (eps, rec))| json!({ "algorithm": alg.name(), "eps": eps, "recovery": rec }))
        .collect();
    Ok(json!({ "svg": svg, "csv": String::from_utf8(csv).map_err(err)?, "means": means }))
}

fn to_js(v: Res<Value>) -> Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve_th7(r: usize, kappa: f64, eps: f64, k: f64, duplicates: bool, seed: u32) -> Result<String, JsValue> {
    to_js(th7_solve(r, kappa, eps, k, duplicates, seed.into()))
}

#[wasm_bindgen]
pub fn conditioning(csv: &str) -> Result<String, JsValue> {
    to_js(conditioning_of(csv))
}

#[wasm_bindgen]
pub fn recovery_curve(r: usize, points: usize, trials: usize, seed: u32) -> Result<String, JsValue> {
    to_js(recovery_curve_of(r, points, trials, seed.into()))
}

/// Noise window of th7 for the given rank, as `[lo, hi]`.
#[wasm_bindgen]
pub fn window(r: usize, kappa: f64) -> Vec<f64> {
    let (lo, hi) = th7_window(r, kappa);
    vec![lo, hi]
}
