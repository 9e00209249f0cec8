//! `sepnmf`: generate instances, run Hottopixx, fit H, measure conditioning,
//! benchmark and verify.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 on numerical
//! failure (an LP that could not be solved, or an instance that fails
//! verification).

use clap::{Args, Parser, Subcommand, ValueEnum};
use sepnmf::bench::{emit_svg, run_bench, write_csv, BenchFamily, BenchGrid};
use sepnmf::cond::{beta_of_h, condition, kappa};
use sepnmf::extract::{fit_h, hottopixx_extract, postprocessed_extract};
use sepnmf::gen::*;
use sepnmf::hottopixx::{build_model, default_p, feasibility_invariants, solve_hottopixx, ModelOptions};
use sepnmf::io::{read_instance, read_matrix_file, write_instance, write_manifest, write_matrix, write_matrix_file};
use sepnmf::lp::check_feasible;
use sepnmf::{DenseMatrix, Error, IndexSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sepnmf", version, about = "Separable NMF by linear programming")]
struct Cli {
    /// Base seed; falls back to SEPNMF_SEED, then 0.
    #[arg(long, global = true, env = "SEPNMF_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance directory.
    Gen(GenArgs),
    /// Solve the LP and extract r columns.
    Solve(SolveArgs),
    /// Fit H by l1 regression on given columns.
    FitH(FitArgs),
    /// Conditioning of a W matrix.
    Cond { w: PathBuf },
    /// Run a recovery benchmark.
    Bench(BenchArgs),
    /// Check every invariant of an instance directory.
    Verify { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Generic,
    Necessity,
    Lbdelta,
    Ambiguity,
    Nc1,
    Th7,
    Experiment5,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Family wrapped by `experiment5`.
    #[arg(long, value_enum, default_value = "th7")]
    base: Family,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    eps_scale: f64,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    /// Raise K until the Hottopixx selection is stable.
    #[arg(long)]
    escalate: bool,
    #[arg(long)]
    midpoint: bool,
    /// th7 below its failure window.
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Hottopixx,
    Post,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance directory or a matrix CSV.
    input: PathBuf,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value = "hottopixx")]
    method: Method,
    /// Draw p from this seed instead of the instance's own weights.
    #[arg(long)]
    p_seed: Option<u64>,
    /// Also fit H and report the residual.
    #[arg(long)]
    fit: bool,
    /// Manifest path; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    indices: Vec<usize>,
    /// Where to write H; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFam {
    Th7,
    Generic,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "th7")]
    family: BenchFam,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 8, 10])]
    r: Vec<usize>,
    /// Explicit noise levels; otherwise --points levels in each th7 window.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    points: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    kappa: f64,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    n_per_r: usize,
    /// Do not append anchor duplicates.
    #[arg(long)]
    no_duplicates: bool,
    /// th7 below its failure window.
    #[arg(long)]
    relaxed: bool,
    /// Write 0 for wall-clock columns so reruns are byte-identical.
    #[arg(long)]
    no_timings: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// One plot per r; with several r, the r value is appended to the name.
    #[arg(long)]
    svg: Option<PathBuf>,
}

enum Fail {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Lp(_) | Error::LpColumn { .. } | Error::KNotStable(_) | Error::KappaFloor { .. } => {
                Fail::Numerical(e.to_string())
            }
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Usage(e.to_string())
    }
}

type Res<T> = std::result::Result<T, Fail>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let seed = cli.seed;
    let res = match cli.cmd {
        Cmd::Gen(a) => gen(a, seed),
        Cmd::Solve(a) => solve(a),
        Cmd::FitH(a) => fit(a),
        Cmd::Cond { w } => cond(&w),
        Cmd::Bench(a) => bench(a, seed),
        Cmd::Verify { dir } => verify(&dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Fail::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}

fn hott_indices(inst: &SeparableInstance) -> sepnmf::Result<IndexSet> {
    let (model, lp) = build_model(&inst.mt, inst.r, inst.eps, &inst.p_vector(), ModelOptions::default())?;
    let (x, _) = solve_hottopixx(&model, &lp)?;
    Ok(hottopixx_extract(&inst.mt, &x, inst.r)?.indices)
}

fn build(a: &GenArgs, family: Family, seed: u64, k: f64) -> sepnmf::Result<SeparableInstance> {
    match family {
        Family::Generic => gen_generic(a.m, a.r, a.n.unwrap_or(3 * a.r), a.eps, seed),
        Family::Necessity => gen_necessity(a.r, a.alpha),
        Family::Lbdelta => gen_lbdelta(a.alpha, a.eps, k, a.midpoint),
        Family::Ambiguity => Ok(gen_ambiguity(a.alpha, a.eps)?.inst3),
        Family::Nc1 => gen_nc1(a.r, a.kappa, a.beta, a.eps_scale, k),
        Family::Th7 if a.relaxed => gen_th7_relaxed(a.r, a.kappa, a.eps, k),
        Family::Th7 => gen_th7(a.r, a.kappa, a.eps, k),
        Family::Experiment5 => match a.base {
            Family::Experiment5 => Err(Error::InvalidParam("experiment5 cannot wrap itself".into())),
            base => apply_experiment5(&build(a, base, seed, k)?, seed),
        },
    }
}

fn gen(a: GenArgs, seed: u64) -> Res<()> {
    let k = if a.escalate { escalate_k(|k| build(&a, a.family, seed, k), hott_indices)? } else { a.k };
    let inst = build(&a, a.family, seed, k)?;
    write_instance(&a.out, &inst)?;
    if let Family::Ambiguity = a.family {
        let amb = gen_ambiguity(a.alpha, a.eps)?;
        write_instance(&a.out.join("four"), &amb.inst4)?;
        write_matrix_file(&a.out.join("padded3.csv"), &amb.padded3)?;
        write_matrix_file(&a.out.join("padded4.csv"), &amb.padded4)?;
    }
    eprintln!("wrote {} instance (m={}, n={}, r={}, K={k}) to {}", inst.family, inst.mt.rows(), inst.n(), inst.r, a.out.display());
    Ok(())
}

/// Data, rank, noise level and default weights from a directory or a CSV.
fn load(input: &Path, r: Option<usize>, eps: Option<f64>) -> Res<(DenseMatrix, usize, f64, Option<Vec<f64>>)> {
    if input.is_dir() {
        let inst = read_instance(input)?;
        Ok((inst.mt.clone(), r.unwrap_or(inst.r), eps.unwrap_or(inst.eps), Some(inst.p_vector())))
    } else {
        let mt = read_matrix_file(input)?;
        let r = r.ok_or_else(|| Fail::Usage("--r is required with a matrix file".into()))?;
        let eps = eps.ok_or_else(|| Fail::Usage("--eps is required with a matrix file".into()))?;
        Ok((mt, r, eps, None))
    }
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Res<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Res<()> {
    let (mt, r, eps, p_inst) = load(&a.input, a.r, a.eps)?;
    let p = match (a.p_seed, p_inst) {
        (Some(s), _) => default_p(mt.cols(), s),
        (None, Some(p)) => p,
        (None, None) => default_p(mt.cols(), 0),
    };
    let (model, lp) = build_model(&mt, r, eps, &p, ModelOptions::default())?;
    let (x, _) = solve_hottopixx(&model, &lp)?;
    let (res, name) = match a.method {
        Method::Hottopixx => (hottopixx_extract(&mt, &x, r)?, "hottopixx"),
        Method::Post => (postprocessed_extract(&mt, &x, r, eps)?, "postprocessed"),
    };
    let res = if a.fit { res.with_fit(&mt)? } else { res };
    let manifest = res.manifest(name);
    match &a.out {
        Some(p) => write_manifest(p, &manifest)?,
        None => println!("{}", serde_json::to_string_pretty(&manifest).map_err(Error::from)?),
    }
    Ok(())
}

fn fit(a: FitArgs) -> Res<()> {
    let mt = if a.input.is_dir() { read_instance(&a.input)?.mt } else { read_matrix_file(&a.input)? };
    if let Some(&j) = a.indices.iter().find(|&&j| j >= mt.cols()) {
        return Err(Fail::Usage(format!("index {j} out of range for {} columns", mt.cols())));
    }
    let (h, residual) = fit_h(&mt, &mt.select_cols(&a.indices))?;
    let mut buf = vec![];
    write_matrix(&mut buf, &h)?;
    write_out(&a.out, &String::from_utf8_lossy(&buf))?;
    eprintln!("residual = {residual:?}");
    Ok(())
}

fn cond(path: &Path) -> Res<()> {
    let w = read_matrix_file(path)?;
    let rep = condition(&w)?;
    println!("alpha = {:?}", rep.alpha);
    println!("kappa = {:?}", rep.kappa);
    println!("omega = {:?}", rep.omega);
    Ok(())
}

fn bench(a: BenchArgs, seed: u64) -> Res<()> {
    let family = match a.family {
        BenchFam::Th7 => BenchFamily::Th7 { kappa: a.kappa, k: a.k, relaxed: a.relaxed },
        BenchFam::Generic => BenchFamily::Generic { m: a.m, n_per_r: a.n_per_r },
    };
    let grid = BenchGrid {
        family,
        duplicates: !a.no_duplicates,
        rs: a.r.clone(),
        window_points: a.eps.is_empty().then_some(a.points),
        eps: a.eps.clone(),
        trials: a.trials,
        base_seed: seed,
    };
    if grid.window_points.is_some() && matches!(a.family, BenchFam::Generic) {
        return Err(Fail::Usage("the generic family needs explicit --eps values".into()));
    }
    let recs = run_bench(&grid)?;
    for r in recs.iter().filter(|r| r.algorithm.name() == "hottopixx") {
        if let Some(e) = &r.error {
            eprintln!("r={} eps={} seed={}: {e}", r.r, r.eps, r.seed);
        }
    }
    let mut buf = vec![];
    write_csv(&recs, &mut buf, !a.no_timings)?;
    write_out(&a.csv, &String::from_utf8_lossy(&buf))?;
    if let Some(svg) = &a.svg {
        for &r in &a.r {
            let part: Vec<_> = recs.iter().filter(|x| x.r == r).cloned().collect();
            let path = if a.r.len() == 1 {
                svg.clone()
            } else {
                let stem = svg.file_stem().unwrap_or_default().to_string_lossy();
                svg.with_file_name(format!("{stem}_r{r}.svg"))
            };
            emit_svg(&part, &path)?;
        }
    }
    Ok(())
}

fn verify(dir: &Path) -> Res<()> {
    let inst = read_instance(dir)?;
    let mut problems = inst.check();
    let p = inst.p_vector();
    if p.len() != inst.n() {
        problems.push(format!("p has {} entries for {} columns", p.len(), inst.n()));
    }
    let witness = match inst.family.as_str() {
        "lbdelta" => Some(lbdelta_witness(&inst)),
        "nc1" => Some(nc1_witness(&inst)),
        "th7" => Some(th7_witness_corrected(&inst)),
        _ => None,
    };
    if let Some(x) = witness {
        let (model, lp) = build_model(&inst.mt, inst.r, inst.eps, &p, ModelOptions::default())?;
        let rep = check_feasible(&lp, &model.lp_point(&inst.mt, &x)?, 1e-9)?;
        println!("construction witness: {}", if rep.pass { "feasible".to_string() } else { format!("violated by {:e}", rep.max_violation()) });
    }
    if problems.is_empty() && inst.eps < 1.0 {
        let (model, lp) = build_model(&inst.mt, inst.r, inst.eps, &p, ModelOptions::default())?;
        let (x, _) = solve_hottopixx(&model, &lp)?;
        let k = kappa(&inst.w)?;
        let b = beta_of_h(&inst.h, &inst.anchors()).unwrap_or(1.0);
        for v in feasibility_invariants(&x, &inst.m_clean(), inst.eps, k, b, &inst.anchors(), 1e-8)? {
            problems.push(format!("solved X: {} of column {} is {} (bound {})", v.what, v.col, v.value, v.bound));
        }
    }
    if problems.is_empty() {
        println!("ok: {} (m={}, n={}, r={}, eps={})", inst.family, inst.mt.rows(), inst.n(), inst.r, inst.eps);
        Ok(())
    } else {
        for p in &problems {
            println!("violated: {p}");
        }
        Err(Fail::Numerical(format!("{} invariant(s) violated", problems.len())))
    }
}
