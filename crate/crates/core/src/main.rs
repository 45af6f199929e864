use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use specop::io::{write_csv, write_json, Cell};
use specop::pipeline::{self, FPreset};
use specop::problem::{check_hypotheses, GridConfig, Problem};
use specop::spectrum::EigenSummary;
use specop::transforms::{oracle_projection_c, to_c};
use specop::verify::{run_suite, VerifyConfig, IDENTITY_TOL};
use specop::{Result, SpecError};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Analyze,
    Verify,
    Project,
    Eigen,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FArg {
    Gaussian,
    ShiftedGaussian,
    Eigenmode,
}

impl From<FArg> for FPreset {
    fn from(f: FArg) -> Self {
        match f {
            FArg::Gaussian => FPreset::Gaussian,
            FArg::ShiftedGaussian => FPreset::ShiftedGaussian,
            FArg::Eigenmode => FPreset::Eigenmode,
        }
    }
}

/// Spectral resolution of L = D2 D1 for Schroedinger-type factors.
#[derive(Parser, Debug)]
#[command(name = "specop", version)]
struct Args {
    /// problem file (JSON)
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    cmd: Cmd,
    /// partition index: M_n is where |W+-| > 1/(2n)
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// overrides grid.half_width from the problem file
    #[arg(long)]
    half_width: Option<f64>,
    /// overrides grid.points from the problem file
    #[arg(long)]
    points: Option<usize>,
    /// upper end of the continuous-spectrum quadrature; chosen from the tail
    /// bound when absent
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// input function for analyze and project
    #[arg(long, value_enum, default_value = "gaussian")]
    f: FArg,
    /// interval union for project, e.g. "3:7,8:20"; empty means no intervals
    #[arg(long, default_value = "3:7", allow_hyphen_values = true)]
    intervals: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn parse_intervals(s: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || SpecError::InvalidSpec(format!("intervals: cannot read '{part}', expected a:b"));
        let (a, b) = part.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(SpecError::InvalidSpec(format!("intervals: '{part}' is not a finite interval")));
        }
        out.push((a, b));
    }
    Ok(out)
}

fn load(args: &Args) -> Result<Problem> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| SpecError::InvalidSpec(format!("{}: {e}", args.spec.display())))?;
    let p = Problem::from_json_str(&text)?;
    let grid = GridConfig {
        half_width: args.half_width.unwrap_or(p.grid.half_width),
        points: args.points.unwrap_or(p.grid.points),
    };
    if !(grid.half_width > 0.0) {
        return Err(SpecError::InvalidSpec("half-width: must be positive".into()));
    }
    if let Some(l) = args.lambda_max {
        if !(l.is_finite() && l > 0.0) {
            return Err(SpecError::InvalidSpec("lambda-max: must be positive".into()));
        }
    }
    check_hypotheses(&p.spec, grid.half_width, grid.points)?;
    Ok(p.with_grid(grid))
}

fn eigen(args: &Args, p: &Problem, out: &Path) -> Result<()> {
    let sp = pipeline::spectral(p, args.n)?;
    let eigs: Vec<EigenSummary> = sp.eigs.iter().map(|e| e.summary()).collect();
    write_json(&out.join("eigenvalues.json"), &p.hash, &eigs)
}

fn analyze(args: &Args, p: &Problem, out: &Path) -> Result<()> {
    let sp = pipeline::spectral(p, args.n)?;
    let eigs: Vec<EigenSummary> = sp.eigs.iter().map(|e| e.summary()).collect();
    write_json(&out.join("eigenvalues.json"), &p.hash, &eigs)?;
    write_json(&out.join("partition.json"), &p.hash, &sp.partition)?;
    let rows: Vec<Vec<Cell>> = sp
        .sweep
        .iter()
        .map(|w| {
            vec![
                Cell::F(w.lambda),
                Cell::F(w.w_plus.0),
                Cell::F(w.w_plus.1),
                Cell::F(w.w_minus.0),
                Cell::F(w.w_minus.1),
                Cell::B(w.in_m_n(args.n)),
            ]
        })
        .collect();
    let cols = ["lambda", "ReW_plus", "ImW_plus", "ReW_minus", "ImW_minus", "in_M_n"];
    write_csv(&out.join("W_sweep.csv"), &p.hash, &cols, &rows)?;
    let f = to_c(&pipeline::sample_f(args.f.into(), &sp.oracle, &sp.eigs)?);
    let (_, td) = pipeline::calculus_for_tail(p, &sp, args.n, args.lambda_max.unwrap_or(0.0), &f, IDENTITY_TOL)?;
    let rows: Vec<Vec<Cell>> = td
        .lambda
        .iter()
        .zip(td.t.iter().zip(&td.s))
        .map(|(&l, (t, s))| {
            let mut r = vec![Cell::F(l)];
            for v in [t[0], t[1], s[0], s[1]] {
                r.push(Cell::F(v.re));
                r.push(Cell::F(v.im));
            }
            r
        })
        .collect();
    let cols = ["lambda", "ReT1", "ImT1", "ReT2", "ImT2", "ReS1", "ImS1", "ReS2", "ImS2"];
    write_csv(&out.join("transforms.csv"), &p.hash, &cols, &rows)
}

fn project(args: &Args, p: &Problem, out: &Path) -> Result<()> {
    let b = parse_intervals(&args.intervals)?;
    let sp = pipeline::spectral(p, args.n)?;
    let f = to_c(&pipeline::sample_f(args.f.into(), &sp.oracle, &sp.eigs)?);
    let (sc, _) = pipeline::calculus_for_tail(p, &sp, args.n, args.lambda_max.unwrap_or(0.0), &f, IDENTITY_TOL)?;
    let e = sc.spectral_projection(&b, &f)?;
    let oe = oracle_projection_c(&sp.oracle, &b, &f);
    // pointwise deviation on the scale of sup |f|
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let rows: Vec<Vec<Cell>> = sp
        .oracle
        .x
        .iter()
        .zip(e.iter().zip(&oe))
        .map(|(&x, (a, o))| {
            vec![Cell::F(x), Cell::F(a.re), Cell::F(a.im), Cell::F(o.re), Cell::F(o.im), Cell::F((a - o).norm() / scale)]
        })
        .collect();
    let cols = ["x", "Re_Ebf", "Im_Ebf", "Re_oracle", "Im_oracle", "deviation"];
    write_csv(&out.join("projection.csv"), &p.hash, &cols, &rows)
}

fn verify(args: &Args, p: &Problem, out: &Path) -> Result<bool> {
    let cfg = VerifyConfig { n: args.n, lambda_max: args.lambda_max.unwrap_or(0.0), seed: args.seed };
    let rep = run_suite(p, &cfg);
    for r in &rep.criteria {
        println!("{}", r.line());
    }
    write_json(&out.join("verify_report.json"), &p.hash, &rep)?;
    Ok(rep.all_pass)
}

fn run(args: &Args) -> Result<bool> {
    if let Ok(t) = std::env::var("SPECOP_THREADS") {
        let n: usize = t.parse().map_err(|_| SpecError::InvalidSpec(format!("SPECOP_THREADS: not a count: '{t}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SpecError::InvalidSpec(format!("SPECOP_THREADS: {e}")))?;
    }
    if args.n == 0 {
        return Err(SpecError::InvalidSpec("n: partition index must be at least 1".into()));
    }
    let p = load(args)?;
    std::fs::create_dir_all(&args.out).map_err(|e| SpecError::Output(format!("{}: {e}", args.out.display())))?;
    match args.cmd {
        Cmd::Analyze => analyze(args, &p, &args.out).map(|_| true),
        Cmd::Verify => verify(args, &p, &args.out),
        Cmd::Project => project(args, &p, &args.out).map(|_| true),
        Cmd::Eigen => eigen(args, &p, &args.out).map(|_| true),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let code = e.exit_code();
            let rep = ErrorReport { error: e.kind(), message: e.to_string(), exit_code: code };
            eprintln!("{}", serde_json::to_string(&rep).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(code as u8)
        }
    }
}
