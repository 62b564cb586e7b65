//! Command-line driver: presets, flag overrides and report files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::adaptive::{adaptive_loop, initial_mesh, AdaptiveError, RunConfig, RunReport};
use crate::fem::assemble;
use crate::mesh::DomainSpec;
use crate::phjd::SolveOptions;
use crate::precond::{PrecondConfig, SmootherKind};

pub const REPORT_HEADER: &str = "level,dofs,iters,residual,lambda,estimator,seconds";
pub const HISTORY_HEADER: &str =
    "level,iteration,lambda,residual,correction_dot,divergence,orthonormality,basis_size";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainKind {
    Fichera,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fichera,
    BoxAnalytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmootherArg {
    Jacobi,
    Gs,
}

#[derive(Debug, Parser)]
#[command(
    name = "phjd",
    version,
    about = "Adaptive multilevel PHJD eigensolver for the Maxwell eigenproblem"
)]
pub struct Args {
    /// Start from a named experiment configuration; other flags override it.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum)]
    pub domain: Option<DomainKind>,
    /// Cells along x (Fichera: cells per half side).
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub nz: Option<usize>,
    /// Uniform bisection sweeps before the coarse level.
    #[arg(long)]
    pub initial_refinements: Option<usize>,
    #[arg(long)]
    pub theta_mark: Option<f64>,
    /// Stop once the interior edge count exceeds this.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_enum)]
    pub smoother: Option<SmootherArg>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub restart: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Preconditioner contraction samples per level (0 disables).
    #[arg(long)]
    pub contraction_samples: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write the level-0 matrices A, M, G in Matrix Market format.
    #[arg(long)]
    pub export_matrices: bool,
}

pub fn preset(p: Preset) -> RunConfig {
    match p {
        Preset::Fichera => RunConfig {
            domain: DomainSpec::Fichera {
                side: 2.0 * PI,
                n: 1,
            },
            initial_refinements: 5,
            theta_mark: 0.5,
            budget: 10_000,
            solver: SolveOptions::default(),
            contraction_samples: 0,
        },
        Preset::BoxAnalytic => RunConfig {
            domain: DomainSpec::Box {
                a: PI,
                b: 1.1 * PI,
                c: 1.2 * PI,
                nx: 2,
                ny: 2,
                nz: 2,
            },
            initial_refinements: 3,
            theta_mark: 1.0,
            budget: 20_000,
            solver: SolveOptions::default(),
            contraction_samples: 0,
        },
    }
}

/// Resolves flags into a run configuration.
pub fn config_from_args(args: &Args) -> Result<RunConfig, String> {
    let base = match (args.preset, args.domain) {
        (Some(p), _) => preset(p),
        (None, Some(DomainKind::Box)) => preset(Preset::BoxAnalytic),
        (None, _) => preset(Preset::Fichera),
    };
    let mut cfg = base;
    match (args.domain, &mut cfg.domain) {
        (Some(DomainKind::Box), DomainSpec::Fichera { .. }) => {
            cfg.domain = preset(Preset::BoxAnalytic).domain
        }
        (Some(DomainKind::Fichera), DomainSpec::Box { .. }) => {
            cfg.domain = preset(Preset::Fichera).domain
        }
        _ => {}
    }
    match &mut cfg.domain {
        DomainSpec::Box { nx, ny, nz, .. } => {
            *nx = args.nx.unwrap_or(*nx);
            *ny = args.ny.unwrap_or(*ny);
            *nz = args.nz.unwrap_or(*nz);
        }
        DomainSpec::Fichera { n, .. } => {
            if args.ny.is_some() || args.nz.is_some() {
                return Err("--ny/--nz apply to the box domain only".into());
            }
            *n = args.nx.unwrap_or(*n);
        }
    }
    if let Some(v) = args.initial_refinements {
        cfg.initial_refinements = v;
    }
    if let Some(v) = args.theta_mark {
        cfg.theta_mark = v;
    }
    if let Some(v) = args.budget {
        cfg.budget = v;
    }
    if let Some(v) = args.contraction_samples {
        cfg.contraction_samples = v;
    }
    let s = &mut cfg.solver;
    if let Some(v) = args.smoother {
        s.precond.smoother = match v {
            SmootherArg::Jacobi => SmootherKind::Jacobi,
            SmootherArg::Gs => SmootherKind::GaussSeidel,
        };
    }
    s.precond = PrecondConfig {
        gamma: args.gamma.unwrap_or(s.precond.gamma),
        ..s.precond
    };
    s.tol = args.tol.unwrap_or(s.tol);
    s.restart = args.restart.unwrap_or(s.restart);
    s.seed = args.seed.unwrap_or(s.seed);
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn report_csv(report: &RunReport) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{},{:e},{:.6}",
            r.level, r.dofs, r.iters, r.residual, r.lambda, r.estimator, r.seconds
        );
    }
    s
}

pub fn history_csv(report: &RunReport) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for h in &report.history {
        let r = &h.row;
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e},{:e},{:e},{}",
            h.level,
            r.iteration,
            r.lambda,
            r.residual,
            r.correction_dot,
            r.divergence,
            r.orthonormality,
            r.basis_size
        );
    }
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    status: &'a str,
    error: Option<String>,
    #[serde(flatten)]
    report: &'a RunReport,
}

pub fn summary_json(report: &RunReport, error: Option<&dyn std::error::Error>) -> String {
    let summary = Summary {
        status: if error.is_none() {
            "converged"
        } else {
            "failed"
        },
        error: error.map(|e| e.to_string()),
        report,
    };
    serde_json::to_string_pretty(&summary).expect("report serializes")
}

fn write_outputs(
    dir: &Path,
    report: &RunReport,
    error: Option<&dyn std::error::Error>,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), report_csv(report))?;
    std::fs::write(dir.join("history.csv"), history_csv(report))?;
    std::fs::write(dir.join("summary.json"), summary_json(report, error))?;
    Ok(())
}

fn export_matrices(dir: &Path, cfg: &RunConfig) -> Result<(), String> {
    let mesh = initial_mesh(&cfg.domain, cfg.initial_refinements).map_err(|e| e.to_string())?;
    let ops = assemble(&mesh).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    for (name, m) in [("A", &ops.a), ("M", &ops.m), ("G", &ops.g)] {
        std::fs::write(dir.join(format!("{name}_level0.mtx")), m.to_matrix_market())
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Runs the driver on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on configuration errors, 2 if any level failed.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let cfg = match config_from_args(&args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    if args.export_matrices {
        if let Err(msg) = export_matrices(&args.out_dir, &cfg) {
            eprintln!("error: matrix export failed: {msg}");
            return 2;
        }
    }
    let (report, failure) = match adaptive_loop(&cfg) {
        Ok(r) => (r, None),
        Err(f) => {
            let f = *f;
            (f.report, Some(f.error))
        }
    };
    if let Some(AdaptiveError::Config(msg)) = &failure {
        eprintln!("error: {msg}");
        return 1;
    }
    let err_ref = failure.as_ref().map(|e| e as &dyn std::error::Error);
    if let Err(e) = write_outputs(&args.out_dir, &report, err_ref) {
        eprintln!(
            "error: cannot write reports to {}: {e}",
            args.out_dir.display()
        );
        return 2;
    }
    for r in &report.rows {
        println!(
            "level {:>3}  dofs {:>8}  iters {:>3}  residual {:.2e}  lambda {:.9}  estimator {:.4e}",
            r.level, r.dofs, r.iters, r.residual, r.lambda, r.estimator
        );
    }
    match failure {
        None => 0,
        Some(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
