//! The Solve → Estimate → Mark → Refine loop and its report.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarse::{CoarseEigenOptions, CoarseError, CoarseLevel};
use crate::estimator::{estimate, mark_dorfler, EstimatorError};
use crate::fem::FemError;
use crate::helmholtz::{ProjectionContext, ProjectionError};
use crate::mesh::{bisect, generate_domain, DomainSpec, MeshError, MeshHierarchy, TetMesh};
use crate::multilevel::HierarchyOperators;
use crate::phjd::{phjd_solve, residual, HistoryRow, MassSolver, SolveError, SolveOptions};
use crate::precond::{PrecondError, PrecondWorkspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSpec,
    /// Uniform bisection sweeps applied before the mesh becomes level 0.
    pub initial_refinements: usize,
    pub theta_mark: f64,
    /// Refinement stops once the interior edge count exceeds this.
    pub budget: usize,
    pub solver: SolveOptions,
    /// When positive, estimate the preconditioner contraction on every
    /// level with this many random samples.
    #[serde(default)]
    pub contraction_samples: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), AdaptiveError> {
        self.domain.validate()?;
        if !(self.theta_mark > 0.0 && self.theta_mark <= 1.0) {
            return Err(AdaptiveError::Config(format!(
                "theta-mark must lie in (0, 1], got {}",
                self.theta_mark
            )));
        }
        self.solver
            .validate()
            .map_err(|e| AdaptiveError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub dofs: usize,
    pub iters: usize,
    pub residual: f64,
    pub lambda: f64,
    pub estimator: f64,
    pub seconds: f64,
}

/// Per-level quantities that are not part of the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub tets: usize,
    /// `Σ_l |Ẽ_l|` over the hierarchy at this level.
    pub smoothing_edges: usize,
    pub contraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub level: usize,
    #[serde(flatten)]
    pub row: HistoryRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub version: String,
    pub rows: Vec<LevelRow>,
    pub diagnostics: Vec<LevelDiagnostics>,
    pub history: Vec<HistoryEntry>,
    pub coarse_lambda2: f64,
}

impl RunReport {
    fn new(config: RunConfig) -> Self {
        Self {
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows: Vec::new(),
            diagnostics: Vec::new(),
            history: Vec::new(),
            coarse_lambda2: f64::NAN,
        }
    }
}

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Coarse(#[from] CoarseError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error("level {level}: {source}")]
    Solve {
        level: usize,
        #[source]
        source: SolveError,
    },
}

/// A failed run keeps the rows completed before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub report: RunReport,
    pub error: AdaptiveError,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} completed levels)",
            self.error,
            self.report.rows.len()
        )
    }
}

impl std::error::Error for RunFailure {}

pub fn initial_mesh(domain: &DomainSpec, sweeps: usize) -> Result<TetMesh, MeshError> {
    let mut mesh = generate_domain(domain)?;
    for _ in 0..sweeps {
        let all: Vec<usize> = (0..mesh.num_tets()).collect();
        mesh = bisect(&mesh, &all)?;
    }
    Ok(mesh.as_root())
}

pub fn adaptive_loop(config: &RunConfig) -> Result<RunReport, Box<RunFailure>> {
    let mut report = RunReport::new(config.clone());
    match run(config, &mut report) {
        Ok(()) => Ok(report),
        Err(error) => Err(Box::new(RunFailure { report, error })),
    }
}

fn run(config: &RunConfig, report: &mut RunReport) -> Result<(), AdaptiveError> {
    config.validate()?;
    let start = Instant::now();
    let mut hierarchy =
        MeshHierarchy::new(initial_mesh(&config.domain, config.initial_refinements)?);
    let mut hops = HierarchyOperators::build(&hierarchy)?;
    let coarse = {
        let ctx = ProjectionContext::new(&hops, 0, 1e-12)?;
        let opts = CoarseEigenOptions {
            seed: config.solver.seed,
            ..CoarseEigenOptions::default()
        };
        CoarseLevel::new(hops.coarse(), &ctx, &opts)?
    };
    report.coarse_lambda2 = coarse.pair().lambda2;

    let mut lambda = coarse.pair().lambda1;
    let mut u = coarse.pair().u.clone();
    let (_, res) = residual(
        hops.coarse(),
        &MassSolver::new(&hops.coarse().m)
            .map_err(|source| AdaptiveError::Solve { level: 0, source })?,
        lambda,
        &u,
    )
    .map_err(|source| AdaptiveError::Solve { level: 0, source })?;
    let mut iters = 0;
    let mut residual_norm = res;
    let mut level_start = start;

    loop {
        let level = hierarchy.finest_index();
        let mesh = hierarchy.finest();
        let ops = hops.finest();
        let ind = estimate(mesh, ops, lambda, &u)?;
        let seconds = level_start.elapsed().as_secs_f64();
        let contraction = if config.contraction_samples > 0 && level > 0 {
            let ws = PrecondWorkspace::build(&hops, &coarse, config.solver.precond, lambda)?;
            let ctx = ProjectionContext::finest(&hops)?;
            Some(ws.measure_contraction(
                &ctx,
                &u,
                config.contraction_samples,
                8,
                config.solver.seed,
            )?)
        } else {
            None
        };
        report.rows.push(LevelRow {
            level,
            dofs: ops.num_edge_dofs(),
            iters,
            residual: residual_norm,
            lambda,
            estimator: ind.global(),
            seconds,
        });
        report.diagnostics.push(LevelDiagnostics {
            level,
            tets: mesh.num_tets(),
            smoothing_edges: hops.total_smoothing_edges(),
            contraction,
        });
        if ops.num_edge_dofs() > config.budget {
            return Ok(());
        }
        let marked = mark_dorfler(&ind, config.theta_mark)?;
        if marked.is_empty() {
            return Ok(());
        }

        level_start = Instant::now();
        let refined = bisect(mesh, &marked)?;
        hierarchy.extend(refined)?;
        hops.sync(&hierarchy)?;
        let next = hierarchy.finest_index();
        let seed = hops.prolong_edges(next - 1, next, &u);
        let (state, history) =
            phjd_solve(&hops, &coarse, &config.solver, Some(&seed)).map_err(|source| {
                if let SolveError::NotConverged { history, .. } = &source {
                    report
                        .history
                        .extend(history.iter().map(|&row| HistoryEntry { level: next, row }));
                }
                AdaptiveError::Solve {
                    level: next,
                    source,
                }
            })?;
        report
            .history
            .extend(history.iter().map(|&row| HistoryEntry { level: next, row }));
        iters = state.iteration - 1;
        lambda = state.lambda;
        u = state.u;
        residual_norm = state.residual_norm;
    }
}
