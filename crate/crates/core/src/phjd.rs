//! Preconditioned Helmholtz–Jacobi–Davidson iteration for the smallest
//! nonzero Maxwell eigenpair on the finest level of a hierarchy.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarse::random_vector;
pub use crate::coarse::{coarse_eigensolve, CoarseEigenOptions, CoarseEigenpair, CoarseLevel};
use crate::dense::{pencil_eigen, refine_smallest};
use crate::fem::LevelOperators;
use crate::helmholtz::{ProjectionContext, ProjectionError};
use crate::multilevel::HierarchyOperators;
use crate::precond::{PrecondConfig, PrecondError, PrecondWorkspace};
use crate::sparse::{self, pcg, CsrMatrix};

/// Mass systems up to this size are factorized densely.
pub const MASS_DIRECT_LIMIT: usize = 2000;

const COLLAPSE: f64 = 1e-12;

/// Divergence allowed on a new basis vector before it is projected again.
const DIV_RECHECK: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub restart: usize,
    pub precond: PrecondConfig,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 100,
            restart: 20,
            precond: PrecondConfig::default(),
            seed: 0,
        }
    }
}

/// One outer iteration. The correction columns describe the vector added to
/// the search space at this iteration and are zero on the final row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub lambda: f64,
    pub residual: f64,
    /// `|b(e, u)|` after deflating the preconditioned residual.
    pub correction_dot: f64,
    /// `‖GᵀM t‖` of the appended search direction.
    pub divergence: f64,
    /// Max deviation of the basis Gram matrix from the identity.
    pub orthonormality: f64,
    pub basis_size: usize,
}

#[derive(Debug, Clone)]
pub struct EigenState {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub iteration: usize,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver options: {0}")]
    BadOptions(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<HistoryRow>,
    },
    #[error("search space stagnated at iteration {0}")]
    Stagnation(usize),
    #[error("mass solve failed: {0}")]
    Mass(String),
    #[error("seed vector has the wrong length or lies in the gradient space")]
    BadSeed,
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::BadOptions(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.restart < 3 {
            return Err(SolveError::BadOptions(format!(
                "restart must be at least 3, got {}",
                self.restart
            )));
        }
        if !(self.precond.gamma > 0.0 && self.precond.gamma < 1.0) {
            return Err(SolveError::BadOptions(format!(
                "gamma must lie in (0, 1), got {}",
                self.precond.gamma
            )));
        }
        Ok(())
    }
}

/// Solves `M x = f`: dense Cholesky for small systems, Jacobi-preconditioned
/// CG to `1e−12` otherwise.
pub struct MassSolver<'a> {
    m: &'a CsrMatrix,
    direct: Option<Cholesky<f64, Dyn>>,
    diag: Vec<f64>,
}

impl<'a> MassSolver<'a> {
    pub fn new(m: &'a CsrMatrix) -> Result<Self, SolveError> {
        let direct = if m.nrows() <= MASS_DIRECT_LIMIT && m.nrows() > 0 {
            Some(
                Cholesky::new(m.to_dense())
                    .ok_or_else(|| SolveError::Mass("not positive definite".into()))?,
            )
        } else {
            None
        };
        Ok(Self {
            m,
            direct,
            diag: m.diagonal(),
        })
    }

    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>, SolveError> {
        if let Some(c) = &self.direct {
            return Ok(c.solve(&DVector::from_column_slice(f)).as_slice().to_vec());
        }
        let out = pcg(
            |v| self.m.mul_vec(v),
            |r| r.iter().zip(&self.diag).map(|(a, d)| a / d).collect(),
            f,
            1e-12,
            1000,
        );
        if !out.converged {
            return Err(SolveError::Mass(format!(
                "CG stalled at relative residual {:e}",
                out.relative_residual
            )));
        }
        Ok(out.solution)
    }
}

/// Residual covector `ĝ = (λM − A)u` and its dual norm `sqrt(ĝᵀ M⁻¹ ĝ)`.
pub fn residual(
    ops: &LevelOperators,
    mass: &MassSolver<'_>,
    lambda: f64,
    u: &[f64],
) -> Result<(Vec<f64>, f64), SolveError> {
    let mut g = ops.m.mul_vec(u);
    sparse::scale(lambda, &mut g);
    sparse::axpy(-1.0, &ops.a.mul_vec(u), &mut g);
    let w = mass.solve(&g)?;
    Ok((g.clone(), sparse::dot(&g, &w).max(0.0).sqrt()))
}

/// Smallest eigenpair of the projected pencil `(VᵀAV, VᵀMV)`; returns the
/// Ritz value and the coefficients in the basis.
///
/// # Panics
/// If `basis` is empty or its mass Gram matrix is singular.
pub fn rayleigh_ritz(basis: &[Vec<f64>], a: &CsrMatrix, m: &CsrMatrix) -> (f64, Vec<f64>) {
    assert!(!basis.is_empty(), "Rayleigh–Ritz needs a nonempty basis");
    let av: Vec<Vec<f64>> = basis.iter().map(|v| a.mul_vec(v)).collect();
    let mv: Vec<Vec<f64>> = basis.iter().map(|v| m.mul_vec(v)).collect();
    ritz_from_products(basis, &av, &mv)
}

fn ritz_from_products(basis: &[Vec<f64>], av: &[Vec<f64>], mv: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let k = basis.len();
    let ha = DMatrix::from_fn(k, k, |i, j| sparse::dot(&basis[i], &av[j]));
    let hm = DMatrix::from_fn(k, k, |i, j| sparse::dot(&basis[i], &mv[j]));
    let ha = (&ha + ha.transpose()) * 0.5;
    let hm = (&hm + hm.transpose()) * 0.5;
    let eig = pencil_eigen(&ha, &hm).expect("basis mass Gram matrix must be positive definite");
    refine_smallest(&ha, &hm, eig.values[0], eig.vector(0))
}

fn combine(basis: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; basis[0].len()];
    for (v, ci) in basis.iter().zip(c) {
        sparse::axpy(*ci, v, &mut u);
    }
    u
}

/// Search space kept M-orthonormal, with cached `A v` and `M v`.
struct SearchSpace {
    basis: Vec<Vec<f64>>,
    av: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
}

impl SearchSpace {
    fn new() -> Self {
        Self {
            basis: Vec::new(),
            av: Vec::new(),
            mv: Vec::new(),
        }
    }

    /// Twice-iterated Gram–Schmidt of `t` against the basis. Returns `false`
    /// (leaving the space unchanged) if the norm collapses.
    fn try_push(&mut self, ops: &LevelOperators, mut t: Vec<f64>) -> bool {
        let n0 = ops.mass_inner(&t, &t).sqrt();
        if !(n0 > 0.0) {
            return false;
        }
        for _ in 0..2 {
            for (q, mq) in self.basis.iter().zip(&self.mv) {
                let c = sparse::dot(mq, &t);
                sparse::axpy(-c, q, &mut t);
            }
        }
        let mt = ops.m.mul_vec(&t);
        let n1 = sparse::dot(&t, &mt).max(0.0).sqrt();
        if n1 <= COLLAPSE * n0 {
            return false;
        }
        sparse::scale(1.0 / n1, &mut t);
        let mut mt = mt;
        sparse::scale(1.0 / n1, &mut mt);
        self.av.push(ops.a.mul_vec(&t));
        self.mv.push(mt);
        self.basis.push(t);
        true
    }

    fn pop(&mut self) -> Vec<f64> {
        self.av.pop();
        self.mv.pop();
        self.basis.pop().expect("nonempty search space")
    }

    fn reset_to(&mut self, ops: &LevelOperators, u: Vec<f64>) {
        *self = Self::new();
        let ok = self.try_push(ops, u);
        debug_assert!(ok);
    }

    fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, mi) in self.mv.iter().enumerate() {
            for (j, v) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((sparse::dot(mi, v) - target).abs());
            }
        }
        worst
    }
}

fn normalized(ops: &LevelOperators, mut u: Vec<f64>) -> Vec<f64> {
    let n = ops.mass_inner(&u, &u).sqrt();
    sparse::scale(1.0 / n, &mut u);
    u
}

fn rayleigh_quotient(ops: &LevelOperators, u: &[f64]) -> f64 {
    sparse::dot(u, &ops.a.mul_vec(u)) / ops.mass_inner(u, u)
}

/// Runs the outer iteration on the finest level of `hops`.
///
/// `seed` is a starting vector on that level (typically the previous level's
/// eigenvector prolonged); without one the coarse eigenvector is prolonged.
/// On success the returned state satisfies `‖r‖_b < opts.tol`.
pub fn phjd_solve(
    hops: &HierarchyOperators,
    coarse: &CoarseLevel,
    opts: &SolveOptions,
    seed: Option<&[f64]>,
) -> Result<(EigenState, Vec<HistoryRow>), SolveError> {
    opts.validate()?;
    let top = hops.finest_index();
    let ops = hops.finest();
    let n = ops.num_edge_dofs();
    let ctx = ProjectionContext::finest(hops)?;
    let mass = MassSolver::new(&ops.m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let u0 = match seed {
        Some(s) if s.len() == n => s.to_vec(),
        Some(_) => return Err(SolveError::BadSeed),
        None => hops.prolong_edges(0, top, &coarse.pair().u),
    };
    let u1 = ctx.project_div_free(&u0)?;
    if !(ops.mass_inner(&u1, &u1).sqrt() > COLLAPSE * ops.mass_inner(&u0, &u0).sqrt()) {
        return Err(SolveError::BadSeed);
    }
    let mut u = normalized(ops, u1);
    let mut lambda = rayleigh_quotient(ops, &u);
    let mut space = SearchSpace::new();
    space.reset_to(ops, u.clone());

    let mut history = Vec::new();
    let mut j = 1;
    loop {
        let (g, res) = residual(ops, &mass, lambda, &u)?;
        let mut row = HistoryRow {
            iteration: j,
            lambda,
            residual: res,
            correction_dot: 0.0,
            divergence: 0.0,
            orthonormality: space.orthonormality_error(),
            basis_size: space.basis.len(),
        };
        if res < opts.tol {
            history.push(row);
            return Ok((
                EigenState {
                    lambda,
                    u,
                    basis: space.basis,
                    residual_norm: res,
                    iteration: j,
                },
                history,
            ));
        }
        if j > opts.max_iterations {
            history.push(row);
            return Err(SolveError::NotConverged {
                iterations: j - 1,
                residual: res,
                history,
            });
        }

        let ws = PrecondWorkspace::build(hops, coarse, opts.precond, lambda)?;
        let mut e = ws.apply(&g)?;
        let mu = ops.m.mul_vec(&u);
        let c = sparse::dot(&mu, &e);
        sparse::axpy(-c, &u, &mut e);
        let ne = ops.mass_inner(&e, &e).sqrt();
        row.correction_dot = if ne > 0.0 {
            sparse::dot(&mu, &e).abs() / ne
        } else {
            0.0
        };
        let t = ctx.project_div_free(&e)?;

        if space.basis.len() >= opts.restart {
            space.reset_to(ops, u.clone());
        }
        if !space.try_push(ops, t) {
            let r = ctx.project_div_free(&random_vector(&mut rng, n))?;
            if !space.try_push(ops, r) {
                return Err(SolveError::Stagnation(j));
            }
        }
        // Gram–Schmidt cancellation can magnify the small divergence left by
        // the projection; one more projection of the new vector removes it.
        if ctx.divergence_norm(space.basis.last().unwrap()) > DIV_RECHECK {
            let b = space.pop();
            if !space.try_push(ops, ctx.project_div_free(&b)?) {
                return Err(SolveError::Stagnation(j));
            }
        }
        row.divergence = ctx.divergence_norm(space.basis.last().unwrap());
        history.push(row);

        let (_, coef) = ritz_from_products(&space.basis, &space.av, &space.mv);
        u = normalized(ops, combine(&space.basis, &coef));
        lambda = rayleigh_quotient(ops, &u);
        j += 1;
    }
}
