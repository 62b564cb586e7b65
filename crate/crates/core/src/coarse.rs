//! Level-0 eigenpair and the deflated shifted coarse solve used by the
//! multilevel preconditioner.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dense::{pencil_eigen, PencilEigen};
use crate::fem::LevelOperators;
use crate::helmholtz::{ProjectionContext, ProjectionError};
use crate::sparse::{self, pcg, CsrMatrix};

/// At or below this many coarse edge dofs the coarse level is handled by a
/// full dense generalized eigendecomposition.
pub const DENSE_COARSE_LIMIT: usize = 1500;

/// Eigenvalues below this fraction of the largest one count as the discrete
/// gradient kernel.
const KERNEL_THRESHOLD: f64 = 1e-8;

const SIMPLE_GAP: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CoarseError {
    #[error("principal eigenvalue not simple: lambda1 = {lambda1}, lambda2 = {lambda2}")]
    NotSimple { lambda1: f64, lambda2: f64 },
    #[error("coarse pencil has fewer than two nonzero eigenvalues")]
    TooFewModes,
    #[error("coarse mass matrix is not positive definite")]
    SingularMass,
    #[error("shift {shift} is not below the second coarse eigenvalue {lambda2}")]
    ShiftTooLarge { shift: f64, lambda2: f64 },
    #[error(
        "coarse solve did not converge: {iterations} iterations, relative residual {residual:e}"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone)]
pub struct CoarseEigenOptions {
    pub dense_limit: usize,
    /// Relative eigenvalue change at which subspace iteration stops.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Optional first start vector for subspace iteration.
    pub start: Option<Vec<f64>>,
}

impl Default for CoarseEigenOptions {
    fn default() -> Self {
        Self {
            dense_limit: DENSE_COARSE_LIMIT,
            tol: 1e-12,
            max_iterations: 500,
            seed: 0,
            start: None,
        }
    }
}

/// Smallest nonzero eigenpair of the coarse pencil, `u` b-normalized.
#[derive(Debug, Clone)]
pub struct CoarseEigenpair {
    pub lambda1: f64,
    pub lambda2: f64,
    pub u: Vec<f64>,
    /// Whether the start vector had to be replaced by a random one.
    pub reseeded: bool,
}

fn fix_sign(u: &mut [f64]) {
    let k = (0..u.len()).max_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()));
    if let Some(k) = k {
        if u[k] < 0.0 {
            sparse::scale(-1.0, u);
        }
    }
}

pub(crate) fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn kernel_dimension(values: &[f64]) -> usize {
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values
        .iter()
        .take_while(|&&v| v <= KERNEL_THRESHOLD * top)
        .count()
}

fn check_simple(lambda1: f64, lambda2: f64) -> Result<(), CoarseError> {
    if (lambda2 - lambda1).abs() <= SIMPLE_GAP * lambda1.abs().max(f64::MIN_POSITIVE) {
        return Err(CoarseError::NotSimple { lambda1, lambda2 });
    }
    Ok(())
}

fn dense_spectrum(ops: &LevelOperators) -> Result<(PencilEigen, usize), CoarseError> {
    let eig =
        pencil_eigen(&ops.a.to_dense(), &ops.m.to_dense()).ok_or(CoarseError::SingularMass)?;
    let k = kernel_dimension(&eig.values);
    if eig.values.len() < k + 2 {
        return Err(CoarseError::TooFewModes);
    }
    Ok((eig, k))
}

fn pair_from_spectrum(eig: &PencilEigen, k: usize) -> CoarseEigenpair {
    let mut u = eig.vector(k);
    fix_sign(&mut u);
    CoarseEigenpair {
        lambda1: eig.values[k],
        lambda2: eig.values[k + 1],
        u,
        reseeded: false,
    }
}

/// M-orthonormalizes `vs` in place (twice-iterated Gram–Schmidt), dropping
/// vectors whose norm collapses.
fn m_orthonormalize(m: &CsrMatrix, vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        let n0 = sparse::dot(&v, &m.mul_vec(&v)).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = sparse::dot(q, &m.mul_vec(&v));
                sparse::axpy(-c, q, &mut v);
            }
        }
        let n1 = sparse::dot(&v, &m.mul_vec(&v)).sqrt();
        if n1 > 1e-10 * n0 && n1 > 0.0 {
            sparse::scale(1.0 / n1, &mut v);
            out.push(v);
        }
    }
    out
}

/// Smallest nonzero eigenpair of `A x = λ M x` on the coarse level, with an
/// estimate of the next eigenvalue.
///
/// Small problems use a dense generalized eigensolve. Larger ones run
/// inverse subspace iteration on a block of three vectors, each iterate
/// Helmholtz-projected so the gradient kernel never enters.
pub fn coarse_eigensolve(
    ops: &LevelOperators,
    ctx: &ProjectionContext<'_>,
    opts: &CoarseEigenOptions,
) -> Result<CoarseEigenpair, CoarseError> {
    let n = ops.num_edge_dofs();
    if n <= opts.dense_limit && opts.start.is_none() {
        let (eig, k) = dense_spectrum(ops)?;
        let pair = pair_from_spectrum(&eig, k);
        check_simple(pair.lambda1, pair.lambda2)?;
        return Ok(pair);
    }
    subspace_iteration(ops, ctx, opts)
}

fn subspace_iteration(
    ops: &LevelOperators,
    ctx: &ProjectionContext<'_>,
    opts: &CoarseEigenOptions,
) -> Result<CoarseEigenpair, CoarseError> {
    const BLOCK: usize = 3;
    let n = ops.num_edge_dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut reseeded = false;
    let mut start = Vec::with_capacity(BLOCK);
    if let Some(s) = &opts.start {
        let p = ctx.project_div_free(s)?;
        let before = sparse::norm(s);
        if sparse::norm(&p) > 1e-8 * before && before > 0.0 {
            start.push(p);
        } else {
            reseeded = true;
        }
    }
    while start.len() < BLOCK {
        start.push(ctx.project_div_free(&random_vector(&mut rng, n))?);
    }
    let mut x = m_orthonormalize(&ops.m, start);
    if x.len() < 2 {
        return Err(CoarseError::TooFewModes);
    }

    let diag = ops.a.diagonal();
    let max_cg = (20 * n).max(200);
    let mut prev = [f64::INFINITY; 2];
    for _ in 0..opts.max_iterations {
        let mut y = Vec::with_capacity(x.len());
        for xi in &x {
            let rhs = ops.m.mul_vec(xi);
            // The right-hand side is consistent because `xi` is
            // divergence-free; any kernel drift is removed by projecting.
            let out = pcg(
                |v| ops.a.mul_vec(v),
                |r| r.iter().zip(&diag).map(|(ri, d)| ri / d).collect(),
                &rhs,
                1e-13,
                max_cg,
            );
            if !out.converged && out.relative_residual > 1e-9 {
                return Err(CoarseError::NotConverged {
                    iterations: out.iterations,
                    residual: out.relative_residual,
                });
            }
            y.push(ctx.project_div_free(&out.solution)?);
        }
        let y = m_orthonormalize(&ops.m, y);
        let k = y.len();
        if k < 2 {
            return Err(CoarseError::TooFewModes);
        }
        let ay: Vec<Vec<f64>> = y.iter().map(|v| ops.a.mul_vec(v)).collect();
        let h = DMatrix::from_fn(k, k, |i, j| sparse::dot(&y[i], &ay[j]));
        let eig = pencil_eigen(&h, &DMatrix::identity(k, k)).expect("identity Gram matrix");
        x = (0..k)
            .map(|c| {
                let mut v = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    sparse::axpy(eig.vectors[(i, c)], yi, &mut v);
                }
                v
            })
            .collect();
        let cur = [eig.values[0], eig.values[1]];
        let done = (0..2).all(|i| (cur[i] - prev[i]).abs() <= opts.tol * cur[i].abs());
        prev = cur;
        if done {
            break;
        }
    }
    let mut u = x.swap_remove(0);
    let nu = ops.mass_inner(&u, &u).sqrt();
    sparse::scale(1.0 / nu, &mut u);
    fix_sign(&mut u);
    let lambda1 = sparse::dot(&u, &ops.a.mul_vec(&u));
    check_simple(lambda1, prev[1])?;
    Ok(CoarseEigenpair {
        lambda1,
        lambda2: prev[1],
        u,
        reseeded,
    })
}

enum Deflation {
    /// Complement eigenpairs of the coarse pencil: every mode except the
    /// gradient kernel and the principal one.
    Spectral {
        vectors: DMatrix<f64>,
        values: Vec<f64>,
    },
    /// Projected CG on the complement.
    Iterative {
        a: CsrMatrix,
        m: CsrMatrix,
        g: CsrMatrix,
        laplace: Option<Cholesky<f64, Dyn>>,
        tol: f64,
    },
}

/// Coarse eigen data plus the solver for the shifted coarse problem deflated
/// by the gradients and the principal coarse eigenvector.
pub struct CoarseLevel {
    pair: CoarseEigenpair,
    deflation: Deflation,
}

impl std::fmt::Debug for CoarseLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoarseLevel")
            .field("lambda1", &self.pair.lambda1)
            .field("lambda2", &self.pair.lambda2)
            .field("spectral", &self.is_spectral())
            .finish()
    }
}

impl CoarseLevel {
    /// Computes the coarse eigenpair and prepares the deflated solver.
    /// `ctx` must be a projection context on level 0.
    pub fn new(
        ops: &LevelOperators,
        ctx: &ProjectionContext<'_>,
        opts: &CoarseEigenOptions,
    ) -> Result<Self, CoarseError> {
        if ops.num_edge_dofs() <= opts.dense_limit && opts.start.is_none() {
            let (eig, k) = dense_spectrum(ops)?;
            let pair = pair_from_spectrum(&eig, k);
            check_simple(pair.lambda1, pair.lambda2)?;
            let vectors = eig
                .vectors
                .columns(k + 1, eig.values.len() - k - 1)
                .into_owned();
            let values = eig.values[k + 1..].to_vec();
            return Ok(Self {
                pair,
                deflation: Deflation::Spectral { vectors, values },
            });
        }
        let pair = coarse_eigensolve(ops, ctx, opts)?;
        Self::iterative(ops, pair, 1e-12)
    }

    /// Iterative deflated solver around a given eigenpair.
    pub fn iterative(
        ops: &LevelOperators,
        pair: CoarseEigenpair,
        tol: f64,
    ) -> Result<Self, CoarseError> {
        let laplace = if ops.num_node_dofs() == 0 {
            None
        } else {
            Some(
                Cholesky::new(ops.laplace.to_dense())
                    .ok_or(ProjectionError::NotPositiveDefinite)?,
            )
        };
        Ok(Self {
            pair,
            deflation: Deflation::Iterative {
                a: ops.a.clone(),
                m: ops.m.clone(),
                g: ops.g.clone(),
                laplace,
                tol,
            },
        })
    }

    pub fn pair(&self) -> &CoarseEigenpair {
        &self.pair
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.deflation, Deflation::Spectral { .. })
    }

    pub fn num_dofs(&self) -> usize {
        self.pair.u.len()
    }

    /// Solves the shifted coarse problem on the complement of the gradients
    /// and `u_{1,0}`, for a covector right-hand side `r`.
    pub fn solve(&self, r: &[f64], shift: f64) -> Result<Vec<f64>, CoarseError> {
        match &self.deflation {
            Deflation::Spectral { vectors, values } => {
                if shift >= values[0] {
                    return Err(CoarseError::ShiftTooLarge {
                        shift,
                        lambda2: values[0],
                    });
                }
                let mut c = vectors.tr_mul(&DVector::from_column_slice(r));
                for (ci, v) in c.iter_mut().zip(values) {
                    *ci /= v - shift;
                }
                Ok((vectors * c).as_slice().to_vec())
            }
            Deflation::Iterative {
                a,
                m,
                g,
                laplace,
                tol,
            } => {
                let u = &self.pair.u;
                let mu = m.mul_vec(u);
                let project = |x: &[f64]| -> Vec<f64> {
                    let mut out = x.to_vec();
                    if let Some(ch) = laplace {
                        let rhs = g.mul_vec_transpose(&m.mul_vec(x));
                        let p = ch.solve(&DVector::from_column_slice(&rhs));
                        sparse::axpy(-1.0, &g.mul_vec(p.as_slice()), &mut out);
                    }
                    let c = sparse::dot(&mu, &out);
                    sparse::axpy(-c, u, &mut out);
                    out
                };
                let project_t = |y: &[f64]| -> Vec<f64> {
                    let mut out = y.to_vec();
                    if let Some(ch) = laplace {
                        let p = ch.solve(&DVector::from_column_slice(&g.mul_vec_transpose(y)));
                        sparse::axpy(-1.0, &m.mul_vec(&g.mul_vec(p.as_slice())), &mut out);
                    }
                    let c = sparse::dot(u, &out);
                    sparse::axpy(-c, &mu, &mut out);
                    out
                };
                let rhs = project_t(r);
                let n = r.len();
                let out = pcg(
                    |v| {
                        let pv = project(v);
                        let mut av = a.mul_vec(&pv);
                        sparse::axpy(-shift, &m.mul_vec(&pv), &mut av);
                        project_t(&av)
                    },
                    |z| z.to_vec(),
                    &rhs,
                    *tol,
                    (20 * n).max(200),
                );
                if !out.converged {
                    if out.iterations < (20 * n).max(200) && out.relative_residual > *tol {
                        return Err(CoarseError::ShiftTooLarge {
                            shift,
                            lambda2: self.pair.lambda2,
                        });
                    }
                    return Err(CoarseError::NotConverged {
                        iterations: out.iterations,
                        residual: out.relative_residual,
                    });
                }
                Ok(project(&out.solution))
            }
        }
    }
}
