//! Discrete Helmholtz projection onto the b-orthogonal complement of the
//! discrete gradients, and the scalar Laplace solver it relies on.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::multilevel::HierarchyOperators;
use crate::sparse::{self, pcg, CsrMatrix};

/// Above this many interior nodes the scalar solve switches from a dense
/// factorization to multilevel-preconditioned CG.
pub const DIRECT_NODE_LIMIT: usize = 800;

const NODAL_DAMPING: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("scalar Laplace solve stalled after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("projection tolerance {0:e} outside (0, 1e-6]")]
    BadTolerance(f64),
    #[error("scalar Laplacian is not positive definite")]
    NotPositiveDefinite,
}

/// Solver for `Gᵀ M G p = f` on level `top` of a hierarchy, and the induced
/// projector `u ↦ u − G p`.
pub struct ProjectionContext<'a> {
    hops: &'a HierarchyOperators,
    top: usize,
    tol: f64,
    coarse: Option<Cholesky<f64, Dyn>>,
    direct: Option<Cholesky<f64, Dyn>>,
    diagonals: Vec<Vec<f64>>,
}

fn dense_cholesky(m: &CsrMatrix) -> Result<Option<Cholesky<f64, Dyn>>, ProjectionError> {
    if m.nrows() == 0 {
        return Ok(None);
    }
    Cholesky::new(m.to_dense())
        .map(Some)
        .ok_or(ProjectionError::NotPositiveDefinite)
}

fn chol_solve(c: &Option<Cholesky<f64, Dyn>>, rhs: &[f64]) -> Vec<f64> {
    match c {
        Some(c) => c
            .solve(&DVector::from_column_slice(rhs))
            .as_slice()
            .to_vec(),
        None => Vec::new(),
    }
}

impl<'a> ProjectionContext<'a> {
    /// Context for the finest level with the default tolerance `1e-12`.
    pub fn finest(hops: &'a HierarchyOperators) -> Result<Self, ProjectionError> {
        Self::new(hops, hops.finest_index(), 1e-12)
    }

    pub fn new(
        hops: &'a HierarchyOperators,
        top: usize,
        tol: f64,
    ) -> Result<Self, ProjectionError> {
        Self::with_direct_limit(hops, top, tol, DIRECT_NODE_LIMIT)
    }

    /// Like [`Self::new`] but factorizes level `top` directly only when it has
    /// at most `direct_limit` interior nodes.
    pub fn with_direct_limit(
        hops: &'a HierarchyOperators,
        top: usize,
        tol: f64,
        direct_limit: usize,
    ) -> Result<Self, ProjectionError> {
        if !(tol > 0.0 && tol <= 1e-6) {
            return Err(ProjectionError::BadTolerance(tol));
        }
        let top_nodes = hops.level(top).ops.num_node_dofs();
        let direct = if top_nodes <= direct_limit {
            dense_cholesky(&hops.level(top).ops.laplace)?
        } else {
            None
        };
        let coarse = if top > 0 || direct.is_none() {
            dense_cholesky(&hops.level(0).ops.laplace)?
        } else {
            None
        };
        let diagonals = (0..=top)
            .map(|l| hops.level(l).ops.laplace.diagonal())
            .collect();
        Ok(Self {
            hops,
            top,
            tol,
            coarse,
            direct,
            diagonals,
        })
    }

    pub fn level(&self) -> usize {
        self.top
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn uses_direct_solver(&self) -> bool {
        self.direct.is_some()
    }

    fn laplace(&self, l: usize) -> &CsrMatrix {
        &self.hops.level(l).ops.laplace
    }

    /// One symmetric local multilevel V-cycle: damped Jacobi on the new or
    /// changed nodes of each level before and after the coarse correction,
    /// exact solve on level 0.
    pub fn vcycle(&self, l: usize, r: &[f64]) -> Vec<f64> {
        if l == 0 {
            return chol_solve(&self.coarse, r);
        }
        let a = self.laplace(l);
        let diag = &self.diagonals[l];
        let smooth = &self.hops.level(l).smoothing_nodes;
        let mut x = vec![0.0; r.len()];
        for &i in smooth {
            x[i] = NODAL_DAMPING * r[i] / diag[i];
        }
        let mut res = r.to_vec();
        sparse::axpy(-1.0, &a.mul_vec(&x), &mut res);
        let pt = self.hops.level(l).nodal_prolong_t.as_ref().unwrap();
        let p = self.hops.level(l).nodal_prolong.as_ref().unwrap();
        let xc = self.vcycle(l - 1, &pt.mul_vec(&res));
        sparse::axpy(1.0, &p.mul_vec(&xc), &mut x);
        let ax = a.mul_vec(&x);
        let updates: Vec<(usize, f64)> = smooth
            .iter()
            .map(|&i| (i, NODAL_DAMPING * (r[i] - ax[i]) / diag[i]))
            .collect();
        for (i, d) in updates {
            x[i] += d;
        }
        x
    }

    pub fn max_iterations(&self) -> usize {
        let n = self.hops.level(self.top).ops.num_node_dofs() as f64;
        ((10.0 * n.sqrt()).ceil() as usize).max(50)
    }

    /// Solves `L_s p = rhs` on interior nodes; returns the solution and the
    /// number of preconditioned CG iterations (0 for the direct path).
    pub fn scalar_solve_counted(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize), ProjectionError> {
        if rhs.is_empty() {
            return Ok((Vec::new(), 0));
        }
        if self.direct.is_some() {
            return Ok((chol_solve(&self.direct, rhs), 0));
        }
        let a = self.laplace(self.top);
        let out = pcg(
            |v| a.mul_vec(v),
            |r| self.vcycle(self.top, r),
            rhs,
            self.tol,
            self.max_iterations(),
        );
        if !out.converged {
            return Err(ProjectionError::NotConverged {
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        Ok((out.solution, out.iterations))
    }

    pub fn scalar_solve(&self, rhs: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        self.scalar_solve_counted(rhs).map(|(p, _)| p)
    }

    /// `u − G p` with `Gᵀ M G p = Gᵀ M u`.
    pub fn project_div_free(&self, u: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        let ops = &self.hops.level(self.top).ops;
        if ops.num_node_dofs() == 0 {
            return Ok(u.to_vec());
        }
        let rhs = ops.g.mul_vec_transpose(&ops.m.mul_vec(u));
        let p = self.scalar_solve(&rhs)?;
        let mut out = u.to_vec();
        sparse::axpy(-1.0, &ops.g.mul_vec(&p), &mut out);
        Ok(out)
    }

    /// Projection that additionally removes the span of `harmonics`, a set
    /// of M-orthonormal divergence-free fields. Domains whose boundary is not
    /// connected need this to exclude discrete harmonic fields; the built-in
    /// domains pass an empty slice.
    pub fn project_with_harmonics(
        &self,
        u: &[f64],
        harmonics: &[Vec<f64>],
    ) -> Result<Vec<f64>, ProjectionError> {
        let m = &self.hops.level(self.top).ops.m;
        let mut out = self.project_div_free(u)?;
        for h in harmonics {
            let c = sparse::dot(h, &m.mul_vec(&out));
            sparse::axpy(-c, h, &mut out);
        }
        Ok(out)
    }

    /// `‖Gᵀ M u‖`, the discrete divergence of `u`.
    pub fn divergence_norm(&self, u: &[f64]) -> f64 {
        let ops = &self.hops.level(self.top).ops;
        sparse::norm(&ops.g.mul_vec_transpose(&ops.m.mul_vec(u)))
    }
}

/// Dense check helper: the exact projector matrix `I − G (GᵀMG)⁻¹ GᵀM`.
pub fn dense_projector(g: &CsrMatrix, m: &CsrMatrix) -> DMatrix<f64> {
    let gd = g.to_dense();
    let md = m.to_dense();
    let n = md.nrows();
    if gd.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let l = gd.transpose() * &md * &gd;
    let chol = Cholesky::new(l).expect("scalar Laplacian is SPD");
    let p = chol.solve(&(gd.transpose() * &md));
    DMatrix::identity(n, n) - gd * p
}
