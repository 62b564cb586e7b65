//! Shifted local multilevel preconditioner: one coarse-to-fine multiplicative
//! sweep with a deflated exact solve on level 0 and damped Jacobi or
//! Gauss–Seidel relaxation on the new and changed edges of every finer level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarse::{random_vector, CoarseError, CoarseLevel};
use crate::helmholtz::{ProjectionContext, ProjectionError};
use crate::multilevel::HierarchyOperators;
use crate::sparse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    Jacobi,
    GaussSeidel,
}

impl std::str::FromStr for SmootherKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jacobi" => Ok(Self::Jacobi),
            "gs" | "gauss_seidel" | "gauss-seidel" => Ok(Self::GaussSeidel),
            other => Err(format!(
                "unknown smoother `{other}` (expected jacobi or gs)"
            )),
        }
    }
}

impl std::fmt::Display for SmootherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Jacobi => "jacobi",
            Self::GaussSeidel => "gs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecondConfig {
    pub gamma: f64,
    pub smoother: SmootherKind,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            smoother: SmootherKind::Jacobi,
        }
    }
}

#[derive(Debug, Error)]
pub enum PrecondError {
    #[error("damping {0} outside (0, 1)")]
    BadDamping(f64),
    #[error("negative shift {0}")]
    NegativeShift(f64),
    #[error("shift {shift} too large: shifted diagonal {value:e} at level {level}, edge dof {edge} (coarse mesh too coarse)")]
    ShiftTooLarge {
        shift: f64,
        level: usize,
        edge: usize,
        value: f64,
    },
    #[error("coarse level: {0}")]
    Coarse(#[from] CoarseError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Shift-dependent data for one application of the preconditioner.
pub struct PrecondWorkspace<'a> {
    hops: &'a HierarchyOperators,
    coarse: &'a CoarseLevel,
    cfg: PrecondConfig,
    shift: f64,
    /// `diags[l][k]` belongs to `hops.level(l).smoothing_edges[k]`.
    diags: Vec<Vec<f64>>,
}

impl<'a> PrecondWorkspace<'a> {
    pub fn build(
        hops: &'a HierarchyOperators,
        coarse: &'a CoarseLevel,
        cfg: PrecondConfig,
        shift: f64,
    ) -> Result<Self, PrecondError> {
        if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
            return Err(PrecondError::BadDamping(cfg.gamma));
        }
        if shift < 0.0 {
            return Err(PrecondError::NegativeShift(shift));
        }
        let mut diags = vec![Vec::new()];
        for l in 1..hops.num_levels() {
            let level = hops.level(l);
            let mut d = Vec::with_capacity(level.smoothing_edges.len());
            for &i in &level.smoothing_edges {
                let value = level.ops.a.get(i, i) - shift * level.ops.m.get(i, i);
                if value <= 0.0 {
                    return Err(PrecondError::ShiftTooLarge {
                        shift,
                        level: l,
                        edge: i,
                        value,
                    });
                }
                d.push(value);
            }
            diags.push(d);
        }
        Ok(Self {
            hops,
            coarse,
            cfg,
            shift,
            diags,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn config(&self) -> PrecondConfig {
        self.cfg
    }

    pub fn diagonals(&self, l: usize) -> &[f64] {
        &self.diags[l]
    }

    fn top(&self) -> usize {
        self.hops.finest_index()
    }

    /// `(A_l − λ M_l)_i · y`.
    fn shifted_row(&self, l: usize, i: usize, y: &[f64]) -> f64 {
        let ops = &self.hops.level(l).ops;
        ops.a.row_dot(i, y) - self.shift * ops.m.row_dot(i, y)
    }

    fn shifted_apply(&self, l: usize, y: &[f64]) -> Vec<f64> {
        let ops = &self.hops.level(l).ops;
        let mut out = ops.a.mul_vec(y);
        sparse::axpy(-self.shift, &ops.m.mul_vec(y), &mut out);
        out
    }

    /// Applies the preconditioner to a level-L covector.
    ///
    /// The residual seen by level `l` is `Pᵀ(g − Ã_L x)` with `x` the sum of
    /// the corrections so far. Because the transfers are exact embeddings,
    /// `Pᵀ Ã_L P = Ã_l`, so it is evaluated on level `l` itself from the
    /// restricted `g` and the level-`l` representation of `x`.
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>, PrecondError> {
        let top = self.top();
        let mut restricted = vec![Vec::new(); top + 1];
        restricted[top] = g.to_vec();
        for l in (1..=top).rev() {
            let pt = self.hops.level(l).prolong_t.as_ref().unwrap();
            restricted[l - 1] = pt.mul_vec(&restricted[l]);
        }
        let mut y = self.coarse.solve(&restricted[0], self.shift)?;
        for (l, g_l) in restricted.iter().enumerate().skip(1) {
            y = self.hops.level(l).prolong.as_ref().unwrap().mul_vec(&y);
            self.smooth(l, g_l, &mut y);
        }
        Ok(y)
    }

    fn smooth(&self, l: usize, g_l: &[f64], y: &mut [f64]) {
        let edges = &self.hops.level(l).smoothing_edges;
        let d = &self.diags[l];
        let gamma = self.cfg.gamma;
        match self.cfg.smoother {
            SmootherKind::Jacobi => {
                let upd: Vec<f64> = edges
                    .iter()
                    .zip(d)
                    .map(|(&i, di)| gamma * (g_l[i] - self.shifted_row(l, i, y)) / di)
                    .collect();
                for (&i, u) in edges.iter().zip(upd) {
                    y[i] += u;
                }
            }
            SmootherKind::GaussSeidel => {
                for (&i, di) in edges.iter().zip(d) {
                    y[i] += gamma * (g_l[i] - self.shifted_row(l, i, y)) / di;
                }
            }
        }
    }

    /// Level-`l` local solve `S_l` applied to a level-`l` covector; the
    /// transpose runs Gauss–Seidel in descending order.
    fn local_solve(&self, l: usize, r: &[f64], transpose: bool) -> Result<Vec<f64>, PrecondError> {
        if l == 0 {
            return Ok(self.coarse.solve(r, self.shift)?);
        }
        let mut c = vec![0.0; r.len()];
        match (self.cfg.smoother, transpose) {
            (SmootherKind::Jacobi, _) | (SmootherKind::GaussSeidel, false) => {
                // Smoothing from a zero iterate against `r` is the local solve.
                self.smooth(l, r, &mut c);
            }
            (SmootherKind::GaussSeidel, true) => {
                let edges = &self.hops.level(l).smoothing_edges;
                let d = &self.diags[l];
                for (&i, di) in edges.iter().zip(d).rev() {
                    c[i] += self.cfg.gamma * (r[i] - self.shifted_row(l, i, &c)) / di;
                }
            }
        }
        Ok(c)
    }

    /// `T_l v = P S_l Pᵀ Ã_L v`, computed with a fresh fine-level residual.
    pub fn level_operator(&self, l: usize, v: &[f64]) -> Result<Vec<f64>, PrecondError> {
        self.level_operator_impl(l, v, false)
    }

    fn level_operator_impl(
        &self,
        l: usize,
        v: &[f64],
        transpose: bool,
    ) -> Result<Vec<f64>, PrecondError> {
        let top = self.top();
        let r = self
            .hops
            .restrict_edges(top, l, &self.shifted_apply(top, v));
        let c = self.local_solve(l, &r, transpose)?;
        Ok(self.hops.prolong_edges(l, top, &c))
    }

    /// Error propagation of one sweep, `E v = v − B Ã v`.
    pub fn error_operator(&self, v: &[f64]) -> Result<Vec<f64>, PrecondError> {
        let bv = self.apply(&self.shifted_apply(self.top(), v))?;
        Ok(v.iter().zip(&bv).map(|(a, b)| a - b).collect())
    }

    /// Error propagation of the reverse (fine-to-coarse, transposed local
    /// solves) sweep; the adjoint of [`Self::error_operator`] in the
    /// shifted energy inner product.
    pub fn reverse_error_operator(&self, v: &[f64]) -> Result<Vec<f64>, PrecondError> {
        let mut e = v.to_vec();
        for l in (0..=self.top()).rev() {
            let t = self.level_operator_impl(l, &e, true)?;
            sparse::axpy(-1.0, &t, &mut e);
        }
        Ok(e)
    }

    /// `(x, y)_E = xᵀ (A_L − λ M_L) y`.
    pub fn energy_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        sparse::dot(x, &self.shifted_apply(self.top(), y))
    }

    /// Largest relative discrepancy between `I − E` and the telescoping sum
    /// `Σ_l T_l E_{l−1}` over `samples` random vectors.
    pub fn error_identity_discrepancy(
        &self,
        samples: usize,
        seed: u64,
    ) -> Result<f64, PrecondError> {
        let n = self.hops.finest().num_edge_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let v = random_vector(&mut rng, n);
            let ev = self.error_operator(&v)?;
            let lhs: Vec<f64> = v.iter().zip(&ev).map(|(a, b)| a - b).collect();
            let mut rhs = vec![0.0; n];
            let mut e = v.clone();
            for l in 0..=self.top() {
                let t = self.level_operator(l, &e)?;
                sparse::axpy(1.0, &t, &mut rhs);
                sparse::axpy(-1.0, &t, &mut e);
            }
            let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            let scale = sparse::norm(&lhs).max(sparse::norm(&v) * f64::EPSILON);
            worst = worst.max(sparse::norm(&diff) / scale);
        }
        Ok(worst)
    }

    /// Contraction estimate `θ̂` of the projected error operator `Q₂ E`,
    /// where `Q₂` removes gradients and the direction `u`.
    ///
    /// Each sample starts from a random divergence-free vector orthogonal to
    /// `u` and takes `power_steps` applications of `Q₂ E`; the largest
    /// energy-norm ratio seen is returned.
    pub fn measure_contraction(
        &self,
        ctx: &ProjectionContext<'_>,
        u: &[f64],
        samples: usize,
        power_steps: usize,
        seed: u64,
    ) -> Result<f64, PrecondError> {
        let ops = self.hops.finest();
        let n = ops.num_edge_dofs();
        let mu = ops.m.mul_vec(u);
        let uu = sparse::dot(u, &mu);
        let q2 = |x: &[f64]| -> Result<Vec<f64>, PrecondError> {
            let mut y = ctx.project_div_free(x)?;
            let c = sparse::dot(&mu, &y) / uu;
            sparse::axpy(-c, u, &mut y);
            Ok(y)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = 0.0f64;
        for _ in 0..samples {
            let mut v = q2(&random_vector(&mut rng, n))?;
            for _ in 0..power_steps.max(1) {
                let nv = self.energy_inner(&v, &v);
                if nv <= 0.0 {
                    break;
                }
                let nv = nv.sqrt();
                sparse::scale(1.0 / nv, &mut v);
                let w = q2(&self.error_operator(&v)?)?;
                let nw = self.energy_inner(&w, &w).max(0.0).sqrt();
                theta = theta.max(nw);
                v = w;
            }
        }
        Ok(theta)
    }
}

/// Checks `I − E_L = Σ_l T_l E_{l−1}` on ten random vectors to `1e−11`.
pub fn verify_error_identity(
    hops: &HierarchyOperators,
    coarse: &CoarseLevel,
    cfg: PrecondConfig,
    shift: f64,
) -> Result<bool, PrecondError> {
    let ws = PrecondWorkspace::build(hops, coarse, cfg, shift)?;
    Ok(ws.error_identity_discrepancy(10, 7)? <= 1e-11)
}
