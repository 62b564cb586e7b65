//! Dense symmetric-definite eigen decompositions for small pencils.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, SymmetricEigen};

/// Eigenpairs of `A x = λ M x` (A symmetric, M SPD), sorted ascending, with
/// M-orthonormal eigenvectors stored as matrix columns.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl PencilEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }
}

/// Returns `None` if `M` is not positive definite.
pub fn pencil_eigen(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<PencilEigen> {
    let n = a.nrows();
    if n == 0 {
        return Some(PencilEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l.solve_lower_triangular(a)?;
    let c = l.solve_lower_triangular(&linv_a.transpose())?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut y = DMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        y.set_column(new, &eig.eigenvectors.column(old));
    }
    // x = L⁻ᵀ y
    let vectors = l.transpose().solve_upper_triangular(&y)?;
    Some(PencilEigen { values, vectors })
}

/// Two steps of inverse iteration on `A x = λ M x` from the pair `(λ, x)`.
///
/// The QR eigensolver can drop couplings far below the spectral gap (a 2×2
/// block with off-diagonal 1e−8 comes back with exact unit vectors), which
/// stalls Ritz updates near convergence. Inverse iteration with the computed
/// eigenvalue as shift recovers them.
pub fn refine_smallest(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    lambda: f64,
    x: Vec<f64>,
) -> (f64, Vec<f64>) {
    let lu = (a - m * lambda).full_piv_lu();
    let mut v = DVector::from_vec(x);
    for _ in 0..2 {
        match lu.solve(&(m * &v)) {
            Some(w) if w.iter().all(|c| c.is_finite()) => v = w,
            _ => break,
        }
        let n = v.dot(&(m * &v)).sqrt();
        v /= n;
    }
    let rq = v.dot(&(a * &v)) / v.dot(&(m * &v));
    (rq, v.as_slice().to_vec())
}
