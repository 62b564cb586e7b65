//! Residual a posteriori error indicator for the Maxwell eigenproblem and
//! Dörfler marking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{element_matrices, whitney_curls, whitney_values, LevelOperators, NO_DOF};
use crate::mesh::{cross, dot3, Point, TetMesh, NO_TET};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("eigenvalue must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("vector length {got} does not match {want} interior edges")]
    LengthMismatch { got: usize, want: usize },
    #[error("marking fraction {0} outside (0, 1]")]
    BadTheta(f64),
}

/// Squared per-tet indicators `μ_K²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorField {
    pub values: Vec<f64>,
}

impl IndicatorField {
    pub fn total_squared(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `μ = sqrt(Σ μ_K²)`.
    pub fn global(&self) -> f64 {
        self.total_squared().sqrt()
    }
}

/// Local Whitney coefficients of `u` on tet `t`, in local orientation.
fn local_coefficients(mesh: &TetMesh, ops: &LevelOperators, t: usize, u: &[f64]) -> [f64; 6] {
    let edges = mesh.tet_edges(t);
    let signs = mesh.tet_edge_signs(t);
    let mut c = [0.0; 6];
    for k in 0..6 {
        let dof = ops.edge_dof[edges[k]];
        if dof != NO_DOF {
            c[k] = signs[k] * u[dof];
        }
    }
    c
}

fn field_at(grads: &[Point; 4], c: &[f64; 6], lam: &[f64; 4]) -> Point {
    let vals = whitney_values(grads, lam);
    let mut out = [0.0; 3];
    for (v, ck) in vals.iter().zip(c) {
        for d in 0..3 {
            out[d] += ck * v[d];
        }
    }
    out
}

fn curl_of(grads: &[Point; 4], c: &[f64; 6]) -> Point {
    let curls = whitney_curls(grads);
    let mut out = [0.0; 3];
    for (v, ck) in curls.iter().zip(c) {
        for d in 0..3 {
            out[d] += ck * v[d];
        }
    }
    out
}

fn local_index(tet: &[usize; 4], v: usize) -> usize {
    tet.iter()
        .position(|&x| x == v)
        .expect("face vertex belongs to tet")
}

/// `μ_K² = h_K²‖u‖²_K + ½ Σ_F h_F (‖[[curl u/λ × n]]‖²_F + ‖[[u·n]]‖²_F)`
/// over the interior faces `F` of `K`.
///
/// The element residual `u − curl(curl u/λ)` reduces to `u` because the
/// curl of a lowest-order edge field is elementwise constant.
pub fn estimate(
    mesh: &TetMesh,
    ops: &LevelOperators,
    lambda: f64,
    u: &[f64],
) -> Result<IndicatorField, EstimatorError> {
    if !(lambda > 0.0) {
        return Err(EstimatorError::NonPositiveLambda(lambda));
    }
    if u.len() != ops.num_edge_dofs() {
        return Err(EstimatorError::LengthMismatch {
            got: u.len(),
            want: ops.num_edge_dofs(),
        });
    }
    let nt = mesh.num_tets();
    let grads: Vec<[Point; 4]> = (0..nt).map(|t| mesh.barycentric_gradients(t)).collect();
    let coefs: Vec<[f64; 6]> = (0..nt)
        .map(|t| local_coefficients(mesh, ops, t, u))
        .collect();

    let mut values: Vec<f64> = (0..nt)
        .map(|t| {
            // The element mass is in global orientation, so undo the local
            // edge signs carried by `coefs`.
            let (_, m) = element_matrices(mesh, t);
            let signs = mesh.tet_edge_signs(t);
            let c: [f64; 6] = std::array::from_fn(|k| signs[k] * coefs[t][k]);
            let mut norm2 = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    norm2 += c[i] * m[i][j] * c[j];
                }
            }
            let h = mesh.tet_diameter(t);
            h * h * norm2
        })
        .collect();

    for f in 0..mesh.num_faces() {
        let [t0, t1] = mesh.face_tets(f);
        if t1 == NO_TET {
            continue;
        }
        let tri = mesh.faces()[f];
        let p: Vec<Point> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
        let nvec = cross(
            &crate::mesh::sub(&p[1], &p[0]),
            &crate::mesh::sub(&p[2], &p[0]),
        );
        let twice_area = dot3(&nvec, &nvec).sqrt();
        let area = 0.5 * twice_area;
        let n = [
            nvec[0] / twice_area,
            nvec[1] / twice_area,
            nvec[2] / twice_area,
        ];

        let c0 = curl_of(&grads[t0], &coefs[t0]);
        let c1 = curl_of(&grads[t1], &coefs[t1]);
        let jump_curl = cross(
            &[
                (c0[0] - c1[0]) / lambda,
                (c0[1] - c1[1]) / lambda,
                (c0[2] - c1[2]) / lambda,
            ],
            &n,
        );
        let curl_term = dot3(&jump_curl, &jump_curl) * area;

        // Edge-midpoint rule, exact for quadratics on the triangle.
        let mut normal_term = 0.0;
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            let mut jump = 0.0;
            for (t, sign) in [(t0, 1.0), (t1, -1.0)] {
                let tet = &mesh.tets()[t];
                let mut lam = [0.0; 4];
                lam[local_index(tet, tri[a])] = 0.5;
                lam[local_index(tet, tri[b])] = 0.5;
                jump += sign * dot3(&field_at(&grads[t], &coefs[t], &lam), &n);
            }
            normal_term += jump * jump * area / 3.0;
        }

        let share = 0.5 * mesh.face_diameter(f) * (curl_term + normal_term);
        values[t0] += share;
        values[t1] += share;
    }
    Ok(IndicatorField { values })
}

/// Smallest set (greedy by descending indicator, ties by ascending tet id)
/// whose indicators sum to at least `theta · Σ μ_K²`. Returned ids ascend.
pub fn mark_dorfler(ind: &IndicatorField, theta: f64) -> Result<Vec<usize>, EstimatorError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EstimatorError::BadTheta(theta));
    }
    let total = ind.total_squared();
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    if theta == 1.0 {
        // Rounding in the running sum must not drop tiny positive entries.
        return Ok((0..ind.values.len())
            .filter(|&i| ind.values[i] > 0.0)
            .collect());
    }
    let mut order: Vec<usize> = (0..ind.values.len()).collect();
    order.sort_by(|&i, &j| ind.values[j].total_cmp(&ind.values[i]).then(i.cmp(&j)));
    let target = theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if sum >= target || ind.values[i] <= 0.0 {
            break;
        }
        sum += ind.values[i];
        marked.push(i);
    }
    marked.sort_unstable();
    Ok(marked)
}
