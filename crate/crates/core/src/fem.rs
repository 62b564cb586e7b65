//! Lowest-order Nédélec (Whitney) edge elements and linear nodal elements:
//! curl-curl stiffness, mass, discrete gradient and inter-level prolongation.
//!
//! Edge degrees of freedom are unscaled tangential line integrals along the
//! edge directed from its lower to its higher vertex id. With this choice the
//! discrete gradient has entries ±1 and prolongation weights are dyadic.

use std::collections::HashMap;

use thiserror::Error;

use crate::mesh::{cross, dot3, MeshHierarchy, Point, TetMesh, LOCAL_EDGES};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("degenerate tet {tet}: volume {volume:e} below tolerance")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("level {level} out of range (hierarchy has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },
}

/// Marker for a boundary entity in the dof maps.
pub const NO_DOF: usize = usize::MAX;

/// Four-point rule on the reference tet, exact for polynomials of degree 2.
/// Points are barycentric coordinates; weights sum to one.
pub const TET_QUAD_DEG2: [([f64; 4], f64); 4] = {
    const A: f64 = 0.585_410_196_624_968_5;
    const B: f64 = 0.138_196_601_125_010_5;
    [
        ([A, B, B, B], 0.25),
        ([B, A, B, B], 0.25),
        ([B, B, A, B], 0.25),
        ([B, B, B, A], 0.25),
    ]
};

/// Matrices of one mesh level restricted to interior degrees of freedom.
#[derive(Debug, Clone)]
pub struct LevelOperators {
    /// Curl-curl stiffness `∫ curl bᵢ · curl bⱼ`.
    pub a: CsrMatrix,
    /// Edge mass `∫ bᵢ · bⱼ`.
    pub m: CsrMatrix,
    /// Discrete gradient, interior edges × interior nodes.
    pub g: CsrMatrix,
    /// Nodal stiffness `∫ ∇φᵢ · ∇φⱼ` on interior nodes; equals `Gᵀ M G`.
    pub laplace: CsrMatrix,
    pub interior_edges: Vec<usize>,
    pub edge_dof: Vec<usize>,
    pub interior_nodes: Vec<usize>,
    pub node_dof: Vec<usize>,
}

impl LevelOperators {
    pub fn num_edge_dofs(&self) -> usize {
        self.interior_edges.len()
    }

    pub fn num_node_dofs(&self) -> usize {
        self.interior_nodes.len()
    }

    /// `A − λM`
    pub fn shifted(&self, shift: f64) -> CsrMatrix {
        self.a.add_scaled(-shift, &self.m)
    }

    /// `xᵀ(A − λM)y`
    pub fn energy_inner(&self, shift: f64, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.a.mul_vec(y);
        let my = self.m.mul_vec(y);
        x.iter()
            .zip(ay.iter().zip(&my))
            .map(|(xi, (a, m))| xi * (a - shift * m))
            .sum()
    }

    /// `xᵀ M y`
    pub fn mass_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::sparse::dot(x, &self.m.mul_vec(y))
    }
}

/// Whitney edge functions `λᵢ∇λⱼ − λⱼ∇λᵢ` of a tet at barycentric point `lam`,
/// in local edge order and local orientation.
pub fn whitney_values(grads: &[Point; 4], lam: &[f64; 4]) -> [Point; 6] {
    let mut out = [[0.0; 3]; 6];
    for (k, e) in LOCAL_EDGES.iter().enumerate() {
        let (i, j) = (e[0], e[1]);
        for d in 0..3 {
            out[k][d] = lam[i] * grads[j][d] - lam[j] * grads[i][d];
        }
    }
    out
}

/// Constant curls `2 ∇λᵢ × ∇λⱼ` of the local Whitney functions.
pub fn whitney_curls(grads: &[Point; 4]) -> [Point; 6] {
    let mut out = [[0.0; 3]; 6];
    for (k, e) in LOCAL_EDGES.iter().enumerate() {
        let c = cross(&grads[e[0]], &grads[e[1]]);
        out[k] = [2.0 * c[0], 2.0 * c[1], 2.0 * c[2]];
    }
    out
}

/// Element stiffness and mass for tet `t`, already in global orientation.
pub fn element_matrices(mesh: &TetMesh, t: usize) -> ([[f64; 6]; 6], [[f64; 6]; 6]) {
    let vol = mesh.volume(t);
    let grads = mesh.barycentric_gradients(t);
    let signs = mesh.tet_edge_signs(t);
    let curls = whitney_curls(&grads);
    let mut k_loc = [[0.0; 6]; 6];
    let mut m_loc = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            k_loc[i][j] = vol * dot3(&curls[i], &curls[j]) * signs[i] * signs[j];
        }
    }
    for (lam, w) in TET_QUAD_DEG2.iter() {
        let vals = whitney_values(&grads, lam);
        for i in 0..6 {
            for j in 0..6 {
                m_loc[i][j] += w * vol * dot3(&vals[i], &vals[j]) * signs[i] * signs[j];
            }
        }
    }
    (k_loc, m_loc)
}

fn dof_map(ids: &[usize], n: usize) -> Vec<usize> {
    let mut map = vec![NO_DOF; n];
    for (k, &e) in ids.iter().enumerate() {
        map[e] = k;
    }
    map
}

/// Assembles all operators of one level. Boundary degrees of freedom
/// (tangential trace and nodal trace) are removed.
pub fn assemble(mesh: &TetMesh) -> Result<LevelOperators, FemError> {
    let scale = mesh.max_edge_length();
    let vol_tol = 1e-14 * scale.powi(3);
    let interior_edges = mesh.interior_edges();
    let edge_dof = dof_map(&interior_edges, mesh.num_edges());
    let interior_nodes = mesh.interior_vertices();
    let node_dof = dof_map(&interior_nodes, mesh.num_vertices());

    let mut a_trip = Vec::with_capacity(36 * mesh.num_tets());
    let mut m_trip = Vec::with_capacity(36 * mesh.num_tets());
    let mut l_trip = Vec::with_capacity(16 * mesh.num_tets());
    for t in 0..mesh.num_tets() {
        let vol = mesh.signed_volume(t);
        if vol <= vol_tol {
            return Err(FemError::DegenerateTet {
                tet: t,
                volume: vol,
            });
        }
        let (k_loc, m_loc) = element_matrices(mesh, t);
        let dofs = mesh.tet_edges(t).map(|e| edge_dof[e]);
        for i in 0..6 {
            if dofs[i] == NO_DOF {
                continue;
            }
            for j in 0..6 {
                if dofs[j] == NO_DOF {
                    continue;
                }
                a_trip.push((dofs[i], dofs[j], k_loc[i][j]));
                m_trip.push((dofs[i], dofs[j], m_loc[i][j]));
            }
        }
        let grads = mesh.barycentric_gradients(t);
        let ndofs = mesh.tets()[t].map(|v| node_dof[v]);
        for i in 0..4 {
            if ndofs[i] == NO_DOF {
                continue;
            }
            for j in 0..4 {
                if ndofs[j] != NO_DOF {
                    l_trip.push((ndofs[i], ndofs[j], vol * dot3(&grads[i], &grads[j])));
                }
            }
        }
    }
    let ne = interior_edges.len();
    let nn = interior_nodes.len();
    Ok(LevelOperators {
        a: CsrMatrix::from_triplets(ne, ne, &a_trip),
        m: CsrMatrix::from_triplets(ne, ne, &m_trip),
        g: discrete_gradient_with(mesh, &interior_edges, &node_dof),
        laplace: CsrMatrix::from_triplets(nn, nn, &l_trip),
        interior_edges,
        edge_dof,
        interior_nodes,
        node_dof,
    })
}

/// Edge-by-node incidence: `(G p)_e = p(head) − p(tail)` with the edge
/// directed from lower to higher vertex id; boundary nodes carry `p = 0`.
pub fn discrete_gradient(mesh: &TetMesh) -> CsrMatrix {
    let interior_edges = mesh.interior_edges();
    let node_dof = dof_map(&mesh.interior_vertices(), mesh.num_vertices());
    discrete_gradient_with(mesh, &interior_edges, &node_dof)
}

fn discrete_gradient_with(
    mesh: &TetMesh,
    interior_edges: &[usize],
    node_dof: &[usize],
) -> CsrMatrix {
    let nn = node_dof.iter().filter(|&&d| d != NO_DOF).count();
    let mut trip = Vec::with_capacity(2 * interior_edges.len());
    for (row, &e) in interior_edges.iter().enumerate() {
        let [tail, head] = mesh.edges()[e];
        if node_dof[head] != NO_DOF {
            trip.push((row, node_dof[head], 1.0));
        }
        if node_dof[tail] != NO_DOF {
            trip.push((row, node_dof[tail], -1.0));
        }
    }
    CsrMatrix::from_triplets(interior_edges.len(), nn, &trip)
}

/// Expands a fine vertex into coarse vertices through the midpoint
/// genealogy: the returned weights are its barycentric coordinates.
fn coarse_expansion(
    fine: &TetMesh,
    n_coarse_vertices: usize,
    v: usize,
    memo: &mut HashMap<usize, Vec<(usize, f64)>>,
) -> Vec<(usize, f64)> {
    if v < n_coarse_vertices {
        return vec![(v, 1.0)];
    }
    if let Some(r) = memo.get(&v) {
        return r.clone();
    }
    let [a, b] = fine
        .vertex_parents(v)
        .expect("vertex created by bisection has a recorded parent edge");
    let mut acc: Vec<(usize, f64)> = Vec::new();
    for (w, c) in coarse_expansion(fine, n_coarse_vertices, a, memo)
        .into_iter()
        .chain(coarse_expansion(fine, n_coarse_vertices, b, memo))
    {
        match acc.iter_mut().find(|(x, _)| *x == w) {
            Some(slot) => slot.1 += 0.5 * c,
            None => acc.push((w, 0.5 * c)),
        }
    }
    acc.sort_unstable_by_key(|&(w, _)| w);
    memo.insert(v, acc.clone());
    acc
}

fn check_level(h: &MeshHierarchy, level: usize) -> Result<(), FemError> {
    if level == 0 || level >= h.num_levels() {
        return Err(FemError::LevelOutOfRange {
            level,
            levels: h.num_levels(),
        });
    }
    Ok(())
}

/// Edge prolongation from level `l − 1` to level `l` (interior dofs): each
/// fine coefficient is the line integral of the coarse field along the fine
/// edge.
pub fn prolongation(h: &MeshHierarchy, level: usize) -> Result<CsrMatrix, FemError> {
    check_level(h, level)?;
    let coarse = &h.level(level - 1).mesh;
    let fine = &h.level(level).mesh;
    Ok(edge_prolongation(coarse, fine))
}

pub(crate) fn edge_prolongation(coarse: &TetMesh, fine: &TetMesh) -> CsrMatrix {
    let parents = fine.parent_tets().expect("fine level has a parent map");
    let nc = coarse.num_vertices();
    let coarse_interior = coarse.interior_edges();
    let coarse_dof = dof_map(&coarse_interior, coarse.num_edges());
    let fine_interior = fine.interior_edges();

    let mut some_tet = vec![usize::MAX; fine.num_edges()];
    for t in 0..fine.num_tets() {
        for &e in fine.tet_edges(t) {
            if some_tet[e] == usize::MAX {
                some_tet[e] = t;
            }
        }
    }

    let mut memo = HashMap::new();
    let mut trip = Vec::new();
    for (row, &e) in fine_interior.iter().enumerate() {
        let [a, b] = fine.edges()[e];
        if let Some(ce) = coarse.edge_id(a, b) {
            if coarse_dof[ce] != NO_DOF {
                trip.push((row, coarse_dof[ce], 1.0));
            }
            continue;
        }
        let parent = parents[some_tet[e]];
        let ct = coarse.tets()[parent];
        let bary = |v: usize, memo: &mut HashMap<usize, Vec<(usize, f64)>>| {
            let mut lam = [0.0; 4];
            for (w, c) in coarse_expansion(fine, nc, v, memo) {
                let local = ct
                    .iter()
                    .position(|&x| x == w)
                    .expect("fine edge lies inside its parent tet");
                lam[local] += c;
            }
            lam
        };
        let la = bary(a, &mut memo);
        let lb = bary(b, &mut memo);
        let signs = coarse.tet_edge_signs(parent);
        let cedges = coarse.tet_edges(parent);
        for (k, le) in LOCAL_EDGES.iter().enumerate() {
            let dof = coarse_dof[cedges[k]];
            if dof == NO_DOF {
                continue;
            }
            let (p, q) = (le[0], le[1]);
            // ∫ (λp∇λq − λq∇λp)·(x_b − x_a): λ averages times λ increments.
            let mean_p = 0.5 * (la[p] + lb[p]);
            let mean_q = 0.5 * (la[q] + lb[q]);
            let w = (mean_p * (lb[q] - la[q]) - mean_q * (lb[p] - la[p])) * signs[k];
            if w != 0.0 {
                trip.push((row, dof, w));
            }
        }
    }
    CsrMatrix::from_triplets(fine_interior.len(), coarse_interior.len(), &trip)
}

/// Linear-interpolation prolongation of interior nodal values.
pub fn nodal_prolongation(h: &MeshHierarchy, level: usize) -> Result<CsrMatrix, FemError> {
    check_level(h, level)?;
    Ok(node_prolongation(
        &h.level(level - 1).mesh,
        &h.level(level).mesh,
    ))
}

pub(crate) fn node_prolongation(coarse: &TetMesh, fine: &TetMesh) -> CsrMatrix {
    let nc = coarse.num_vertices();
    let coarse_dof = dof_map(&coarse.interior_vertices(), nc);
    let fine_interior = fine.interior_vertices();
    let mut memo = HashMap::new();
    let mut trip = Vec::new();
    for (row, &v) in fine_interior.iter().enumerate() {
        for (w, c) in coarse_expansion(fine, nc, v, &mut memo) {
            if coarse_dof[w] != NO_DOF {
                trip.push((row, coarse_dof[w], c));
            }
        }
    }
    CsrMatrix::from_triplets(fine_interior.len(), coarse.interior_vertices().len(), &trip)
}

/// Line integrals of a vector field along every interior edge (edge
/// interpolant), by `n`-point Gauss–Legendre quadrature on each edge.
pub fn edge_interpolant<F: Fn(&Point) -> Point>(mesh: &TetMesh, field: F) -> Vec<f64> {
    // Three-point Gauss–Legendre on [0, 1].
    let nodes = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    mesh.interior_edges()
        .iter()
        .map(|&e| {
            let [a, b] = mesh.edges()[e];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let d = crate::mesh::sub(&pb, &pa);
            nodes
                .iter()
                .zip(&weights)
                .map(|(s, w)| {
                    let x = [pa[0] + s * d[0], pa[1] + s * d[1], pa[2] + s * d[2]];
                    w * dot3(&field(&x), &d)
                })
                .sum()
        })
        .collect()
}
