//! Conforming tetrahedral meshes, domain generators, bisection refinement and
//! the nested level hierarchy used by the multilevel solvers.

mod bisect;
mod generate;
mod hierarchy;
mod io;

use std::collections::HashMap;

use thiserror::Error;

pub use bisect::{bisect, bisect_with_limit};
pub use generate::{generate_domain, DomainSpec};
pub use hierarchy::{Level, MeshHierarchy};
pub use io::{format_mesh, parse_mesh, read_mesh, write_mesh};

pub type Point = [f64; 3];

/// Local edges of a tetrahedron as pairs of local vertex positions.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Marker for a missing neighbour in `face_tets`.
pub const NO_TET: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid domain configuration: {0}")]
    Config(String),
    #[error("refinement closure exceeded {limit} bisection steps")]
    Refinement { limit: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("hierarchy error: {0}")]
    Hierarchy(String),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Vertex ordering and tag driving the next bisection of a tetrahedron.
/// The refinement edge joins `order[0]` and `order[tag]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BisectionState {
    pub order: [usize; 4],
    pub tag: u8,
}

impl BisectionState {
    pub fn refinement_edge(&self) -> [usize; 2] {
        sorted_pair(self.order[0], self.order[self.tag as usize])
    }
}

/// Immutable conforming tetrahedral mesh together with all derived
/// connectivity (edges, faces, boundary flags, orientation signs).
#[derive(Debug, Clone)]
pub struct TetMesh {
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
    bisection: Vec<BisectionState>,
    /// Endpoints of the edge whose midpoint created each vertex.
    vertex_parents: Vec<Option<[usize; 2]>>,
    /// Source tet (in the mesh this one was refined from) of every tet.
    parent_tets: Option<Vec<usize>>,

    edges: Vec<[usize; 2]>,
    edge_lookup: HashMap<[usize; 2], usize>,
    tet_edges: Vec<[usize; 6]>,
    tet_edge_signs: Vec<[f64; 6]>,
    faces: Vec<[usize; 3]>,
    face_tets: Vec<[usize; 2]>,
    tet_faces: Vec<[usize; 4]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
}

pub(crate) fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn sorted_triple(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    dot3(&sub(a, b), &sub(a, b)).sqrt()
}

pub(crate) fn signed_volume_of(p: [&Point; 4]) -> f64 {
    let e1 = sub(p[1], p[0]);
    let e2 = sub(p[2], p[0]);
    let e3 = sub(p[3], p[0]);
    dot3(&e1, &cross(&e2, &e3)) / 6.0
}

impl TetMesh {
    /// Assembles a mesh from raw vertices and bisection-ordered tets. Tet
    /// storage is reoriented to positive volume; connectivity is derived.
    pub(crate) fn from_parts(
        vertices: Vec<Point>,
        bisection: Vec<BisectionState>,
        vertex_parents: Vec<Option<[usize; 2]>>,
        parent_tets: Option<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let mut tets = Vec::with_capacity(bisection.len());
        for (k, b) in bisection.iter().enumerate() {
            let mut t = b.order;
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::Invalid(format!(
                    "tet {k} references a missing vertex"
                )));
            }
            let vol = signed_volume_of([
                &vertices[t[0]],
                &vertices[t[1]],
                &vertices[t[2]],
                &vertices[t[3]],
            ]);
            if vol == 0.0 {
                return Err(MeshError::Invalid(format!("tet {k} is degenerate")));
            }
            if vol < 0.0 {
                t.swap(2, 3);
            }
            tets.push(t);
        }
        Self::with_oriented_tets(vertices, tets, bisection, vertex_parents, parent_tets)
    }

    /// Same mesh with its genealogy dropped, for use as a hierarchy root.
    /// Bisection states are kept so later refinements stay conforming.
    pub fn as_root(&self) -> TetMesh {
        let mut m = self.clone();
        m.vertex_parents = vec![None; m.vertices.len()];
        m.parent_tets = None;
        m
    }

    pub(crate) fn with_oriented_tets(
        vertices: Vec<Point>,
        tets: Vec<[usize; 4]>,
        bisection: Vec<BisectionState>,
        vertex_parents: Vec<Option<[usize; 2]>>,
        parent_tets: Option<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let mut edge_set: Vec<[usize; 2]> = tets
            .iter()
            .flat_map(|t| {
                LOCAL_EDGES
                    .iter()
                    .map(move |e| sorted_pair(t[e[0]], t[e[1]]))
            })
            .collect();
        edge_set.sort_unstable();
        edge_set.dedup();
        let edge_lookup: HashMap<[usize; 2], usize> =
            edge_set.iter().enumerate().map(|(i, e)| (*e, i)).collect();

        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_edge_signs = Vec::with_capacity(tets.len());
        for t in &tets {
            let mut ids = [0usize; 6];
            let mut signs = [0.0; 6];
            for (k, e) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (t[e[0]], t[e[1]]);
                ids[k] = edge_lookup[&sorted_pair(a, b)];
                signs[k] = if a < b { 1.0 } else { -1.0 };
            }
            tet_edges.push(ids);
            tet_edge_signs.push(signs);
        }

        let mut face_map: HashMap<[usize; 3], usize> = HashMap::with_capacity(2 * tets.len());
        let mut faces: Vec<[usize; 3]> = Vec::new();
        let mut face_tets: Vec<[usize; 2]> = Vec::new();
        let mut tet_faces = Vec::with_capacity(tets.len());
        for (ti, t) in tets.iter().enumerate() {
            let mut tf = [0usize; 4];
            for (k, slot) in tf.iter_mut().enumerate() {
                let mut f = [0usize; 3];
                let mut n = 0;
                for (j, &v) in t.iter().enumerate() {
                    if j != k {
                        f[n] = v;
                        n += 1;
                    }
                }
                let key = sorted_triple(f);
                let id = *face_map.entry(key).or_insert_with(|| {
                    faces.push(key);
                    face_tets.push([NO_TET, NO_TET]);
                    faces.len() - 1
                });
                let ft = &mut face_tets[id];
                if ft[0] == NO_TET {
                    ft[0] = ti;
                } else if ft[1] == NO_TET {
                    ft[1] = ti;
                } else {
                    return Err(MeshError::Invalid(format!(
                        "face {key:?} shared by more than two tets"
                    )));
                }
                *slot = id;
            }
            tet_faces.push(tf);
        }

        let mut boundary_vertex = vec![false; vertices.len()];
        let mut boundary_edge = vec![false; edge_set.len()];
        for (f, ft) in faces.iter().zip(&face_tets) {
            if ft[1] == NO_TET {
                for &v in f {
                    boundary_vertex[v] = true;
                }
                for (a, b) in [(f[0], f[1]), (f[0], f[2]), (f[1], f[2])] {
                    boundary_edge[edge_lookup[&sorted_pair(a, b)]] = true;
                }
            }
        }

        Ok(Self {
            vertices,
            tets,
            bisection,
            vertex_parents,
            parent_tets,
            edges: edge_set,
            edge_lookup,
            tet_edges,
            tet_edge_signs,
            faces,
            face_tets,
            tet_faces,
            boundary_vertex,
            boundary_edge,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&sorted_pair(a, b)).copied()
    }

    pub fn tet_edges(&self, t: usize) -> &[usize; 6] {
        &self.tet_edges[t]
    }

    /// +1 when the local edge direction agrees with the global (low id to
    /// high id) direction.
    pub fn tet_edge_signs(&self, t: usize) -> &[f64; 6] {
        &self.tet_edge_signs[t]
    }

    /// Face ids of a tet; entry `k` is the face opposite local vertex `k`.
    pub fn tet_faces(&self, t: usize) -> &[usize; 4] {
        &self.tet_faces[t]
    }

    /// Adjacent tets of a face; the second slot is `NO_TET` on the boundary.
    pub fn face_tets(&self, f: usize) -> [usize; 2] {
        self.face_tets[f]
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_tets[f][1] == NO_TET
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn bisection_state(&self, t: usize) -> BisectionState {
        self.bisection[t]
    }

    pub(crate) fn bisection_states(&self) -> &[BisectionState] {
        &self.bisection
    }

    pub fn vertex_parents(&self, v: usize) -> Option<[usize; 2]> {
        self.vertex_parents[v]
    }

    pub(crate) fn all_vertex_parents(&self) -> &[Option<[usize; 2]>] {
        &self.vertex_parents
    }

    /// Source tet ids in the mesh this one was bisected from.
    pub fn parent_tets(&self) -> Option<&[usize]> {
        self.parent_tets.as_deref()
    }

    /// Interior edge ids in ascending order.
    pub fn interior_edges(&self) -> Vec<usize> {
        (0..self.num_edges())
            .filter(|&e| !self.boundary_edge[e])
            .collect()
    }

    /// Interior vertex ids in ascending order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&v| !self.boundary_vertex[v])
            .collect()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        let v = &self.tets[t];
        [
            self.vertices[v[0]],
            self.vertices[v[1]],
            self.vertices[v[2]],
            self.vertices[v[3]],
        ]
    }

    pub fn signed_volume(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        signed_volume_of([&p[0], &p[1], &p[2], &p[3]])
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.signed_volume(t).abs()
    }

    /// Longest vertex distance of a tet.
    pub fn tet_diameter(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        LOCAL_EDGES
            .iter()
            .map(|e| dist(&p[e[0]], &p[e[1]]))
            .fold(0.0, f64::max)
    }

    pub fn face_diameter(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        dist(&a, &b).max(dist(&a, &c)).max(dist(&b, &c))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        let n = cross(&sub(&b, &a), &sub(&c, &a));
        0.5 * dot3(&n, &n).sqrt()
    }

    /// Gradients of the barycentric coordinates of a tet (in `tets()[t]`
    /// vertex order).
    pub fn barycentric_gradients(&self, t: usize) -> [Point; 4] {
        let p = self.tet_points(t);
        let e1 = sub(&p[1], &p[0]);
        let e2 = sub(&p[2], &p[0]);
        let e3 = sub(&p[3], &p[0]);
        let det = dot3(&e1, &cross(&e2, &e3));
        let g1 = cross(&e2, &e3).map(|x| x / det);
        let g2 = cross(&e3, &e1).map(|x| x / det);
        let g3 = cross(&e1, &e2).map(|x| x / det);
        let g0 = [
            -(g1[0] + g2[0] + g3[0]),
            -(g1[1] + g2[1] + g3[1]),
            -(g1[2] + g2[2] + g3[2]),
        ];
        [g0, g1, g2, g3]
    }

    /// Per-edge lists of adjacent tets.
    pub fn edge_patches(&self) -> Vec<Vec<usize>> {
        let mut patches = vec![Vec::new(); self.num_edges()];
        for (t, es) in self.tet_edges.iter().enumerate() {
            for &e in es {
                patches[e].push(t);
            }
        }
        patches
    }

    /// Per-vertex lists of adjacent tets.
    pub fn vertex_patches(&self) -> Vec<Vec<usize>> {
        let mut patches = vec![Vec::new(); self.num_vertices()];
        for (t, vs) in self.tets.iter().enumerate() {
            for &v in vs {
                patches[v].push(t);
            }
        }
        patches
    }

    /// Smallest dihedral angle (radians) over all tets.
    pub fn min_dihedral_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.num_tets() {
            let g = self.barycentric_gradients(t);
            // The dihedral angle at the edge opposite faces i, j is π minus
            // the angle between the outward normals -∇λ_i, -∇λ_j.
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let c = dot3(&g[i], &g[j]) / (dot3(&g[i], &g[i]) * dot3(&g[j], &g[j])).sqrt();
                    let angle = std::f64::consts::PI - c.clamp(-1.0, 1.0).acos();
                    best = best.min(angle);
                }
            }
        }
        best
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_tets()).map(|t| self.volume(t)).sum()
    }

    /// Longest edge length of the mesh.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| dist(&self.vertices[e[0]], &self.vertices[e[1]]))
            .fold(0.0, f64::max)
    }

    /// Returns true when some vertex is the recorded midpoint of an edge
    /// that is still present, i.e. the mesh has a hanging node.
    pub fn has_hanging_nodes(&self) -> bool {
        self.vertex_parents.iter().any(|p| match p {
            Some([a, b]) => self.edge_lookup.contains_key(&sorted_pair(*a, *b)),
            None => false,
        })
    }
}
