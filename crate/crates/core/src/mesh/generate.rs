use serde::{Deserialize, Serialize};

use super::{BisectionState, MeshError, Point, TetMesh};

/// Built-in domains. Every hexahedral cell is split into the six Kuhn
/// tetrahedra sharing its main diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    /// `(0,a) × (0,b) × (0,c)` with `nx × ny × nz` cells.
    Box {
        a: f64,
        b: f64,
        c: f64,
        nx: usize,
        ny: usize,
        nz: usize,
    },
    /// `(0,side)³` minus the octant `(side/2,side)³`, with `n` cells per
    /// half side.
    Fichera { side: f64, n: usize },
}

impl DomainSpec {
    pub fn unit_box(n: usize) -> Self {
        DomainSpec::Box {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            nx: n,
            ny: n,
            nz: n,
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        match *self {
            DomainSpec::Box {
                a,
                b,
                c,
                nx,
                ny,
                nz,
            } => {
                if !(a > 0.0 && b > 0.0 && c > 0.0)
                    || !(a.is_finite() && b.is_finite() && c.is_finite())
                {
                    return Err(MeshError::Config(format!(
                        "box sides must be positive, got ({a}, {b}, {c})"
                    )));
                }
                if nx == 0 || ny == 0 || nz == 0 {
                    return Err(MeshError::Config(format!(
                        "box subdivision counts must be at least 1, got ({nx}, {ny}, {nz})"
                    )));
                }
            }
            DomainSpec::Fichera { side, n } => {
                if !(side > 0.0 && side.is_finite()) {
                    return Err(MeshError::Config(format!(
                        "fichera side must be positive, got {side}"
                    )));
                }
                if n == 0 {
                    return Err(MeshError::Config(
                        "fichera subdivision count must be at least 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Kuhn paths: each permutation of the axes gives one tet
/// `v0 → v0+e_σ0 → … → v0+e_σ0+e_σ1+e_σ2`.
const AXIS_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

pub fn generate_domain(spec: &DomainSpec) -> Result<TetMesh, MeshError> {
    spec.validate()?;
    let (counts, spacing, keep): ([usize; 3], [f64; 3], Box<dyn Fn([usize; 3]) -> bool>) =
        match *spec {
            DomainSpec::Box {
                a,
                b,
                c,
                nx,
                ny,
                nz,
            } => (
                [nx, ny, nz],
                [a / nx as f64, b / ny as f64, c / nz as f64],
                Box::new(|_| true),
            ),
            DomainSpec::Fichera { side, n } => {
                let h = side / (2 * n) as f64;
                (
                    [2 * n, 2 * n, 2 * n],
                    [h, h, h],
                    Box::new(move |c: [usize; 3]| !(c[0] >= n && c[1] >= n && c[2] >= n)),
                )
            }
        };

    let [nx, ny, nz] = counts;
    let grid_id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut vertex_of_grid = vec![usize::MAX; (nx + 1) * (ny + 1) * (nz + 1)];
    let mut cells = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if keep([i, j, k]) {
                    cells.push([i, j, k]);
                    for dk in 0..2 {
                        for dj in 0..2 {
                            for di in 0..2 {
                                vertex_of_grid[grid_id(i + di, j + dj, k + dk)] = 0;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut vertices: Vec<Point> = Vec::new();
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let g = grid_id(i, j, k);
                if vertex_of_grid[g] != usize::MAX {
                    vertex_of_grid[g] = vertices.len();
                    vertices.push([
                        i as f64 * spacing[0],
                        j as f64 * spacing[1],
                        k as f64 * spacing[2],
                    ]);
                }
            }
        }
    }

    let mut bisection = Vec::with_capacity(6 * cells.len());
    for cell in &cells {
        for perm in &AXIS_PERMUTATIONS {
            let mut pos = *cell;
            let mut order = [0usize; 4];
            order[0] = vertex_of_grid[grid_id(pos[0], pos[1], pos[2])];
            for (step, &axis) in perm.iter().enumerate() {
                pos[axis] += 1;
                order[step + 1] = vertex_of_grid[grid_id(pos[0], pos[1], pos[2])];
            }
            // The Kuhn diagonal v0–v3 is the longest edge of each tet.
            bisection.push(BisectionState { order, tag: 3 });
        }
    }

    let nv = vertices.len();
    TetMesh::from_parts(vertices, bisection, vec![None; nv], None)
}
