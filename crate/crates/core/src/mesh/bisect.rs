//! Recursive tetrahedral bisection with conformity closure.
//!
//! Each tet carries an ordered vertex tuple `(x0,x1,x2,x3)` and a tag `k`;
//! its refinement edge is `x0 xk`. Bisecting at the midpoint `z` yields
//! `(x0,…,x_{k-1},z,x_{k+1},…,x3)` and `(x1,…,xk,z,x_{k+1},…,x3)`, both
//! tagged `k-1` (or 3 when `k = 1`). On Kuhn meshes this coincides with
//! longest edge bisection and produces finitely many similarity classes.

use std::collections::HashMap;

use super::{sorted_pair, BisectionState, MeshError, Point, TetMesh};

struct Cell {
    state: BisectionState,
    root: usize,
    children: Option<[usize; 2]>,
}

struct Refiner {
    vertices: Vec<Point>,
    vertex_parents: Vec<Option<[usize; 2]>>,
    cells: Vec<Cell>,
    edge_cells: HashMap<[usize; 2], Vec<usize>>,
    midpoints: HashMap<[usize; 2], usize>,
    steps: usize,
    limit: usize,
}

fn cell_edges(order: &[usize; 4]) -> impl Iterator<Item = [usize; 2]> + '_ {
    super::LOCAL_EDGES
        .iter()
        .map(move |e| sorted_pair(order[e[0]], order[e[1]]))
}

impl Refiner {
    fn new(mesh: &TetMesh, limit: usize) -> Self {
        let mut r = Refiner {
            vertices: mesh.vertices().to_vec(),
            vertex_parents: mesh.all_vertex_parents().to_vec(),
            cells: Vec::with_capacity(2 * mesh.num_tets()),
            edge_cells: HashMap::with_capacity(mesh.num_edges()),
            midpoints: HashMap::new(),
            steps: 0,
            limit,
        };
        for (t, s) in mesh.bisection_states().iter().enumerate() {
            r.push_cell(*s, t);
        }
        r
    }

    fn push_cell(&mut self, state: BisectionState, root: usize) -> usize {
        let id = self.cells.len();
        for e in cell_edges(&state.order) {
            self.edge_cells.entry(e).or_default().push(id);
        }
        self.cells.push(Cell {
            state,
            root,
            children: None,
        });
        id
    }

    fn is_active(&self, c: usize) -> bool {
        self.cells[c].children.is_none()
    }

    fn midpoint(&mut self, e: [usize; 2]) -> usize {
        if let Some(&m) = self.midpoints.get(&e) {
            return m;
        }
        let (a, b) = (self.vertices[e[0]], self.vertices[e[1]]);
        let id = self.vertices.len();
        self.vertices.push([
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
        ]);
        self.vertex_parents.push(Some(e));
        self.midpoints.insert(e, id);
        id
    }

    fn split(&mut self, c: usize, z: usize) {
        let BisectionState { order: x, tag } = self.cells[c].state;
        let k = tag as usize;
        let mut first = x;
        first[k] = z;
        let mut second = [0usize; 4];
        second[..k].copy_from_slice(&x[1..=k]);
        second[k] = z;
        second[k + 1..].copy_from_slice(&x[k + 1..]);
        let new_tag = if k > 1 { tag - 1 } else { 3 };

        for e in cell_edges(&x) {
            if let Some(list) = self.edge_cells.get_mut(&e) {
                list.retain(|&other| other != c);
            }
        }
        let root = self.cells[c].root;
        let c0 = self.push_cell(
            BisectionState {
                order: first,
                tag: new_tag,
            },
            root,
        );
        let c1 = self.push_cell(
            BisectionState {
                order: second,
                tag: new_tag,
            },
            root,
        );
        self.cells[c].children = Some([c0, c1]);
    }

    fn tick(&mut self) -> Result<(), MeshError> {
        self.steps += 1;
        if self.steps > self.limit {
            return Err(MeshError::Refinement { limit: self.limit });
        }
        Ok(())
    }

    /// Bisects `c` across its refinement edge, first refining every
    /// neighbour around that edge until the edge is their refinement edge too.
    fn refine(&mut self, c: usize) -> Result<(), MeshError> {
        loop {
            if !self.is_active(c) {
                return Ok(());
            }
            self.tick()?;
            let e = self.cells[c].state.refinement_edge();
            let blocker = self.edge_cells[&e]
                .iter()
                .copied()
                .find(|&n| self.cells[n].state.refinement_edge() != e);
            match blocker {
                Some(n) => self.refine(n)?,
                None => break,
            }
        }
        let e = self.cells[c].state.refinement_edge();
        let z = self.midpoint(e);
        let patch = self.edge_cells[&e].clone();
        for n in patch {
            self.tick()?;
            self.split(n, z);
        }
        Ok(())
    }

    fn collect_leaves(&self, c: usize, out: &mut Vec<(BisectionState, usize)>) {
        match self.cells[c].children {
            None => out.push((self.cells[c].state, self.cells[c].root)),
            Some([a, b]) => {
                self.collect_leaves(a, out);
                self.collect_leaves(b, out);
            }
        }
    }
}

/// Bisects every marked tet once (plus closure bisections) and returns the
/// refined, conforming mesh. The closure step budget defaults to 100 × #tets.
pub fn bisect(mesh: &TetMesh, marked: &[usize]) -> Result<TetMesh, MeshError> {
    bisect_with_limit(mesh, marked, 100 * mesh.num_tets().max(1))
}

pub fn bisect_with_limit(
    mesh: &TetMesh,
    marked: &[usize],
    limit: usize,
) -> Result<TetMesh, MeshError> {
    let n_roots = mesh.num_tets();
    if let Some(&bad) = marked.iter().find(|&&t| t >= n_roots) {
        return Err(MeshError::Invalid(format!("marked tet {bad} out of range")));
    }
    let mut r = Refiner::new(mesh, limit);
    let mut sorted: Vec<usize> = marked.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for t in sorted {
        // Roots occupy cell ids 0..n_roots; an already refined root has been
        // bisected by an earlier closure.
        r.refine(t)?;
    }

    let mut leaves = Vec::with_capacity(r.cells.len());
    for root in 0..n_roots {
        r.collect_leaves(root, &mut leaves);
    }
    let (states, parents): (Vec<_>, Vec<_>) = leaves.into_iter().unzip();
    TetMesh::from_parts(r.vertices, states, r.vertex_parents, Some(parents))
}
