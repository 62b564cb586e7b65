use std::collections::{HashMap, HashSet};

use super::{MeshError, TetMesh};

/// One level of a nested hierarchy.
#[derive(Debug, Clone)]
pub struct Level {
    pub mesh: TetMesh,
    /// Interior edges (global edge ids of this level) that are new or whose
    /// patch of adjacent tets changed relative to the previous level. On
    /// level 0 this is every interior edge.
    pub smoothing_edges: Vec<usize>,
    /// Interior vertices that are new or whose patch changed.
    pub smoothing_nodes: Vec<usize>,
}

/// Nested sequence of meshes, coarse first.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<Level>,
}

type TetKey = [usize; 4];

fn tet_key(t: &[usize; 4]) -> TetKey {
    let mut k = *t;
    k.sort_unstable();
    k
}

impl MeshHierarchy {
    pub fn new(coarse: TetMesh) -> Self {
        let smoothing_edges = coarse.interior_edges();
        let smoothing_nodes = coarse.interior_vertices();
        Self {
            levels: vec![Level {
                mesh: coarse,
                smoothing_edges,
                smoothing_nodes,
            }],
        }
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Index of the finest level.
    pub fn finest_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn finest(&self) -> &TetMesh {
        &self.levels.last().unwrap().mesh
    }

    /// Appends a mesh produced by `bisect` from the current finest level.
    pub fn extend(&mut self, refined: TetMesh) -> Result<(), MeshError> {
        let coarse = self.finest();
        check_nested(coarse, &refined)?;

        let coarse_patches = keyed_patches(coarse, coarse.edge_patches());
        let fine_patches = keyed_patches(&refined, refined.edge_patches());
        let mut smoothing_edges = Vec::new();
        for e in refined.interior_edges() {
            let [a, b] = refined.edges()[e];
            let changed = match coarse.edge_id(a, b) {
                None => true,
                Some(ce) => coarse_patches[ce] != fine_patches[e],
            };
            if changed {
                smoothing_edges.push(e);
            }
        }

        let coarse_vpatches = keyed_patches(coarse, coarse.vertex_patches());
        let fine_vpatches = keyed_patches(&refined, refined.vertex_patches());
        let smoothing_nodes = refined
            .interior_vertices()
            .into_iter()
            .filter(|&v| v >= coarse.num_vertices() || coarse_vpatches[v] != fine_vpatches[v])
            .collect();

        self.levels.push(Level {
            mesh: refined,
            smoothing_edges,
            smoothing_nodes,
        });
        Ok(())
    }
}

fn keyed_patches(mesh: &TetMesh, patches: Vec<Vec<usize>>) -> Vec<Vec<TetKey>> {
    patches
        .into_iter()
        .map(|p| {
            let mut keys: Vec<TetKey> = p.iter().map(|&t| tet_key(&mesh.tets()[t])).collect();
            keys.sort_unstable();
            keys
        })
        .collect()
}

/// Combinatorial nestedness check: every vertex of a fine tet must expand,
/// through the midpoint genealogy, into vertices of its parent tet.
fn check_nested(coarse: &TetMesh, fine: &TetMesh) -> Result<(), MeshError> {
    let parents = fine
        .parent_tets()
        .ok_or_else(|| MeshError::Hierarchy("refined mesh carries no parent map".into()))?;
    let nc = coarse.num_vertices();
    if fine.num_vertices() < nc || fine.vertices()[..nc] != coarse.vertices()[..] {
        return Err(MeshError::Hierarchy(
            "refined mesh does not extend the coarse vertex set".into(),
        ));
    }
    if parents.len() != fine.num_tets() || parents.iter().any(|&p| p >= coarse.num_tets()) {
        return Err(MeshError::Hierarchy(
            "parent map does not match the coarse mesh".into(),
        ));
    }

    let mut memo: HashMap<usize, Vec<usize>> = HashMap::new();
    for (t, &p) in parents.iter().enumerate() {
        let allowed: HashSet<usize> = coarse.tets()[p].iter().copied().collect();
        for &v in &fine.tets()[t] {
            for root in ancestors(fine, nc, v, &mut memo) {
                if !allowed.contains(&root) {
                    return Err(MeshError::Hierarchy(format!(
                        "fine tet {t} is not contained in its parent {p}"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn ancestors(
    fine: &TetMesh,
    nc: usize,
    v: usize,
    memo: &mut HashMap<usize, Vec<usize>>,
) -> Vec<usize> {
    if v < nc {
        return vec![v];
    }
    if let Some(r) = memo.get(&v) {
        return r.clone();
    }
    let [a, b] = fine
        .vertex_parents(v)
        .expect("new vertex without genealogy");
    let mut out = ancestors(fine, nc, a, memo);
    out.extend(ancestors(fine, nc, b, memo));
    out.sort_unstable();
    out.dedup();
    memo.insert(v, out.clone());
    out
}
