//! Per-level operators of a mesh hierarchy together with the inter-level
//! transfers and the local smoothing sets expressed in dof numbering.

use crate::fem::{self, FemError, LevelOperators};
use crate::mesh::MeshHierarchy;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct LevelData {
    pub ops: LevelOperators,
    /// Edge prolongation from the previous level (absent on level 0).
    pub prolong: Option<CsrMatrix>,
    pub prolong_t: Option<CsrMatrix>,
    pub nodal_prolong: Option<CsrMatrix>,
    pub nodal_prolong_t: Option<CsrMatrix>,
    /// Edge dofs smoothed on this level, ascending.
    pub smoothing_edges: Vec<usize>,
    /// Node dofs smoothed on this level.
    pub smoothing_nodes: Vec<usize>,
}

/// Operators for every level of a hierarchy, extended in step with it.
#[derive(Debug, Clone, Default)]
pub struct HierarchyOperators {
    levels: Vec<LevelData>,
}

impl HierarchyOperators {
    pub fn build(h: &MeshHierarchy) -> Result<Self, FemError> {
        let mut out = Self::default();
        for _ in 0..h.num_levels() {
            out.sync(h)?;
        }
        Ok(out)
    }

    /// Assembles operators for the next level of `h` not yet covered.
    pub fn sync(&mut self, h: &MeshHierarchy) -> Result<(), FemError> {
        let l = self.levels.len();
        if l >= h.num_levels() {
            return Ok(());
        }
        let level = h.level(l);
        let ops = fem::assemble(&level.mesh)?;
        let mut smoothing_edges: Vec<usize> = level
            .smoothing_edges
            .iter()
            .map(|&e| ops.edge_dof[e])
            .collect();
        let mut smoothing_nodes: Vec<usize> = level
            .smoothing_nodes
            .iter()
            .map(|&v| ops.node_dof[v])
            .collect();
        smoothing_edges.sort_unstable();
        smoothing_nodes.sort_unstable();
        let (prolong, nodal_prolong) = if l == 0 {
            (None, None)
        } else {
            (
                Some(fem::prolongation(h, l)?),
                Some(fem::nodal_prolongation(h, l)?),
            )
        };
        self.levels.push(LevelData {
            prolong_t: prolong.as_ref().map(CsrMatrix::transpose),
            nodal_prolong_t: nodal_prolong.as_ref().map(CsrMatrix::transpose),
            prolong,
            nodal_prolong,
            ops,
            smoothing_edges,
            smoothing_nodes,
        });
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &LevelData {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[LevelData] {
        &self.levels
    }

    pub fn finest(&self) -> &LevelOperators {
        &self.levels.last().expect("non-empty hierarchy").ops
    }

    pub fn coarse(&self) -> &LevelOperators {
        &self.levels[0].ops
    }

    /// Prolongs a level-`from` edge vector up to level `to`.
    pub fn prolong_edges(&self, from: usize, to: usize, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for l in from + 1..=to {
            v = self.levels[l].prolong.as_ref().unwrap().mul_vec(&v);
        }
        v
    }

    /// Restricts a level-`from` edge covector down to level `to`.
    pub fn restrict_edges(&self, from: usize, to: usize, g: &[f64]) -> Vec<f64> {
        let mut v = g.to_vec();
        for l in (to + 1..=from).rev() {
            v = self.levels[l].prolong_t.as_ref().unwrap().mul_vec(&v);
        }
        v
    }

    /// Total number of smoothed edge dofs over levels `1..=L`.
    pub fn total_smoothing_edges(&self) -> usize {
        self.levels
            .iter()
            .skip(1)
            .map(|l| l.smoothing_edges.len())
            .sum()
    }

    /// View of the first `n` levels, for building coarser-level solvers.
    pub fn truncated(&self, n: usize) -> HierarchyOperators {
        HierarchyOperators {
            levels: self.levels[..n].to_vec(),
        }
    }
}
