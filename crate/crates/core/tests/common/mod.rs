#![allow(dead_code)]

pub mod oracle;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use phjd_core::coarse::{CoarseEigenOptions, CoarseLevel};
use phjd_core::dense::pencil_eigen;
use phjd_core::fem::LevelOperators;
use phjd_core::helmholtz::ProjectionContext;
use phjd_core::mesh::{bisect, generate_domain, DomainSpec, MeshHierarchy, TetMesh};
use phjd_core::multilevel::HierarchyOperators;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BOX_LAMBDA1: f64 = 1.5208907;

pub fn cavity(nx: usize, ny: usize, nz: usize) -> DomainSpec {
    DomainSpec::Box {
        a: PI,
        b: 1.1 * PI,
        c: 1.2 * PI,
        nx,
        ny,
        nz,
    }
}

pub fn fichera(n: usize) -> DomainSpec {
    DomainSpec::Fichera { side: 2.0 * PI, n }
}

pub fn refine_all(mesh: &TetMesh) -> TetMesh {
    let all: Vec<usize> = (0..mesh.num_tets()).collect();
    bisect(mesh, &all).unwrap()
}

/// Hierarchy whose levels after the first are `sweeps` uniform bisections.
pub fn uniform_hierarchy(spec: &DomainSpec, sweeps: usize) -> MeshHierarchy {
    let mut h = MeshHierarchy::new(generate_domain(spec).unwrap());
    for _ in 0..sweeps {
        let fine = refine_all(h.finest());
        h.extend(fine).unwrap();
    }
    h
}

/// Hierarchy refined locally around the point `p`: each step bisects the
/// tets whose centroid lies within `radius` of `p`.
pub fn local_hierarchy(spec: &DomainSpec, steps: usize, p: [f64; 3], radius: f64) -> MeshHierarchy {
    let mut h = MeshHierarchy::new(generate_domain(spec).unwrap());
    for _ in 0..steps {
        let m = h.finest();
        let marked: Vec<usize> = (0..m.num_tets())
            .filter(|&t| {
                let pts = m.tet_points(t);
                let c: Vec<f64> = (0..3)
                    .map(|d| pts.iter().map(|q| q[d]).sum::<f64>() / 4.0)
                    .collect();
                ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2)).sqrt()
                    < radius
            })
            .collect();
        let fine = bisect(m, &marked).unwrap();
        h.extend(fine).unwrap();
    }
    h
}

pub fn coarse_level(hops: &HierarchyOperators) -> CoarseLevel {
    let ctx = ProjectionContext::new(hops, 0, 1e-12).unwrap();
    CoarseLevel::new(hops.coarse(), &ctx, &CoarseEigenOptions::default()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Nonzero eigenvalues of the level pencil, ascending, from a dense solve.
pub fn dense_nonzero_eigenvalues(ops: &LevelOperators) -> Vec<f64> {
    let eig = pencil_eigen(&ops.a.to_dense(), &ops.m.to_dense()).unwrap();
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kernel = eig.values.iter().filter(|&&v| v <= 1e-8 * top).count();
    assert_eq!(
        kernel,
        ops.num_node_dofs(),
        "kernel dimension equals interior node count"
    );
    eig.values[kernel..].to_vec()
}

pub fn mat_from(v: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(v[0].len(), v.len(), |i, j| v[j][i])
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
