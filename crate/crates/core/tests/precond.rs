mod common;

use std::f64::consts::PI;

use common::{
    cavity, coarse_level, fichera, local_hierarchy, max_abs, max_abs_diff, random_vec, rng,
};
use phjd_core::coarse::CoarseLevel;
use phjd_core::helmholtz::ProjectionContext;
use phjd_core::mesh::MeshHierarchy;
use phjd_core::multilevel::HierarchyOperators;
use phjd_core::precond::{
    verify_error_identity, PrecondConfig, PrecondError, PrecondWorkspace, SmootherKind,
};
use phjd_core::sparse::{dot, norm};

const JACOBI: PrecondConfig = PrecondConfig {
    gamma: 0.5,
    smoother: SmootherKind::Jacobi,
};
const GS: PrecondConfig = PrecondConfig {
    gamma: 0.5,
    smoother: SmootherKind::GaussSeidel,
};

/// Cavity with two local refinements at a corner region; under 200 dofs.
fn tiny() -> MeshHierarchy {
    local_hierarchy(&cavity(2, 2, 2), 2, [0.0; 3], 3.0)
}

/// Fichera hierarchy refined twice around the reentrant corner.
fn fichera_patch() -> MeshHierarchy {
    local_hierarchy(&fichera(1), 2, [PI; 3], 3.0)
}

fn setup(h: &MeshHierarchy) -> (HierarchyOperators, CoarseLevel) {
    let hops = HierarchyOperators::build(h).unwrap();
    let coarse = coarse_level(&hops);
    (hops, coarse)
}

/// Applies `Q₂` (gradient removal plus deflation of `u`) on the finest level.
fn q2(ctx: &ProjectionContext<'_>, hops: &HierarchyOperators, u: &[f64], x: &[f64]) -> Vec<f64> {
    let m = &hops.finest().m;
    let mut y = ctx.project_div_free(x).unwrap();
    let c = dot(&y, &m.mul_vec(u)) / dot(u, &m.mul_vec(u));
    y.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
    y
}

#[test]
fn single_level_apply_is_the_deflated_coarse_solve() {
    let h = local_hierarchy(&cavity(2, 3, 3), 0, [0.0; 3], 0.0);
    let (hops, coarse) = setup(&h);
    let ops = hops.finest();
    let shift = 0.7 * coarse.pair().lambda1;
    let ws = PrecondWorkspace::build(&hops, &coarse, JACOBI, shift).unwrap();
    let mut r = rng(1);
    let g = random_vec(&mut r, ops.num_edge_dofs());
    let y = ws.apply(&g).unwrap();
    assert_eq!(y, coarse.solve(&g, shift).unwrap());

    // Oracle: y lies in the deflated complement and the shifted residual
    // vanishes against every vector of that complement.
    let ctx = ProjectionContext::finest(&hops).unwrap();
    let u = &coarse.pair().u;
    assert!(max_abs_diff(&q2(&ctx, &hops, u, &y), &y) <= 1e-10 * max_abs(&y));
    let mut res = ops.shifted(shift).mul_vec(&y);
    res.iter_mut().zip(&g).for_each(|(a, b)| *a -= b);
    for _ in 0..10 {
        let w = q2(&ctx, &hops, u, &random_vec(&mut r, ops.num_edge_dofs()));
        assert!(dot(&w, &res).abs() <= 1e-10 * norm(&w) * norm(&g));
    }
}

#[test]
fn apply_is_linear() {
    let (hops, coarse) = setup(&fichera_patch());
    let n = hops.finest().num_edge_dofs();
    let mut r = rng(2);
    for cfg in [JACOBI, GS] {
        let ws = PrecondWorkspace::build(&hops, &coarse, cfg, coarse.pair().lambda1).unwrap();
        let (g1, g2) = (random_vec(&mut r, n), random_vec(&mut r, n));
        let (a, b) = (1.7, -0.3);
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let lhs = ws.apply(&mix).unwrap();
        let (y1, y2) = (ws.apply(&g1).unwrap(), ws.apply(&g2).unwrap());
        let rhs: Vec<f64> = y1.iter().zip(&y2).map(|(x, y)| a * x + b * y).collect();
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-12 * max_abs(&lhs));
    }
}

#[test]
fn finest_correction_is_confined_to_smoothing_edges() {
    let (hops, coarse) = setup(&fichera_patch());
    let top = hops.finest_index();
    let below = hops.truncated(top);
    let n = hops.finest().num_edge_dofs();
    let g = random_vec(&mut rng(3), n);
    let shift = coarse.pair().lambda1;
    for cfg in [JACOBI, GS] {
        let y = PrecondWorkspace::build(&hops, &coarse, cfg, shift)
            .unwrap()
            .apply(&g)
            .unwrap();
        let gc = hops.restrict_edges(top, top - 1, &g);
        let yc = PrecondWorkspace::build(&below, &coarse, cfg, shift)
            .unwrap()
            .apply(&gc)
            .unwrap();
        let py = hops.prolong_edges(top - 1, top, &yc);
        let smoothed = &hops.level(top).smoothing_edges;
        let mut touched = 0;
        for i in 0..n {
            if smoothed.binary_search(&i).is_err() {
                assert_eq!(y[i], py[i], "dof {i} outside the smoothing set changed");
            } else if y[i] != py[i] {
                touched += 1;
            }
        }
        assert!(touched > 0);
    }
}

#[test]
fn reverse_sweep_is_the_energy_adjoint() {
    let (hops, coarse) = setup(&tiny());
    let n = hops.finest().num_edge_dofs();
    assert!(n <= 200, "{n} dofs");
    let mut r = rng(4);
    for cfg in [JACOBI, GS] {
        let ws = PrecondWorkspace::build(&hops, &coarse, cfg, 0.5 * coarse.pair().lambda1).unwrap();
        for _ in 0..20 {
            let (v, w) = (random_vec(&mut r, n), random_vec(&mut r, n));
            let lhs = ws.energy_inner(&ws.error_operator(&v).unwrap(), &w);
            let rhs = ws.energy_inner(&v, &ws.reverse_error_operator(&w).unwrap());
            let scale = ws.energy_inner(&v, &v).abs().sqrt() * ws.energy_inner(&w, &w).abs().sqrt();
            assert!(
                (lhs - rhs).abs() <= 1e-11 * scale,
                "{cfg:?}: {lhs} vs {rhs}"
            );
        }
    }
}

#[test]
fn error_identity_on_single_level() {
    let (hops, coarse) = setup(&local_hierarchy(&cavity(2, 2, 2), 0, [0.0; 3], 0.0));
    assert!(verify_error_identity(&hops, &coarse, JACOBI, 0.0).unwrap());
}

#[test]
fn error_identity_on_two_level_cavity_without_shift() {
    let (hops, coarse) = setup(&common::uniform_hierarchy(&cavity(2, 2, 2), 1));
    assert!(hops.finest().num_edge_dofs() <= 300);
    for cfg in [JACOBI, GS] {
        let ws = PrecondWorkspace::build(&hops, &coarse, cfg, 0.0).unwrap();
        let d = ws.error_identity_discrepancy(10, 7).unwrap();
        assert!(d <= 1e-11, "{cfg:?}: {d:e}");
    }
}

#[test]
fn error_identity_on_three_level_fichera_patch() {
    let (hops, coarse) = setup(&fichera_patch());
    assert_eq!(hops.num_levels(), 3);
    assert!(
        hops.finest().num_edge_dofs() <= 300,
        "{}",
        hops.finest().num_edge_dofs()
    );
    for cfg in [JACOBI, GS] {
        assert!(verify_error_identity(&hops, &coarse, cfg, coarse.pair().lambda1).unwrap());
    }
}

#[test]
fn projected_error_operator_contracts_monotonically() {
    let (hops, coarse) = setup(&local_hierarchy(&cavity(2, 3, 3), 3, [0.0; 3], 3.0));
    let ctx = ProjectionContext::finest(&hops).unwrap();
    let u = hops.prolong_edges(0, hops.finest_index(), &coarse.pair().u);
    let n = hops.finest().num_edge_dofs();
    for cfg in [JACOBI, GS] {
        let ws = PrecondWorkspace::build(&hops, &coarse, cfg, 0.0).unwrap();
        let mut v = q2(&ctx, &hops, &u, &random_vec(&mut rng(5), n));
        let mut prev = ws.energy_inner(&v, &v).sqrt();
        for _ in 0..6 {
            v = q2(&ctx, &hops, &u, &ws.error_operator(&v).unwrap());
            let next = ws.energy_inner(&v, &v).sqrt();
            assert!(next < prev, "{cfg:?}: {next} ≥ {prev}");
            prev = next;
        }
        let theta = ws.measure_contraction(&ctx, &u, 3, 4, 1).unwrap();
        assert!(theta > 0.0 && theta < 1.0, "θ̂ = {theta}");
    }
}

#[test]
fn exact_single_level_solve_has_zero_contraction() {
    let (hops, coarse) = setup(&local_hierarchy(&cavity(2, 3, 3), 0, [0.0; 3], 0.0));
    let ctx = ProjectionContext::finest(&hops).unwrap();
    let ws = PrecondWorkspace::build(&hops, &coarse, JACOBI, 0.9 * coarse.pair().lambda1).unwrap();
    let theta = ws
        .measure_contraction(&ctx, &coarse.pair().u, 4, 1, 3)
        .unwrap();
    assert!(theta < 1e-9, "θ̂ = {theta}");
}

#[test]
fn huge_shift_is_rejected_at_build() {
    let (hops, coarse) = setup(&tiny());
    match PrecondWorkspace::build(&hops, &coarse, JACOBI, 1e6) {
        Err(PrecondError::ShiftTooLarge { level, value, .. }) => {
            assert!(level >= 1 && value <= 0.0)
        }
        other => panic!("expected ShiftTooLarge, got {:?}", other.err()),
    }
    assert!(matches!(
        PrecondWorkspace::build(&hops, &coarse, JACOBI, -1.0),
        Err(PrecondError::NegativeShift(_))
    ));
    for gamma in [0.0, 1.0] {
        let cfg = PrecondConfig { gamma, ..JACOBI };
        assert!(matches!(
            PrecondWorkspace::build(&hops, &coarse, cfg, 0.0),
            Err(PrecondError::BadDamping(_))
        ));
    }
}

#[test]
fn unshifted_diagonals_are_stiffness_diagonals() {
    let (hops, coarse) = setup(&tiny());
    let ws = PrecondWorkspace::build(&hops, &coarse, JACOBI, 0.0).unwrap();
    for l in 1..hops.num_levels() {
        let a = &hops.level(l).ops.a;
        let want: Vec<f64> = hops
            .level(l)
            .smoothing_edges
            .iter()
            .map(|&i| a.get(i, i))
            .collect();
        assert_eq!(ws.diagonals(l), want.as_slice());
        assert!(want.iter().all(|&d| d > 0.0));
    }
}

#[test]
fn smoothing_work_is_proportional_to_finest_edges() {
    let h = local_hierarchy(&fichera(1), 8, [PI; 3], 3.0);
    let hops = HierarchyOperators::build(&h).unwrap();
    let total = hops.total_smoothing_edges();
    assert!(total > hops.finest().num_edge_dofs());
    assert!(
        total as f64 <= 4.0 * hops.finest().num_edge_dofs() as f64,
        "{total}"
    );
}
