mod common;

use std::collections::{HashMap, HashSet};

use common::{cavity, fichera, local_hierarchy, refine_all};
use phjd_core::mesh::{
    bisect, format_mesh, generate_domain, parse_mesh, read_mesh, write_mesh, DomainSpec, MeshError,
    MeshHierarchy, TetMesh,
};
use proptest::prelude::*;

fn key(p: &[f64; 3]) -> [u64; 3] {
    [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]
}

/// Faces hashed by sorted vertex triple: each must belong to one or two tets,
/// and no edge midpoint may coincide with a mesh vertex.
fn assert_conforming(mesh: &TetMesh) {
    let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
    for t in mesh.tets() {
        for skip in 0..4 {
            let mut f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| t[k]).collect();
            f.sort_unstable();
            *faces.entry([f[0], f[1], f[2]]).or_default() += 1;
        }
    }
    assert!(faces.values().all(|&c| c == 1 || c == 2));
    assert_eq!(faces.len(), mesh.num_faces());
    let verts: HashSet<[u64; 3]> = mesh.vertices().iter().map(key).collect();
    for e in mesh.edges() {
        let (a, b) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
        let mid = [
            (a[0] + b[0]) * 0.5,
            (a[1] + b[1]) * 0.5,
            (a[2] + b[2]) * 0.5,
        ];
        assert!(!verts.contains(&key(&mid)), "hanging node on edge {e:?}");
    }
    assert!(!mesh.has_hanging_nodes());
}

fn tet_patch_keys(mesh: &TetMesh, tets: &[usize]) -> Vec<[usize; 4]> {
    let mut out: Vec<[usize; 4]> = tets
        .iter()
        .map(|&t| {
            let mut k = mesh.tets()[t];
            k.sort_unstable();
            k
        })
        .collect();
    out.sort_unstable();
    out
}

/// Brute-force smoothing sets: new edges plus surviving edges whose set of
/// adjacent tets changed.
fn brute_force_smoothing_edges(coarse: &TetMesh, fine: &TetMesh) -> Vec<usize> {
    let adjacent = |m: &TetMesh, a: usize, b: usize| -> Vec<[usize; 4]> {
        let tets: Vec<usize> = (0..m.num_tets())
            .filter(|&t| m.tets()[t].contains(&a) && m.tets()[t].contains(&b))
            .collect();
        tet_patch_keys(m, &tets)
    };
    fine.interior_edges()
        .into_iter()
        .filter(|&e| {
            let [a, b] = fine.edges()[e];
            coarse.edge_id(a, b).is_none() || adjacent(coarse, a, b) != adjacent(fine, a, b)
        })
        .collect()
}

#[test]
fn single_cube_counts() {
    let m = generate_domain(&DomainSpec::unit_box(1)).unwrap();
    assert_eq!((m.num_vertices(), m.num_tets(), m.num_edges()), (8, 6, 19));
    assert_conforming(&m);
}

#[test]
fn fichera_has_42_tets_and_matched_faces() {
    let m = generate_domain(&fichera(1)).unwrap();
    assert_eq!(m.num_tets(), 42);
    assert_conforming(&m);
    let side = 2.0 * std::f64::consts::PI;
    assert!((m.total_volume() - 7.0 / 8.0 * side.powi(3)).abs() < 1e-10);
}

#[test]
fn zero_subdivision_is_a_configuration_error() {
    let spec = DomainSpec::Box {
        a: 1.0,
        b: 1.0,
        c: 1.0,
        nx: 0,
        ny: 1,
        nz: 1,
    };
    assert!(matches!(generate_domain(&spec), Err(MeshError::Config(_))));
    let spec = DomainSpec::Box {
        a: -1.0,
        b: 1.0,
        c: 1.0,
        nx: 1,
        ny: 1,
        nz: 1,
    };
    assert!(generate_domain(&spec).is_err());
}

#[test]
fn single_marked_tet_is_closed_conformingly() {
    let m = generate_domain(&DomainSpec::unit_box(1)).unwrap();
    let r = bisect(&m, &[2]).unwrap();
    assert!(r.num_tets() >= 7);
    assert_conforming(&r);
    assert!((r.total_volume() - 1.0).abs() < 1e-14);
}

#[test]
fn three_uniform_sweeps_nest_and_double() {
    let mut h = MeshHierarchy::new(generate_domain(&DomainSpec::unit_box(1)).unwrap());
    for sweep in 1..=3 {
        let fine = refine_all(h.finest());
        assert_eq!(fine.num_tets(), 6 << sweep);
        assert_conforming(&fine);
        h.extend(fine).unwrap();
    }
    // Children lie inside their parents: barycentric coordinates of every
    // child vertex with respect to the parent are nonnegative.
    for l in 1..h.num_levels() {
        let (coarse, fine) = (&h.level(l - 1).mesh, &h.level(l).mesh);
        let parents = fine.parent_tets().unwrap();
        let mut vol = vec![0.0; coarse.num_tets()];
        for (t, &p) in parents.iter().enumerate() {
            vol[p] += fine.volume(t);
            let g = coarse.barycentric_gradients(p);
            let x0 = coarse.tet_points(p)[0];
            for q in fine.tet_points(t) {
                let d = [q[0] - x0[0], q[1] - x0[1], q[2] - x0[2]];
                let lam: Vec<f64> = (1..4)
                    .map(|k| g[k][0] * d[0] + g[k][1] * d[1] + g[k][2] * d[2])
                    .collect();
                let l0 = 1.0 - lam.iter().sum::<f64>();
                assert!(l0 >= -1e-12 && lam.iter().all(|&x| x >= -1e-12));
            }
        }
        for p in 0..coarse.num_tets() {
            assert!((vol[p] - coarse.volume(p)).abs() <= 1e-12 * coarse.volume(p));
        }
    }
}

#[test]
fn uniform_refinement_smoothing_sets_match_brute_force() {
    let h = common::uniform_hierarchy(&DomainSpec::unit_box(2), 2);
    for l in 1..h.num_levels() {
        let want = brute_force_smoothing_edges(&h.level(l - 1).mesh, &h.level(l).mesh);
        let mut got = h.level(l).smoothing_edges.clone();
        got.sort_unstable();
        // A full bisection sweep splits every tet, so every surviving edge
        // sees its patch change and the set is all interior edges.
        assert_eq!(got, want);
        assert_eq!(got, h.level(l).mesh.interior_edges());
    }
}

#[test]
fn one_tet_refinement_smoothing_sets_match_brute_force() {
    let m = generate_domain(&DomainSpec::unit_box(2)).unwrap();
    let mut h = MeshHierarchy::new(m);
    let fine = bisect(h.finest(), &[17]).unwrap();
    h.extend(fine).unwrap();
    let want = brute_force_smoothing_edges(&h.level(0).mesh, &h.level(1).mesh);
    let mut got = h.level(1).smoothing_edges.clone();
    got.sort_unstable();
    assert_eq!(got, want);
    assert!(!got.is_empty() && got.len() < h.level(1).mesh.interior_edges().len());
}

#[test]
fn min_dihedral_angle_does_not_degrade() {
    let h = local_hierarchy(&fichera(1), 12, [std::f64::consts::PI; 3], 2.0);
    let initial = h.level(0).mesh.min_dihedral_angle();
    for level in h.levels() {
        assert!(level.mesh.min_dihedral_angle() >= initial - 1e-12);
        assert_conforming(&level.mesh);
    }
}

#[test]
fn refined_fichera_round_trips_through_a_file() {
    let m = refine_all(&refine_all(&generate_domain(&fichera(1)).unwrap()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    write_mesh(&m, &path).unwrap();
    let back = read_mesh(&path).unwrap();
    assert_eq!(back.num_tets(), m.num_tets());
    assert_eq!(back.num_edges(), m.num_edges());
    assert_eq!(back.num_faces(), m.num_faces());
    assert_eq!(back.vertices(), m.vertices());
    assert_eq!(format_mesh(&back), format_mesh(&m));
}

#[test]
fn three_vertex_tet_line_reports_line_number() {
    let m = generate_domain(&DomainSpec::unit_box(1)).unwrap();
    let mut text = format_mesh(&m);
    let bad_line = text.lines().count();
    text = text.trim_end().rsplit_once('\n').unwrap().0.to_string();
    text.push_str("\n0 1 2\n");
    match parse_mesh(&text) {
        Err(MeshError::Parse { line, .. }) => assert_eq!(line, bad_line),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn appended_identical_mesh_has_empty_smoothing_sets() {
    let m = generate_domain(&cavity(2, 2, 2)).unwrap();
    let mut h = MeshHierarchy::new(m);
    let same = bisect(h.finest(), &[]).unwrap();
    h.extend(same).unwrap();
    assert!(h.level(1).smoothing_edges.is_empty());
    assert!(h.level(1).smoothing_nodes.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_markings_stay_conforming_and_nested(
        rounds in proptest::collection::vec(proptest::collection::vec(0usize..10_000, 1..6), 1..5)
    ) {
        let mut h = MeshHierarchy::new(generate_domain(&fichera(1)).unwrap());
        let volume = h.finest().total_volume();
        for picks in rounds {
            let m = h.finest();
            let marked: Vec<usize> = picks.iter().map(|p| p % m.num_tets()).collect();
            let fine = bisect(m, &marked).unwrap();
            prop_assert!(fine.num_tets() > m.num_tets());
            prop_assert!((0..fine.num_tets()).all(|t| fine.signed_volume(t) > 0.0));
            prop_assert!((fine.total_volume() - volume).abs() <= 1e-12 * volume);
            assert_conforming(&fine);
            // Vertex ids are stable across levels.
            prop_assert_eq!(&fine.vertices()[..m.num_vertices()], m.vertices());
            h.extend(fine).unwrap();
            let lvl = h.level(h.finest_index());
            let want = brute_force_smoothing_edges(&h.level(h.finest_index() - 1).mesh, &lvl.mesh);
            let mut got = lvl.smoothing_edges.clone();
            got.sort_unstable();
            prop_assert_eq!(got, want);
        }
    }
}
