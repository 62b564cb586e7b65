//! Plain-text mesh format:
//!
//! ```text
//! tetmesh 1
//! vertices N
//! x y z            (N lines)
//! tets M
//! a b c d          (M lines, zero-based vertex ids)
//! ```
//!
//! Boundary entities are inferred from faces with a single adjacent tet.

use std::fmt::Write as _;
use std::path::Path;

use super::{
    dist, signed_volume_of, sorted_pair, BisectionState, MeshError, Point, TetMesh, LOCAL_EDGES,
};

pub fn format_mesh(mesh: &TetMesh) -> String {
    let mut s = String::new();
    s.push_str("tetmesh 1\n");
    let _ = writeln!(s, "vertices {}", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    let _ = writeln!(s, "tets {}", mesh.num_tets());
    for t in mesh.tets() {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    s
}

pub fn write_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TetMesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn counted_header(
    lines: &mut std::iter::Enumerate<std::str::Lines<'_>>,
    keyword: &str,
) -> Result<usize, MeshError> {
    let (i, line) = lines
        .next()
        .ok_or_else(|| parse_err(0, format!("missing `{keyword}` header")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(parse_err(i + 1, format!("expected `{keyword} <count>`")));
    }
    let n = parts
        .next()
        .and_then(|c| c.parse::<usize>().ok())
        .ok_or_else(|| parse_err(i + 1, format!("bad `{keyword}` count")))?;
    if parts.next().is_some() {
        return Err(parse_err(i + 1, "trailing tokens"));
    }
    Ok(n)
}

pub fn parse_mesh(text: &str) -> Result<TetMesh, MeshError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "tetmesh 1" => {}
        _ => return Err(parse_err(1, "expected header `tetmesh 1`")),
    }

    let nv = counted_header(&mut lines, "vertices")?;
    let mut vertices: Vec<Point> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (i, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of vertex block"))?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => {
                vertices.push([v[0], v[1], v[2]])
            }
            _ => {
                return Err(parse_err(
                    i + 1,
                    "vertex line must hold three finite numbers",
                ))
            }
        }
    }

    let nt = counted_header(&mut lines, "tets")?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (i, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of tet block"))?;
        let ids: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse::<usize>).collect();
        match ids {
            Ok(t) if t.len() == 4 => {
                if t.iter().any(|&v| v >= nv) {
                    return Err(parse_err(i + 1, "vertex id out of range"));
                }
                tets.push([t[0], t[1], t[2], t[3]]);
            }
            _ => return Err(parse_err(i + 1, "tet line must hold four vertex ids")),
        }
    }
    for (i, line) in lines {
        if !line.trim().is_empty() {
            return Err(parse_err(i + 1, "unexpected content after tet block"));
        }
    }

    let bisection = tets
        .iter()
        .map(|t| initial_bisection_state(&vertices, t))
        .collect();
    // Positively oriented file tets keep their vertex order so canonical
    // files round-trip byte for byte.
    let mut oriented = Vec::with_capacity(nt);
    for (k, mut t) in tets.into_iter().enumerate() {
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
        oriented.push(t);
    }
    TetMesh::with_oriented_tets(vertices, oriented, bisection, vec![None; nv], None)
}

/// Orders a tet so that its longest edge (ties: lexicographically smallest
/// vertex pair) becomes the refinement edge `x0 x3`, with `x1, x2` chosen to
/// make the path `x0 x1 x2 x3` shortest.
fn initial_bisection_state(vertices: &[Point], t: &[usize; 4]) -> BisectionState {
    let mut best: Option<(f64, [usize; 2])> = None;
    for e in &LOCAL_EDGES {
        let pair = sorted_pair(t[e[0]], t[e[1]]);
        let len = dist(&vertices[pair[0]], &vertices[pair[1]]);
        best = match best {
            Some((l, p)) if l > len || (l == len && p <= pair) => Some((l, p)),
            _ => Some((len, pair)),
        };
    }
    let [x0, x3] = best.unwrap().1;
    let rest: Vec<usize> = t.iter().copied().filter(|&v| v != x0 && v != x3).collect();
    let path = |a: usize, b: usize| {
        dist(&vertices[x0], &vertices[a])
            + dist(&vertices[a], &vertices[b])
            + dist(&vertices[b], &vertices[x3])
    };
    let (x1, x2) = if path(rest[1], rest[0]) < path(rest[0], rest[1]) {
        (rest[1], rest[0])
    } else {
        (rest[0], rest[1])
    };
    BisectionState {
        order: [x0, x1, x2, x3],
        tag: 3,
    }
}
