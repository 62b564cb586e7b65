//! Independent reference computations built from first principles.

use nalgebra::{Matrix4, Vector4};

pub type P3 = [f64; 3];

/// Barycentric coordinates of `x` in the tet with corners `p`, from a
/// direct 4×4 solve.
pub fn bary(p: &[P3; 4], x: &P3) -> [f64; 4] {
    let m = Matrix4::from_fn(|r, c| if r == 0 { 1.0 } else { p[c][r - 1] });
    let s = m.lu().solve(&Vector4::new(1.0, x[0], x[1], x[2])).unwrap();
    [s[0], s[1], s[2], s[3]]
}

/// Whitney field of the edge `(i, j)` (local corner indices, directed i→j)
/// evaluated at `x`, with gradients taken by central differences.
pub fn whitney(p: &[P3; 4], i: usize, j: usize, x: &P3) -> P3 {
    let lam = bary(p, x);
    let grad = |k: usize| -> P3 {
        let mut g = [0.0; 3];
        for d in 0..3 {
            let (mut xp, mut xm) = (*x, *x);
            xp[d] += 0.5;
            xm[d] -= 0.5;
            g[d] = bary(p, &xp)[k] - bary(p, &xm)[k];
        }
        g
    };
    let (gi, gj) = (grad(i), grad(j));
    [0, 1, 2].map(|d| lam[i] * gj[d] - lam[j] * gi[d])
}

pub fn curl_fd(p: &[P3; 4], i: usize, j: usize) -> P3 {
    let c = [0.1, 0.2, 0.3];
    let d = |a: usize, b: usize| {
        // ∂_b of component a, exact for linear fields.
        let (mut xp, mut xm) = (c, c);
        xp[b] += 0.5;
        xm[b] -= 0.5;
        whitney(p, i, j, &xp)[a] - whitney(p, i, j, &xm)[a]
    };
    [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
}

/// Collapsed (Duffy) tensor Gauss rule on a tet: points and weights that
/// integrate polynomials of degree ≤ 7 exactly.
pub fn duffy_rule(p: &[P3; 4]) -> Vec<(P3, f64)> {
    let gx = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    let gw = [
        0.347_854_845_137_453_9,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_9,
    ];
    let e = |k: usize| [0, 1, 2].map(|d| p[k][d] - p[0][d]);
    let (e1, e2, e3) = (e(1), e(2), e(3));
    let det = (e1[0] * (e2[1] * e3[2] - e2[2] * e3[1]) - e1[1] * (e2[0] * e3[2] - e2[2] * e3[0])
        + e1[2] * (e2[0] * e3[1] - e2[1] * e3[0]))
        .abs();
    let mut out = Vec::new();
    for (a, wa) in gx.iter().zip(&gw) {
        for (b, wb) in gx.iter().zip(&gw) {
            for (c, wc) in gx.iter().zip(&gw) {
                let (u, v, w): (f64, f64, f64) =
                    ((a + 1.0) / 2.0, (b + 1.0) / 2.0, (c + 1.0) / 2.0);
                let r = u;
                let s = v * (1.0 - u);
                let t = w * (1.0 - u) * (1.0 - v);
                let jac = (1.0 - u).powi(2) * (1.0 - v) / 8.0;
                let x = [0, 1, 2].map(|d| p[0][d] + r * e1[d] + s * e2[d] + t * e3[d]);
                out.push((x, wa * wb * wc * jac * det));
            }
        }
    }
    out
}
