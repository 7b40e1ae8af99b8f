//! Incremental Bowyer-Watson Delaunay triangulation with a super-triangle.
//! Cocircular ties are broken by insertion order: a point exactly on a
//! circumcircle does not invalidate the existing triangle. Adequate and
//! deterministic for point counts up to a few thousand.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DelaunayError {
    #[error("triangulation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("all input points are collinear")]
    Collinear,
    #[error("duplicate points at indices {0} and {1}")]
    Duplicate(usize, usize),
}

/// Strictly-inside test: positive when `p` lies inside the circumcircle of
/// CCW triangle (a, b, c). Zero (within tolerance) counts as outside.
fn in_circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> f64 {
    let (ax, ay) = (a[0] - p[0], a[1] - p[1]);
    let (bx, by) = (b[0] - p[0], b[1] - p[1]);
    let (cx, cy) = (c[0] - p[0], c[1] - p[1]);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

const TIE_EPS: f64 = 1e-12;

/// Triangulate `points`, returning CCW triangles as index triples.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>, DelaunayError> {
    let n = points.len();
    if n < 3 {
        return Err(DelaunayError::TooFewPoints(n));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (points[i][0] - points[j][0]).abs() + (points[i][1] - points[j][1]).abs();
            if d < 1e-14 {
                return Err(DelaunayError::Duplicate(i, j));
            }
        }
    }

    // Super-triangle far outside the data so no circumcircle of a data
    // triangle can reach its vertices at desk-scale coordinates.
    let (min_x, max_x) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p[0]), hi.max(p[0]))
    });
    let (min_y, max_y) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p[1]), hi.max(p[1]))
    });
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let cx = 0.5 * (min_x + max_x);
    let cy = 0.5 * (min_y + max_y);
    let big = 1e4 * span;
    let mut verts: Vec<[f64; 2]> = points.to_vec();
    let s0 = verts.len();
    verts.push([cx - 2.0 * big, cy - big]);
    verts.push([cx + 2.0 * big, cy - big]);
    verts.push([cx, cy + 2.0 * big]);

    let mut tris: Vec<[usize; 3]> = vec![[s0, s0 + 1, s0 + 2]];

    for p in 0..n {
        let pt = points[p];
        // Cavity: every triangle whose circumcircle strictly contains p.
        let mut bad = Vec::new();
        for (t, tri) in tris.iter().enumerate() {
            if in_circumcircle(verts[tri[0]], verts[tri[1]], verts[tri[2]], pt) > TIE_EPS {
                bad.push(t);
            }
        }
        // Boundary = edges appearing in exactly one bad triangle.
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for &t in &bad {
            let tri = tris[t];
            for e in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let mut shared = false;
                for &u in &bad {
                    if u == t {
                        continue;
                    }
                    let o = tris[u];
                    let edges = [(o[0], o[1]), (o[1], o[2]), (o[2], o[0])];
                    if edges.contains(&(e.1, e.0)) || edges.contains(&e) {
                        shared = true;
                        break;
                    }
                }
                if !shared {
                    boundary.push(e);
                }
            }
        }
        for &t in bad.iter().rev() {
            tris.swap_remove(t);
        }
        // swap_remove reorders; recompute order-sensitive state is avoided by
        // removing in descending index order (bad is ascending).
        for (u, v) in boundary {
            let tri = if orient(verts[u], verts[v], pt) > 0.0 {
                [u, v, p]
            } else {
                [v, u, p]
            };
            tris.push(tri);
        }
    }

    let mut out: Vec<[usize; 3]> = tris
        .into_iter()
        .filter(|t| t.iter().all(|&v| v < s0))
        .collect();
    if out.is_empty() {
        return Err(DelaunayError::Collinear);
    }
    out.sort();
    Ok(out)
}

/// Undirected edge set of a triangle list, sorted and deduplicated.
pub fn triangle_edges(tris: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut set = std::collections::BTreeSet::new();
    for t in tris {
        for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            set.insert((u.min(v), u.max(v)));
        }
    }
    set.into_iter().collect()
}
