//! Shared helpers for integration suites: medians and an independent
//! circumcircle oracle (perpendicular-bisector construction, distinct from
//! the determinant test inside the triangulation).

pub fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    xs[xs.len() / 2]
}

pub fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<([f64; 2], f64)> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-18 {
        return None;
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let r = ((a[0] - ux) * (a[0] - ux) + (a[1] - uy) * (a[1] - uy)).sqrt();
    Some(([ux, uy], r))
}

/// No point may sit strictly inside any triangle's circumcircle.
pub fn assert_empty_circumcircles(points: &[[f64; 2]], tris: &[[usize; 3]], tol: f64) {
    for t in tris {
        let (center, r) = circumcircle(points[t[0]], points[t[1]], points[t[2]])
            .expect("degenerate triangle in triangulation");
        for (i, p) in points.iter().enumerate() {
            if t.contains(&i) {
                continue;
            }
            let dist = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
            assert!(
                dist > r - tol,
                "point {i} strictly inside circumcircle of {t:?} (dist {dist}, r {r})"
            );
        }
    }
}
