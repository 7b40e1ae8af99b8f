//! Geometry properties checked against independent brute-force oracles:
//! the empty-circumcircle property, the Euler edge-count identity, edge
//! stability under tiny perturbations, and the low-discrepancy claim for
//! the well-spread initializer.

use gen_lab_core::geometry::{delaunay_mesh, halton_points, square_grid_mesh, triangulate};
use gen_lab_core::rng::DetRng;

/// Circumcircle via the perpendicular-bisector solve; independent of the
/// determinant test used inside the triangulation.
fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<([f64; 2], f64)> {
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

/// Assert no input point sits strictly inside any triangle's circumcircle.
fn assert_empty_circumcircles(points: &[[f64; 2]], tris: &[[usize; 3]], tol: f64) {
    for t in tris {
        let (center, r) = circumcircle(points[t[0]], points[t[1]], points[t[2]])
            .expect("triangulation produced a degenerate triangle");
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

fn rand_points(rng: &mut DetRng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.uniform01(), rng.uniform01()]).collect()
}

/// Convex hull size by Andrew's monotone chain (collinear hull points are
/// excluded, matching triangulation edges).
fn hull_size(points: &[[f64; 2]]) -> usize {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        points[i]
            .partial_cmp(&points[j])
            .expect("finite coordinates")
    });
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && cross(
                points[lower[lower.len() - 2]],
                points[lower[lower.len() - 1]],
                points[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && cross(
                points[upper[upper.len() - 2]],
                points[upper[upper.len() - 1]],
                points[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.len() + upper.len()
}

#[test]
fn delaunay_circumcircles_are_empty_on_random_sets() {
    let mut rng = DetRng::new(42);
    for &n in &[5, 20, 60, 120, 200] {
        let points = rand_points(&mut rng, n);
        let tris = triangulate(&points).unwrap();
        assert_empty_circumcircles(&points, &tris, 1e-9);
    }
}

#[test]
fn delaunay_circumcircles_are_empty_on_grids() {
    // regular grids are all ties; the tie-broken triangulation must still
    // put no point strictly inside any circumcircle
    for k in [2, 3, 5] {
        let mesh = square_grid_mesh(k).unwrap();
        let points: Vec<[f64; 2]> = (0..mesh.node_count())
            .map(|i| [mesh.position(i)[0], mesh.position(i)[1]])
            .collect();
        let tris = triangulate(&points).unwrap();
        assert_empty_circumcircles(&points, &tris, 1e-9);
    }
}

#[test]
fn euler_identity_for_edge_counts() {
    // any triangulation of n points with h on the hull has 3n - 3 - h
    // undirected edges
    let mut rng = DetRng::new(7);
    for trial in 0..40 {
        let n = 4 + rng.below(60);
        let points = rand_points(&mut rng, n);
        let mesh =
            delaunay_mesh(&points.iter().flat_map(|p| p.to_vec()).collect::<Vec<f64>>()).unwrap();
        let h = hull_size(&points);
        let expected = 3 * n - 3 - h;
        assert_eq!(
            mesh.undirected_edges().len(),
            expected,
            "trial {trial}: n={n}, h={h}"
        );
    }
}

#[test]
fn tiny_perturbations_leave_generic_triangulations_unchanged() {
    let mut rng = DetRng::new(13);
    for _ in 0..10 {
        let points = rand_points(&mut rng, 40);
        let flat: Vec<f64> = points.iter().flat_map(|p| p.to_vec()).collect();
        let base = delaunay_mesh(&flat).unwrap();
        let victim = rng.below(40);
        let mut moved = flat.clone();
        moved[victim * 2] += rng.uniform(-9e-10, 9e-10);
        moved[victim * 2 + 1] += rng.uniform(-9e-10, 9e-10);
        let perturbed = delaunay_mesh(&moved).unwrap();
        assert_eq!(base.undirected_edges(), perturbed.undirected_edges());
    }
}

/// Star discrepancy estimate over boxes [0,u) x [0,v): brute force on a
/// candidate grid of point coordinates plus a uniform lattice.
fn star_discrepancy(points: &[f64]) -> f64 {
    let n = points.len() / 2;
    let mut us: Vec<f64> = points.chunks(2).map(|p| p[0]).collect();
    let mut vs: Vec<f64> = points.chunks(2).map(|p| p[1]).collect();
    for i in 0..=16 {
        us.push(i as f64 / 16.0);
        vs.push(i as f64 / 16.0);
    }
    let mut worst: f64 = 0.0;
    for &u in &us {
        for &v in &vs {
            let count = points.chunks(2).filter(|p| p[0] < u && p[1] < v).count();
            let diff = (count as f64 / n as f64 - u * v).abs();
            worst = worst.max(diff);
        }
    }
    worst
}

#[test]
fn halton_beats_uniform_random_on_star_discrepancy() {
    let n = 64;
    let mut halton_scores = Vec::new();
    let mut random_scores = Vec::new();
    for seed in 0..20u64 {
        halton_scores.push(star_discrepancy(&halton_points(n, 2, seed)));
        let mut rng = DetRng::derive(seed, &[0xd15c]);
        let random: Vec<f64> = (0..2 * n).map(|_| rng.uniform01()).collect();
        random_scores.push(star_discrepancy(&random));
    }
    let median = |xs: &mut Vec<f64>| {
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        xs[xs.len() / 2]
    };
    let h = median(&mut halton_scores);
    let r = median(&mut random_scores);
    assert!(h < r, "halton median {h} not below random median {r}");
}
