//! Metric spaces, spatial meshes and their constructors: regular grids on
//! the unit square (Delaunay-connected), threshold graphs on the unit
//! sphere, and Delaunay meshes over arbitrary planar point sets.

mod delaunay;
mod halton;

pub use delaunay::{triangle_edges, triangulate, DelaunayError};
pub use halton::halton_points;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh order must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error("cannot project the zero vector onto the sphere")]
    ZeroVector,
    #[error("point {0:?} is outside the space")]
    OutsideSpace(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    UnitSquare,
    UnitSphere,
}

impl SpaceKind {
    pub fn dim(self) -> usize {
        match self {
            SpaceKind::UnitSquare => 2,
            SpaceKind::UnitSphere => 3,
        }
    }

    /// Euclidean distance on the square, great-circle distance on the sphere.
    pub fn distance(self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            SpaceKind::UnitSquare => p
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            SpaceKind::UnitSphere => {
                let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
                dot.clamp(-1.0, 1.0).acos()
            }
        }
    }

    pub fn contains(self, p: &[f64]) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        match self {
            SpaceKind::UnitSquare => p.iter().all(|&c| (0.0..=1.0).contains(&c)),
            SpaceKind::UnitSphere => {
                let norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
                (norm - 1.0).abs() < 1e-9
            }
        }
    }

    /// Clamp a point back into the space: coordinate clamping on the square,
    /// renormalization on the sphere.
    pub fn clamp_point(self, p: &mut [f64]) -> Result<(), GeometryError> {
        match self {
            SpaceKind::UnitSquare => {
                for c in p.iter_mut() {
                    *c = c.clamp(0.0, 1.0);
                }
                Ok(())
            }
            SpaceKind::UnitSphere => {
                let norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(GeometryError::ZeroVector);
                }
                for c in p.iter_mut() {
                    *c /= norm;
                }
                Ok(())
            }
        }
    }
}

/// Clamp every row of an n x dim position matrix back into the space.
pub fn clamp_to_space(positions: &mut Tensor, space: SpaceKind) -> Result<(), GeometryError> {
    let (n, dim) = positions.dims2();
    assert_eq!(dim, space.dim());
    for i in 0..n {
        let row = &mut positions.data_mut()[i * dim..(i + 1) * dim];
        space.clamp_point(row)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// Regular k x k grid (with Delaunay edges); carries the order k.
    Grid(usize),
    Delaunay,
    SphereThreshold,
    SingleNode,
}

/// Node positions in a metric space plus a directed edge set. Every
/// undirected adjacency is stored in both directions; no self-loops or
/// duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMesh {
    space: SpaceKind,
    /// n x dim, row-major.
    positions: Vec<f64>,
    directed_edges: Vec<(usize, usize)>,
    kind: TopologyKind,
}

impl SpatialMesh {
    fn from_undirected(
        space: SpaceKind,
        positions: Vec<f64>,
        undirected: BTreeSet<(usize, usize)>,
        kind: TopologyKind,
    ) -> Self {
        let n = positions.len() / space.dim();
        let mut directed = Vec::with_capacity(undirected.len() * 2);
        for &(u, v) in &undirected {
            assert!(u < v && v < n, "bad undirected edge ({u}, {v})");
            directed.push((u, v));
            directed.push((v, u));
        }
        directed.sort_unstable();
        Self {
            space,
            positions,
            directed_edges: directed,
            kind,
        }
    }

    pub fn space(&self) -> SpaceKind {
        self.space
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.positions.len() / self.space.dim()
    }

    pub fn position(&self, l: usize) -> &[f64] {
        let d = self.space.dim();
        &self.positions[l * d..(l + 1) * d]
    }

    /// Positions as an n x dim tensor (e.g. to put on a tape).
    pub fn positions_tensor(&self) -> Tensor {
        Tensor::matrix(self.node_count(), self.space.dim(), self.positions.clone())
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed_edges
    }

    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.directed_edges
            .iter()
            .filter(|(u, v)| u < v)
            .cloned()
            .collect()
    }

    /// Mesh with one node and no edges (the degenerate baseline topology).
    pub fn single_node(space: SpaceKind) -> Self {
        let positions = match space {
            SpaceKind::UnitSquare => vec![0.5, 0.5],
            SpaceKind::UnitSphere => vec![0.0, 0.0, 1.0],
        };
        Self {
            space,
            positions,
            directed_edges: Vec::new(),
            kind: TopologyKind::SingleNode,
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        self.bfs_dist(0).iter().all(|d| d.is_some())
    }

    /// Longest shortest-path over all node pairs; None if disconnected.
    pub fn bfs_diameter(&self) -> Option<usize> {
        let n = self.node_count();
        let mut best = 0;
        for s in 0..n {
            for d in self.bfs_dist(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    fn bfs_dist(&self, start: usize) -> Vec<Option<usize>> {
        let n = self.node_count();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &self.directed_edges {
            adj[u].push(v);
        }
        let mut dist = vec![None; n];
        dist[start] = Some(0);
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_json(&self) -> serde_json::Value {
        let d = self.space.dim();
        let positions: Vec<Vec<f64>> = (0..self.node_count())
            .map(|i| self.positions[i * d..(i + 1) * d].to_vec())
            .collect();
        serde_json::json!({
            "space": self.space,
            "kind": self.kind,
            "positions": positions,
            "undirected_edges": self.undirected_edges(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Wire {
            space: SpaceKind,
            kind: TopologyKind,
            positions: Vec<Vec<f64>>,
            undirected_edges: Vec<(usize, usize)>,
        }
        let w: Wire = serde_json::from_value(v.clone())?;
        let flat: Vec<f64> = w.positions.into_iter().flatten().collect();
        let undirected: BTreeSet<(usize, usize)> = w.undirected_edges.into_iter().collect();
        Ok(Self::from_undirected(w.space, flat, undirected, w.kind))
    }
}

/// k x k nodes at (i/(k-1), j/(k-1)), edges from the Delaunay triangulation
/// of the grid positions.
pub fn square_grid_mesh(k: usize) -> Result<SpatialMesh, GeometryError> {
    if k < 2 {
        return Err(GeometryError::OrderTooSmall(k));
    }
    let step = 1.0 / (k - 1) as f64;
    let mut pts = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            pts.push([i as f64 * step, j as f64 * step]);
        }
    }
    let tris = triangulate(&pts)?;
    let undirected: BTreeSet<(usize, usize)> = triangle_edges(&tris).into_iter().collect();
    let flat: Vec<f64> = pts.iter().flat_map(|p| p.to_vec()).collect();
    Ok(SpatialMesh::from_undirected(
        SpaceKind::UnitSquare,
        flat,
        undirected,
        TopologyKind::Grid(k),
    ))
}

/// Delaunay mesh over arbitrary square-space positions (n x 2 row-major).
pub fn delaunay_mesh(positions: &[f64]) -> Result<SpatialMesh, GeometryError> {
    let pts: Vec<[f64; 2]> = positions.chunks(2).map(|c| [c[0], c[1]]).collect();
    let tris = triangulate(&pts)?;
    let undirected: BTreeSet<(usize, usize)> = triangle_edges(&tris).into_iter().collect();
    Ok(SpatialMesh::from_undirected(
        SpaceKind::UnitSquare,
        positions.to_vec(),
        undirected,
        TopologyKind::Delaunay,
    ))
}

/// Spherical-coordinate grid of order k with edges between all node pairs
/// within geodesic distance pi/(k-1) (plus a relative tolerance, since
/// lattice neighbors sit exactly at the threshold).
///
/// Latitude rings run from pole to pole in steps of pi/(k-1); each interior
/// ring carries 2(k-1) nodes and poles appear once. Order 2 is special-cased
/// to poles plus a 3-node equator ring so the mesh is a usable graph rather
/// than a 2-node degenerate one.
pub fn sphere_mesh(k: usize) -> Result<SpatialMesh, GeometryError> {
    if k < 2 {
        return Err(GeometryError::OrderTooSmall(k));
    }
    let rings = k.max(3);
    let ring_size = (2 * (k - 1)).max(3);
    let threshold = std::f64::consts::PI / (k - 1) as f64;

    let mut positions: Vec<f64> = Vec::new();
    for r in 0..rings {
        let theta = std::f64::consts::PI * r as f64 / (rings - 1) as f64;
        if r == 0 {
            positions.extend_from_slice(&[0.0, 0.0, 1.0]);
        } else if r == rings - 1 {
            positions.extend_from_slice(&[0.0, 0.0, -1.0]);
        } else {
            for m in 0..ring_size {
                let phi = std::f64::consts::TAU * m as f64 / ring_size as f64;
                positions.extend_from_slice(&[
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ]);
            }
        }
    }

    let n = positions.len() / 3;
    let mut undirected = BTreeSet::new();
    let limit = threshold * (1.0 + 1e-9);
    for u in 0..n {
        for v in (u + 1)..n {
            let d = SpaceKind::UnitSphere
                .distance(&positions[u * 3..u * 3 + 3], &positions[v * 3..v * 3 + 3]);
            if d <= limit {
                undirected.insert((u, v));
            }
        }
    }
    Ok(SpatialMesh::from_undirected(
        SpaceKind::UnitSphere,
        positions,
        undirected,
        TopologyKind::SphereThreshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_k2_is_the_unit_square_corners() {
        let mesh = square_grid_mesh(2).unwrap();
        assert_eq!(mesh.node_count(), 4);
        assert_eq!(mesh.position(0), &[0.0, 0.0]);
        assert_eq!(mesh.position(3), &[1.0, 1.0]);
    }

    #[test]
    fn grid_k3_center_node() {
        let mesh = square_grid_mesh(3).unwrap();
        assert_eq!(mesh.node_count(), 9);
        // node (i=1, j=1) is index j*k + i = 4
        assert_eq!(mesh.position(4), &[0.5, 0.5]);
    }

    #[test]
    fn grid_diameter_is_twice_k_minus_1() {
        for k in [2, 3, 4, 5] {
            let mesh = square_grid_mesh(k).unwrap();
            assert!(mesh.is_connected());
            assert_eq!(mesh.bfs_diameter(), Some(2 * (k - 1)), "k={k}");
        }
    }

    #[test]
    fn grid_rejects_k_below_2() {
        assert!(square_grid_mesh(1).is_err());
    }

    #[test]
    fn directed_edges_come_in_pairs_without_self_loops() {
        let mesh = square_grid_mesh(4).unwrap();
        for &(u, v) in mesh.directed_edges() {
            assert_ne!(u, v);
            assert!(mesh.directed_edges().contains(&(v, u)));
        }
        let und = mesh.undirected_edges();
        assert_eq!(und.len() * 2, mesh.directed_edges().len());
    }

    #[test]
    fn sphere_k2_is_poles_plus_three_equator_nodes() {
        let mesh = sphere_mesh(2).unwrap();
        assert_eq!(mesh.node_count(), 5);
        let equator: Vec<_> = (0..5)
            .filter(|&i| mesh.position(i)[2].abs() < 1e-12)
            .collect();
        assert_eq!(equator.len(), 3);
    }

    #[test]
    fn sphere_nodes_have_unit_norm() {
        for k in 2..=7 {
            let mesh = sphere_mesh(k).unwrap();
            for i in 0..mesh.node_count() {
                let p = mesh.position(i);
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_equator_neighbors_at_threshold_are_connected() {
        // k=3: equator nodes are pi/2 apart, exactly at the threshold
        let mesh = sphere_mesh(3).unwrap();
        let equator: Vec<usize> = (0..mesh.node_count())
            .filter(|&i| mesh.position(i)[2].abs() < 1e-12)
            .collect();
        assert_eq!(equator.len(), 4);
        let und = mesh.undirected_edges();
        let (a, b) = (equator[0], equator[1]);
        let d = SpaceKind::UnitSphere.distance(mesh.position(a), mesh.position(b));
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(und.contains(&(a.min(b), a.max(b))));
    }

    #[test]
    fn sphere_meshes_connected_through_order_10() {
        for k in 2..=10 {
            assert!(sphere_mesh(k).unwrap().is_connected(), "k={k}");
        }
    }

    #[test]
    fn clamping_squares_and_spheres() {
        let mut p = vec![1.2, -0.1];
        SpaceKind::UnitSquare.clamp_point(&mut p).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);

        let mut interior = vec![0.3, 0.7];
        SpaceKind::UnitSquare.clamp_point(&mut interior).unwrap();
        assert_eq!(interior, vec![0.3, 0.7]);

        let mut q = vec![0.0, 1.1, 0.0];
        SpaceKind::UnitSphere.clamp_point(&mut q).unwrap();
        assert_eq!(q, vec![0.0, 1.0, 0.0]);

        let mut zero = vec![0.0, 0.0, 0.0];
        assert!(SpaceKind::UnitSphere.clamp_point(&mut zero).is_err());
    }

    proptest::proptest! {
        #[test]
        fn clamping_is_idempotent_and_lands_inside(
            x in -3.0f64..=3.0,
            y in -3.0f64..=3.0,
            z in -3.0f64..=3.0,
        ) {
            let mut p = vec![x, y];
            SpaceKind::UnitSquare.clamp_point(&mut p).unwrap();
            proptest::prop_assert!(SpaceKind::UnitSquare.contains(&p));
            let once = p.clone();
            SpaceKind::UnitSquare.clamp_point(&mut p).unwrap();
            proptest::prop_assert_eq!(once, p);

            let mut q = vec![x, y, z];
            if SpaceKind::UnitSphere.clamp_point(&mut q).is_ok() {
                proptest::prop_assert!(SpaceKind::UnitSphere.contains(&q));
            }
        }
    }

    #[test]
    fn mesh_json_round_trip() {
        let mesh = square_grid_mesh(3).unwrap();
        let json = mesh.to_json();
        let back = SpatialMesh::from_json(&json).unwrap();
        assert_eq!(mesh, back);
    }
}
