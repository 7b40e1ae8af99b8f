//! Representation functions r: X -> R^n mapping a location to weights over
//! mesh nodes. Used symmetrically to scatter encoded inputs onto node states
//! and to interpolate latent states back out at query points. Both kinds are
//! a partition of unity.

use thiserror::Error;

use crate::autodiff::{DistanceMetric, Tape, Tensor, Var};
use crate::geometry::{SpaceKind, SpatialMesh, TopologyKind};

#[derive(Debug, Error)]
pub enum RepresentationError {
    #[error("point {0:?} is outside the unit square")]
    OutsideSquare(Vec<f64>),
    #[error("bilinear weights need a grid mesh, got {0:?}")]
    NotAGrid(TopologyKind),
    #[error("mesh has no nodes")]
    EmptyMesh,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepKind {
    BilinearGrid,
    SoftNearest,
}

/// A representation function; the mesh is passed at call time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Representation {
    pub kind: RepKind,
    /// Softmax sharpness for `SoftNearest`; 1.0 reproduces plain
    /// softmax(-distance).
    pub temperature: f64,
}

impl Representation {
    pub fn soft_nearest(temperature: f64) -> Self {
        Self {
            kind: RepKind::SoftNearest,
            temperature,
        }
    }

    pub fn bilinear() -> Self {
        Self {
            kind: RepKind::BilinearGrid,
            temperature: 1.0,
        }
    }

    pub fn of_kind(kind: RepKind) -> Self {
        match kind {
            RepKind::SoftNearest => Self::soft_nearest(1.0),
            RepKind::BilinearGrid => Self::bilinear(),
        }
    }

    /// Weight vector for one location.
    pub fn weights(&self, x: &[f64], mesh: &SpatialMesh) -> Result<Vec<f64>, RepresentationError> {
        match self.kind {
            RepKind::SoftNearest => soft_nearest_weights(x, mesh, self.temperature),
            RepKind::BilinearGrid => bilinear_weights(x, mesh),
        }
    }

    /// Stacked weights for a batch of locations: row i is the weight vector
    /// of xs[i]. Plain tensor; use `weight_matrix_var` when gradients with
    /// respect to node positions are needed.
    pub fn weight_matrix(
        &self,
        xs: &[Vec<f64>],
        mesh: &SpatialMesh,
    ) -> Result<Tensor, RepresentationError> {
        let n = mesh.node_count();
        let mut data = Vec::with_capacity(xs.len() * n);
        for x in xs {
            data.extend(self.weights(x, mesh)?);
        }
        Ok(Tensor::matrix(xs.len(), n, data))
    }

    /// Weight matrix recorded on the tape as a function of node positions.
    /// Soft-nearest differentiates through the distance computation; the
    /// bilinear grid has fixed node positions, so its weights enter as a
    /// constant leaf.
    pub fn weight_matrix_var(
        &self,
        tape: &mut Tape,
        xs: &[Vec<f64>],
        positions: Var,
        mesh: &SpatialMesh,
    ) -> Result<Var, RepresentationError> {
        match self.kind {
            RepKind::SoftNearest => {
                if mesh.node_count() == 0 {
                    return Err(RepresentationError::EmptyMesh);
                }
                let dim = mesh.space().dim();
                let flat: Vec<f64> = xs.iter().flat_map(|x| x.iter().copied()).collect();
                let queries = tape.leaf(Tensor::matrix(xs.len(), dim, flat));
                let metric = match mesh.space() {
                    SpaceKind::UnitSquare => DistanceMetric::Euclidean,
                    SpaceKind::UnitSphere => DistanceMetric::Geodesic,
                };
                let dist = tape.pairwise_dist(queries, positions, metric);
                let logits = tape.scale(dist, -1.0 / self.temperature);
                Ok(tape.softmax_rows(logits))
            }
            RepKind::BilinearGrid => {
                let w = self.weight_matrix(xs, mesh)?;
                Ok(tape.leaf(w))
            }
        }
    }
}

/// softmax over (-distance / temperature) across all nodes.
pub fn soft_nearest_weights(
    x: &[f64],
    mesh: &SpatialMesh,
    temperature: f64,
) -> Result<Vec<f64>, RepresentationError> {
    let n = mesh.node_count();
    if n == 0 {
        return Err(RepresentationError::EmptyMesh);
    }
    let space = mesh.space();
    let logits: Vec<f64> = (0..n)
        .map(|l| -space.distance(x, mesh.position(l)) / temperature)
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Standard bilinear interpolation weights on a regular k x k grid: each
/// corner of the containing cell gets the area fraction of its opposite
/// sub-rectangle; all other nodes get zero.
pub fn bilinear_weights(x: &[f64], mesh: &SpatialMesh) -> Result<Vec<f64>, RepresentationError> {
    let TopologyKind::Grid(k) = mesh.kind() else {
        return Err(RepresentationError::NotAGrid(mesh.kind()));
    };
    if !SpaceKind::UnitSquare.contains(x) {
        return Err(RepresentationError::OutsideSquare(x.to_vec()));
    }
    let cells = (k - 1) as f64;
    let fx = x[0] * cells;
    let fy = x[1] * cells;
    let cx = (fx.floor() as usize).min(k - 2);
    let cy = (fy.floor() as usize).min(k - 2);
    let u = fx - cx as f64;
    let v = fy - cy as f64;
    let mut w = vec![0.0; k * k];
    w[cy * k + cx] = (1.0 - u) * (1.0 - v);
    w[cy * k + cx + 1] = u * (1.0 - v);
    w[(cy + 1) * k + cx] = (1.0 - u) * v;
    w[(cy + 1) * k + cx + 1] = u * v;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::square_grid_mesh;

    #[test]
    fn soft_weights_split_evenly_between_equidistant_nodes() {
        let mesh = square_grid_mesh(2).unwrap();
        // (0.5, 0.0) is equidistant from corners (0,0) and (1,0)
        let w = soft_nearest_weights(&[0.5, 0.0], &mesh, 1.0).unwrap();
        assert!((w[0] - w[1]).abs() < 1e-15);
    }

    #[test]
    fn soft_weights_peak_at_coincident_node() {
        let mesh = square_grid_mesh(3).unwrap();
        let w = soft_nearest_weights(&[0.5, 0.5], &mesh, 1.0).unwrap();
        let center = 4;
        for (l, &wl) in w.iter().enumerate() {
            if l != center {
                assert!(w[center] > wl);
            }
        }
    }

    #[test]
    fn soft_weights_match_softmax_of_given_distances() {
        // nodes at geodesic distances (0, 1, 2) from the north pole give
        // softmax(0, -1, -2) ~ (0.6652, 0.2447, 0.0900)
        let json = serde_json::json!({
            "space": "unit_sphere",
            "kind": "sphere_threshold",
            "positions": [
                [0.0, 0.0, 1.0],
                [1.0f64.sin(), 0.0, 1.0f64.cos()],
                [2.0f64.sin(), 0.0, 2.0f64.cos()],
            ],
            "undirected_edges": [[0, 1], [1, 2]],
        });
        let mesh = crate::geometry::SpatialMesh::from_json(&json).unwrap();
        let w = soft_nearest_weights(&[0.0, 0.0, 1.0], &mesh, 1.0).unwrap();
        assert!((w[0] - 0.6652).abs() < 1e-4, "{w:?}");
        assert!((w[1] - 0.2447).abs() < 1e-4);
        assert!((w[2] - 0.0900).abs() < 1e-4);
    }

    #[test]
    fn bilinear_is_one_hot_at_grid_nodes() {
        let mesh = square_grid_mesh(3).unwrap();
        let w = bilinear_weights(&[0.5, 0.5], &mesh).unwrap();
        assert_eq!(w[4], 1.0);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        assert_eq!(w.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn bilinear_cell_center_is_quarter_weights() {
        let mesh = square_grid_mesh(2).unwrap();
        let w = bilinear_weights(&[0.5, 0.5], &mesh).unwrap();
        assert_eq!(w, vec![0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn bilinear_hand_computed_example() {
        let mesh = square_grid_mesh(2).unwrap();
        let w = bilinear_weights(&[0.25, 0.75], &mesh).unwrap();
        // corners ordered (0,0), (1,0), (0,1), (1,1)
        assert!((w[0] - 0.1875).abs() < 1e-15);
        assert!((w[1] - 0.0625).abs() < 1e-15);
        assert!((w[2] - 0.5625).abs() < 1e-15);
        assert!((w[3] - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn bilinear_rejects_points_outside() {
        let mesh = square_grid_mesh(2).unwrap();
        assert!(bilinear_weights(&[1.1, 0.5], &mesh).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_functions() {
        // node values sampling f(x,y) = 3x - 2y + 1 interpolate it exactly
        let k = 4;
        let mesh = square_grid_mesh(k).unwrap();
        let f = |p: &[f64]| 3.0 * p[0] - 2.0 * p[1] + 1.0;
        let node_vals: Vec<f64> = (0..mesh.node_count())
            .map(|l| f(mesh.position(l)))
            .collect();
        for &x in &[[0.13, 0.87], [0.5, 0.01], [0.99, 0.33]] {
            let w = bilinear_weights(&x, &mesh).unwrap();
            let interp: f64 = w.iter().zip(&node_vals).map(|(wi, vi)| wi * vi).sum();
            assert!((interp - f(&x)).abs() < 1e-12, "at {x:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn soft_weights_are_a_partition_of_unity(
            x in 0.0f64..=1.0,
            y in 0.0f64..=1.0,
            temp in 0.05f64..=2.0,
        ) {
            let mesh = square_grid_mesh(4).unwrap();
            let w = soft_nearest_weights(&[x, y], &mesh, temp).unwrap();
            proptest::prop_assert!(w.iter().all(|&v| v > 0.0));
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bilinear_weights_are_sparse_nonnegative_and_sum_to_one(
            x in 0.0f64..=1.0,
            y in 0.0f64..=1.0,
        ) {
            let mesh = square_grid_mesh(5).unwrap();
            let w = bilinear_weights(&[x, y], &mesh).unwrap();
            proptest::prop_assert!(w.iter().all(|&v| v >= 0.0));
            proptest::prop_assert!(w.iter().filter(|&&v| v != 0.0).count() <= 4);
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_matrix_rows_match_single_point_calls() {
        let mesh = square_grid_mesh(3).unwrap();
        let rep = Representation::soft_nearest(1.0);
        let xs = vec![vec![0.1, 0.2], vec![0.9, 0.9]];
        let m = rep.weight_matrix(&xs, &mesh).unwrap();
        for (i, x) in xs.iter().enumerate() {
            assert_eq!(m.row(i), rep.weights(x, &mesh).unwrap().as_slice());
        }
        for i in 0..xs.len() {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
