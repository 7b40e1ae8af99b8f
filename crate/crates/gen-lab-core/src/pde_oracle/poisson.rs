//! Finite-difference Poisson solver on the unit square: 5-point Laplacian,
//! Dirichlet boundary, matrix-free conjugate gradients. Replaces an external
//! FEM ground-truth solver at desk-scale resolution.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid resolution must be at least 3, got {0}")]
    GridTooSmall(usize),
    #[error(
        "conjugate gradients did not converge after {iters} iterations (residual {residual:.3e})"
    )]
    CgDidNotConverge { iters: usize, residual: f64 },
    #[error("point {0:?} is not on the unit sphere")]
    NotOnSphere(Vec<f64>),
    #[error("epsilon {0:.3e} outside the validated range [3e-6, 3e-4]")]
    EpsilonOutOfRange(f64),
    #[error("could not complete a tangent basis at {0:?}")]
    DegenerateBasis(Vec<f64>),
}

/// Axis-aligned source region with a per-scenario strength.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub strength: f64,
}

impl SourceRect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Heat-flow problem: heaters/coolers as constant-source rectangles, the
/// Laplace equation elsewhere, and a fixed boundary temperature on all four
/// exterior walls.
#[derive(Clone, Debug, PartialEq)]
pub struct SquarePoissonProblem {
    pub sources: Vec<SourceRect>,
    pub boundary_value: f64,
}

impl SquarePoissonProblem {
    /// Source field value at a point (sum over overlapping rectangles).
    pub fn source_at(&self, x: f64, y: f64) -> f64 {
        self.sources
            .iter()
            .filter(|r| r.contains(x, y))
            .map(|r| r.strength)
            .sum()
    }
}

/// A scalar field sampled on an m x m uniform grid over [0,1]^2 including
/// the boundary; index iy*m + ix holds the value at (ix/(m-1), iy/(m-1)).
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    m: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(m: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), m * m);
        Self { m, values }
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.m + ix]
    }

    /// Bilinear interpolation for off-grid evaluation; x, y in [0, 1].
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let cells = (self.m - 1) as f64;
        let fx = (x.clamp(0.0, 1.0)) * cells;
        let fy = (y.clamp(0.0, 1.0)) * cells;
        let cx = (fx.floor() as usize).min(self.m - 2);
        let cy = (fy.floor() as usize).min(self.m - 2);
        let u = fx - cx as f64;
        let v = fy - cy as f64;
        (1.0 - u) * (1.0 - v) * self.at(cx, cy)
            + u * (1.0 - v) * self.at(cx + 1, cy)
            + (1.0 - u) * v * self.at(cx, cy + 1)
            + u * v * self.at(cx + 1, cy + 1)
    }
}

/// Solve laplacian(phi) = psi on [0,1]^2 with phi = `boundary` on the edge,
/// via the 5-point stencil and conjugate gradients on the interior unknowns
/// (relative residual < 1e-10, at most 10 m^2 iterations).
pub fn solve_square_poisson_field(
    psi: &dyn Fn(f64, f64) -> f64,
    boundary: f64,
    m: usize,
) -> Result<GridField, OracleError> {
    if m < 3 {
        return Err(OracleError::GridTooSmall(m));
    }
    let n = m - 2; // interior points per axis
    let h = 1.0 / (m - 1) as f64;
    let idx = |ix: usize, iy: usize| (iy - 1) * n + (ix - 1);

    // SPD system: (4 phi_c - sum of neighbors) = -h^2 psi_c + boundary terms
    let mut b = vec![0.0; n * n];
    for iy in 1..m - 1 {
        for ix in 1..m - 1 {
            let (x, y) = (ix as f64 * h, iy as f64 * h);
            let mut rhs = -h * h * psi(x, y);
            if ix == 1 {
                rhs += boundary;
            }
            if ix == m - 2 {
                rhs += boundary;
            }
            if iy == 1 {
                rhs += boundary;
            }
            if iy == m - 2 {
                rhs += boundary;
            }
            b[idx(ix, iy)] = rhs;
        }
    }

    let apply = |v: &[f64], out: &mut [f64]| {
        for iy in 1..m - 1 {
            for ix in 1..m - 1 {
                let c = idx(ix, iy);
                let mut acc = 4.0 * v[c];
                if ix > 1 {
                    acc -= v[idx(ix - 1, iy)];
                }
                if ix < m - 2 {
                    acc -= v[idx(ix + 1, iy)];
                }
                if iy > 1 {
                    acc -= v[idx(ix, iy - 1)];
                }
                if iy < m - 2 {
                    acc -= v[idx(ix, iy + 1)];
                }
                out[c] = acc;
            }
        }
    };

    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n * n];
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n * n];
        let mut rs = dot(&r, &r);
        let tol = 1e-10 * b_norm;
        let max_iters = 10 * m * m;
        let mut converged = false;
        for _ in 0..max_iters {
            if rs.sqrt() < tol {
                converged = true;
                break;
            }
            apply(&p, &mut ap);
            let alpha = rs / dot(&p, &ap);
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new = dot(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..p.len() {
                p[i] = r[i] + beta * p[i];
            }
        }
        if !converged && rs.sqrt() >= tol {
            return Err(OracleError::CgDidNotConverge {
                iters: max_iters,
                residual: rs.sqrt() / b_norm,
            });
        }
    }

    let mut values = vec![boundary; m * m];
    for iy in 1..m - 1 {
        for ix in 1..m - 1 {
            values[iy * m + ix] = x[idx(ix, iy)];
        }
    }
    Ok(GridField::new(m, values))
}

/// Solve a rectangle-source heat problem at resolution m.
pub fn solve_square_poisson(
    problem: &SquarePoissonProblem,
    m: usize,
) -> Result<GridField, OracleError> {
    solve_square_poisson_field(&|x, y| problem.source_at(x, y), problem.boundary_value, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_source_gives_constant_boundary_temperature() {
        let problem = SquarePoissonProblem {
            sources: vec![],
            boundary_value: 5.0,
        };
        let phi = solve_square_poisson(&problem, 17).unwrap();
        for &v in phi.values() {
            assert!((v - 5.0).abs() < 1e-9, "got {v}");
        }
    }

    fn manufactured_max_error(m: usize) -> f64 {
        // laplacian(sin(pi x) sin(pi y)) = -2 pi^2 sin(pi x) sin(pi y)
        let psi = |x: f64, y: f64| -2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
        let phi = solve_square_poisson_field(&psi, 0.0, m).unwrap();
        let mut max_err: f64 = 0.0;
        let h = 1.0 / (m - 1) as f64;
        for iy in 0..m {
            for ix in 0..m {
                let exact = (PI * ix as f64 * h).sin() * (PI * iy as f64 * h).sin();
                max_err = max_err.max((phi.at(ix, iy) - exact).abs());
            }
        }
        max_err
    }

    #[test]
    fn manufactured_solution_error_bound_at_m64() {
        assert!(manufactured_max_error(64) < 2e-3);
    }

    #[test]
    fn halving_h_quarters_the_error() {
        let ratio = manufactured_max_error(32) / manufactured_max_error(64);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn discrete_maximum_principle() {
        // no sources: solution stays within the boundary value range
        let problem = SquarePoissonProblem {
            sources: vec![],
            boundary_value: -2.5,
        };
        let phi = solve_square_poisson(&problem, 33).unwrap();
        for &v in phi.values() {
            assert!((-2.5 - 1e-9..=-2.5 + 1e-9).contains(&v));
        }
    }

    #[test]
    fn solver_is_linear_in_the_source() {
        let r1 = SourceRect {
            x0: 0.2,
            y0: 0.2,
            x1: 0.4,
            y1: 0.5,
            strength: 3.0,
        };
        let r2 = SourceRect {
            x0: 0.6,
            y0: 0.55,
            x1: 0.85,
            y1: 0.8,
            strength: -7.0,
        };
        let m = 33;
        let solo1 = solve_square_poisson(
            &SquarePoissonProblem {
                sources: vec![r1.clone()],
                boundary_value: 0.0,
            },
            m,
        )
        .unwrap();
        let solo2 = solve_square_poisson(
            &SquarePoissonProblem {
                sources: vec![r2.clone()],
                boundary_value: 0.0,
            },
            m,
        )
        .unwrap();
        let both = solve_square_poisson(
            &SquarePoissonProblem {
                sources: vec![r1, r2],
                boundary_value: 0.0,
            },
            m,
        )
        .unwrap();
        for i in 0..m * m {
            let sum = solo1.values()[i] + solo2.values()[i];
            assert!((both.values()[i] - sum).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_too_small_is_an_error() {
        let problem = SquarePoissonProblem {
            sources: vec![],
            boundary_value: 0.0,
        };
        assert!(matches!(
            solve_square_poisson(&problem, 2),
            Err(OracleError::GridTooSmall(2))
        ));
    }

    #[test]
    fn interpolation_is_exact_at_grid_points() {
        let m = 9;
        let values: Vec<f64> = (0..m * m).map(|i| (i as f64 * 0.37).sin()).collect();
        let field = GridField::new(m, values);
        let h = 1.0 / (m - 1) as f64;
        for iy in 0..m {
            for ix in 0..m {
                let v = field.eval(ix as f64 * h, iy as f64 * h);
                assert!((v - field.at(ix, iy)).abs() < 1e-12);
            }
        }
    }
}
