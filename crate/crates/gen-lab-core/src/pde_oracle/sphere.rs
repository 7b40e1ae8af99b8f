//! Manufactured solutions on the unit sphere and the numerical surface
//! Laplacian: complete {x} to an orthonormal tangent basis by Gram-Schmidt,
//! take epsilon steps along both tangents, project back to the sphere and
//! apply the 5-point stencil divided by epsilon^2. The 1/eps^2 scaling is
//! the one that reproduces the degree-1 eigenvalue -2 exactly.

use crate::rng::DetRng;

use super::poisson::OracleError;

/// Validated epsilon range; results are insensitive to the choice inside it.
pub const SPHERE_EPSILON_MIN: f64 = 3e-6;
pub const SPHERE_EPSILON_MAX: f64 = 3e-4;
/// Default step for the tangent stencil.
pub const SPHERE_EPSILON: f64 = 3e-5;

fn check_unit(x: &[f64; 3]) -> Result<(), OracleError> {
    let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(OracleError::NotOnSphere(x.to_vec()));
    }
    Ok(())
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize3(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-6 {
        return None;
    }
    Some([v[0] / n, v[1] / n, v[2] / n])
}

/// A manufactured field: sum of k_i (x . v_i)^3 terms. Odd in x, so its
/// integral over the sphere is zero, pinning the additive constant of the
/// associated source problem.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SphereField {
    pub directions: Vec<[f64; 3]>,
    pub coefficients: Vec<f64>,
}

impl SphereField {
    pub fn new(directions: Vec<[f64; 3]>, coefficients: Vec<f64>) -> Self {
        assert_eq!(directions.len(), coefficients.len());
        for v in &directions {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-9, "direction {v:?} is not unit");
        }
        Self {
            directions,
            coefficients,
        }
    }

    pub fn eval(&self, x: &[f64; 3]) -> Result<f64, OracleError> {
        check_unit(x)?;
        Ok(self
            .directions
            .iter()
            .zip(&self.coefficients)
            .map(|(v, k)| {
                let t = dot3(x, v);
                k * t * t * t
            })
            .sum())
    }
}

/// Evaluate a manufactured solution at a point on the sphere.
pub fn sphere_solution_eval(field: &SphereField, x: &[f64; 3]) -> Result<f64, OracleError> {
    field.eval(x)
}

/// A scalar field on the unit sphere as seen by the numerical Laplacian.
///
/// `stencil_sum` is the cancellation-sensitive part of the 5-point stencil;
/// the default implementation works in plain f64, which is fine down to
/// eps ~ 1e-5 but rounding-limited below that. Analytic fields can override
/// it with extended-precision internals.
pub trait SphereScalarField {
    fn value(&self, x: &[f64; 3]) -> f64;

    /// f(P(x+eps a)) + f(P(x-eps a)) + f(P(x+eps b)) + f(P(x-eps b)) - 4 f(x)
    /// where P projects back onto the sphere.
    fn stencil_sum(&self, x: &[f64; 3], a: &[f64; 3], b: &[f64; 3], eps: f64) -> f64 {
        let probe = |dir: &[f64; 3], sign: f64| {
            let p = [
                x[0] + sign * eps * dir[0],
                x[1] + sign * eps * dir[1],
                x[2] + sign * eps * dir[2],
            ];
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            self.value(&[p[0] / n, p[1] / n, p[2] / n])
        };
        probe(a, 1.0) + probe(a, -1.0) + probe(b, 1.0) + probe(b, -1.0) - 4.0 * self.value(x)
    }
}

impl<F: Fn(&[f64; 3]) -> f64> SphereScalarField for F {
    fn value(&self, x: &[f64; 3]) -> f64 {
        self(x)
    }
}

impl SphereScalarField for SphereField {
    fn value(&self, x: &[f64; 3]) -> f64 {
        self.eval(x).expect("stencil probes stay on the sphere")
    }

    /// Double-double evaluation: the polynomial terms and the projection are
    /// computed with compensated arithmetic so the stencil cancellation
    /// stays far below the f64 noise floor even at eps = 3e-6.
    fn stencil_sum(&self, x: &[f64; 3], a: &[f64; 3], b: &[f64; 3], eps: f64) -> f64 {
        use super::dd::Dd;
        let eval_at = |p: [Dd; 3]| -> Dd {
            let norm2 = p[0].mul(p[0]).add(p[1].mul(p[1])).add(p[2].mul(p[2]));
            let inv_norm = Dd::from(1.0).div(norm2.sqrt());
            let q = [p[0].mul(inv_norm), p[1].mul(inv_norm), p[2].mul(inv_norm)];
            let mut acc = Dd::from(0.0);
            for (v, &k) in self.directions.iter().zip(&self.coefficients) {
                let t = q[0]
                    .mul(Dd::from(v[0]))
                    .add(q[1].mul(Dd::from(v[1])))
                    .add(q[2].mul(Dd::from(v[2])));
                acc = acc.add(t.mul(t).mul(t).scale(k));
            }
            acc
        };
        let displaced = |dir: &[f64; 3], sign: f64| -> Dd {
            eval_at([
                Dd::from(x[0]).add(Dd::from(sign * eps).mul(Dd::from(dir[0]))),
                Dd::from(x[1]).add(Dd::from(sign * eps).mul(Dd::from(dir[1]))),
                Dd::from(x[2]).add(Dd::from(sign * eps).mul(Dd::from(dir[2]))),
            ])
        };
        let center = eval_at([Dd::from(x[0]), Dd::from(x[1]), Dd::from(x[2])]);
        displaced(a, 1.0)
            .add(displaced(a, -1.0))
            .add(displaced(b, 1.0))
            .add(displaced(b, -1.0))
            .sub(center.scale(4.0))
            .value()
    }
}

/// Deterministic tangent basis at x: Gram-Schmidt over the coordinate axes,
/// skipping candidates within 1e-6 of +-x.
pub fn tangent_basis(x: &[f64; 3]) -> Result<([f64; 3], [f64; 3]), OracleError> {
    check_unit(x)?;
    let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut a: Option<[f64; 3]> = None;
    let mut b: Option<[f64; 3]> = None;
    for c in &axes {
        if dot3(c, x).abs() > 1.0 - 1e-6 {
            continue; // candidate parallel to x: reseed with the next axis
        }
        let cx = dot3(c, x);
        let mut r = [c[0] - cx * x[0], c[1] - cx * x[1], c[2] - cx * x[2]];
        if let Some(av) = a {
            let ca = dot3(&r, &av);
            r = [r[0] - ca * av[0], r[1] - ca * av[1], r[2] - ca * av[2]];
        }
        let Some(unit) = normalize3(r) else { continue };
        if a.is_none() {
            a = Some(unit);
        } else {
            b = Some(unit);
            break;
        }
    }
    match (a, b) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(OracleError::DegenerateBasis(x.to_vec())),
    }
}

/// Numerical surface Laplacian with an explicit tangent basis.
pub fn sphere_numerical_laplacian_with_basis(
    f: &dyn SphereScalarField,
    x: &[f64; 3],
    eps: f64,
    a: &[f64; 3],
    b: &[f64; 3],
) -> Result<f64, OracleError> {
    check_unit(x)?;
    if !(SPHERE_EPSILON_MIN..=SPHERE_EPSILON_MAX).contains(&eps) {
        return Err(OracleError::EpsilonOutOfRange(eps));
    }
    Ok(f.stencil_sum(x, a, b, eps) / (eps * eps))
}

/// Numerical surface Laplacian with the deterministic axis-seeded basis.
pub fn sphere_numerical_laplacian(
    f: &dyn SphereScalarField,
    x: &[f64; 3],
    eps: f64,
) -> Result<f64, OracleError> {
    let (a, b) = tangent_basis(x)?;
    sphere_numerical_laplacian_with_basis(f, x, eps, &a, &b)
}

/// One scenario on a sphere house: source values (numerical Laplacian of f)
/// at the input locations, solution values f at the query locations.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereScenarioData {
    pub field: SphereField,
    pub input_points: Vec<[f64; 3]>,
    pub input_laplacians: Vec<f64>,
    pub query_points: Vec<[f64; 3]>,
    pub query_values: Vec<f64>,
}

/// Draw per-scenario Gaussian coefficients for the house's directions,
/// sample uniform input/query locations, and evaluate source and solution.
pub fn generate_sphere_scenario(
    directions: &[[f64; 3]],
    n_inputs: usize,
    n_queries: usize,
    seed: u64,
    salts: &[u64],
) -> Result<SphereScenarioData, OracleError> {
    let mut key = vec![0x5a_5e7e];
    key.extend_from_slice(salts);
    let mut rng = DetRng::derive(seed, &key);
    let coefficients: Vec<f64> = (0..directions.len()).map(|_| rng.normal()).collect();
    let field = SphereField::new(directions.to_vec(), coefficients);

    let mut input_points = Vec::with_capacity(n_inputs);
    let mut input_laplacians = Vec::with_capacity(n_inputs);
    for _ in 0..n_inputs {
        let x = rng.unit_vec3();
        input_laplacians.push(sphere_numerical_laplacian(&field, &x, SPHERE_EPSILON)?);
        input_points.push(x);
    }
    let mut query_points = Vec::with_capacity(n_queries);
    let mut query_values = Vec::with_capacity(n_queries);
    for _ in 0..n_queries {
        let x = rng.unit_vec3();
        query_values.push(field.eval(&x)?);
        query_points.push(x);
    }
    Ok(SphereScenarioData {
        field,
        input_points,
        input_laplacians,
        query_points,
        query_values,
    })
}
