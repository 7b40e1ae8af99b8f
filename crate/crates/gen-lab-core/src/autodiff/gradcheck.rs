//! Finite-difference gradient oracle. Kept independent of the tape so it can
//! cross-check analytic gradients.

/// Central-difference gradient estimate of `f` at `x`.
pub fn finite_diff_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut xs = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + step;
        let plus = f(&xs);
        xs[i] = orig - step;
        let minus = f(&xs);
        xs[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

/// Max over coordinates of |a - b| / max(|a|, |b|, floor). The floor turns
/// the comparison absolute below that scale, where central differences are
/// dominated by cancellation noise.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Default denominator floor for gradient checks against losses of order 1-100.
pub const REL_ERR_FLOOR: f64 = 1e-3;
