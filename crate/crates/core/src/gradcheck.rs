//! Central finite-difference gradient checking at 64-bit precision.

/// Numerical gradient of `f` at `x` via central differences.
pub fn central_difference<F>(mut f: F, x: &mut [f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(x);
        x[i] = orig - h;
        let minus = f(x);
        x[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Worst relative error between an analytic and a numerical gradient.
///
/// Central differences at h ~ 1e-5 on an O(1) objective resolve gradients
/// down to roughly eps*|f|/h ~ 1e-11 absolute, so components below
/// `NOISE_FLOOR` are compared absolutely (against 1e-10) instead of
/// relatively; a disagreement there still surfaces, scaled by the floor.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    const NOISE_FLOOR: f64 = 1e-6;
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale < NOISE_FLOOR {
            if (a - n).abs() > 1e-10 {
                worst = worst.max((a - n).abs() / NOISE_FLOOR);
            }
            continue;
        }
        worst = worst.max((a - n).abs() / scale);
    }
    worst
}
