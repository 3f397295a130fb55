//! Central-difference gradient verification.

/// Compare `analytic` against central differences of `f` at `params`.
///
/// Returns the max over coordinates of |a − n| / max(|a|, |n|, 1e−8) where
/// n = (f(p+ε) − f(p−ε)) / 2ε. Callers assert this is below their tolerance
/// (1e−3 at ε = 1e−5 for every trained model in this repo).
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert_eq!(
        params.len(),
        analytic.len(),
        "grad_check: analytic gradient has wrong length"
    );
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let plus = f(&p);
        p[i] = orig - eps;
        let minus = f(&p);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
