use super::AutodiffError;

/// Central-difference gradient of `f` at `params`.
pub fn central_difference<E>(
    f: impl Fn(&[f64]) -> Result<f64, E>,
    params: &[f64],
    step: f64,
) -> Result<Vec<f64>, E> {
    let mut probe = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe)?;
        probe[i] = orig - step;
        let minus = f(&probe)?;
        probe[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Compares an analytic gradient against central differences.
///
/// `f` returns the objective value together with its analytic gradient.
/// The result is `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<E: From<AutodiffError>>(
    f: impl Fn(&[f64]) -> Result<(f64, Vec<f64>), E>,
    params: &[f64],
    step: f64,
) -> Result<f64, E> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(AutodiffError::ShapeMismatch {
            node: 0,
            op: "grad_check",
            detail: format!("gradient has {} entries for {} parameters", analytic.len(), params.len()),
        }
        .into());
    }
    let numeric = central_difference(|p| f(p).map(|(v, _)| v), params, step)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}
