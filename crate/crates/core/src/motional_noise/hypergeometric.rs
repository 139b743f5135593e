//! Generalized hypergeometric series `1F2(a; b1, b2; z)`.

use crate::error::{Error, Result};

const MAX_TERMS: usize = 10_000;
const REL_TOL: f64 = 1e-16;

fn is_pole(b: f64) -> bool {
    b <= 0.0 && b == b.round()
}

/// `sum_k (a)_k / ((b1)_k (b2)_k) z^k / k!`
///
/// The series is entire in `z`. Summation stops once a term falls below
/// `1e-16` of the partial sum (or vanishes, for terminating series).
pub fn hyp1f2(a: f64, b1: f64, b2: f64, z: f64) -> Result<f64> {
    hyp1f2_counted(a, b1, b2, z).map(|(v, _)| v)
}

/// Like [`hyp1f2`], also returning the number of terms summed.
pub fn hyp1f2_counted(a: f64, b1: f64, b2: f64, z: f64) -> Result<(f64, usize)> {
    if is_pole(b1) || is_pole(b2) {
        return Err(Error::invalid(format!(
            "1F2 lower parameters must not be non-positive integers (b1 = {b1}, b2 = {b2})"
        )));
    }
    if !(a.is_finite() && b1.is_finite() && b2.is_finite() && z.is_finite()) {
        return Err(Error::invalid("1F2 arguments must be finite"));
    }
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) / ((b1 + kf) * (b2 + kf)) * z / (kf + 1.0);
        sum += term;
        if term == 0.0 || term.abs() < REL_TOL * sum.abs() {
            return Ok((sum, k + 2));
        }
    }
    Err(Error::NoConvergence(MAX_TERMS))
}
