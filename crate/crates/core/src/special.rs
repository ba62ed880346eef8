//! Special functions.

use crate::{Error, Result};

// B_{2k} / (2k) for k = 1..7
const ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// Digamma function for positive arguments.
///
/// Shifts `x` up to at least 6 with `psi(x) = psi(x + 1) - 1/x`, then sums
/// the asymptotic series in `1/x^2`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(x));
    }
    Ok(digamma_unchecked(x))
}

/// [`digamma`] without the domain check, for hot loops whose arguments are
/// known to be positive.
#[inline]
pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut x = x;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    let mut power = inv2;
    for c in ASYMPTOTIC {
        series += c * power;
        power *= inv2;
    }
    shift + x.ln() - 0.5 / x - series
}
