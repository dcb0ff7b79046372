//! Bessel functions of the first kind for integer orders.
//!
//! Power series below the switchover, Miller downward recurrence above it;
//! the two agree to ~1e-13 on the overlap band, which the tests pin down.

use crate::error::{Error, Result};

/// Largest |x| supported. Everything the toolkit evaluates lives well inside.
pub const BESSEL_MAX_ARG: f64 = 50.0;

/// Series/recurrence switchover.
const SERIES_LIMIT: f64 = 12.0;

/// `J_p(x)` by the ascending power series. Accurate for small |x|; terms
/// alternate, so cancellation grows with |x| (fine below the switchover).
fn series(p: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let hsq = half * half;
    // first term: (x/2)^p / p!
    let mut term = 1.0;
    for k in 1..=p {
        term *= half / k as f64;
    }
    let mut sum = term;
    let mut m = 1u32;
    while m < 200 {
        term *= -hsq / (m as f64 * (m + p) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
        m += 1;
    }
    sum
}

/// `J_p(x)` by Miller's downward recurrence with the
/// `J_0 + 2 sum J_{2k} = 1` normalization. For |x| above the series range.
fn miller(p: u32, x: f64) -> f64 {
    let start = (p as usize).max(x as usize) + 40;
    let start = start + (start & 1); // even starting order
    let mut jp2 = 0.0f64; // J_{k+1}
    let mut jp1 = 1e-30f64; // J_k
    let mut norm = 0.0f64;
    let mut wanted = 0.0f64;
    if p as usize == start {
        wanted = jp1;
    }
    let mut k = start;
    while k > 0 {
        let jm = (2.0 * k as f64 / x) * jp1 - jp2;
        jp2 = jp1;
        jp1 = jm;
        k -= 1;
        if k == p as usize {
            wanted = jp1;
        }
        if k % 2 == 0 && k > 0 {
            norm += 2.0 * jp1;
        }
        // rescale to stay in range; the recurrence grows fast
        if jp1.abs() > 1e250 {
            jp1 *= 1e-250;
            jp2 *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += jp1; // J_0
    wanted / norm
}

/// Bessel function of the first kind of integer order `p` at `x`.
///
/// Defined for any integer order via `J_{-p}(x) = (-1)^p J_p(x)` (exact by
/// construction) and `J_p(-x) = (-1)^p J_p(x)`. Arguments beyond
/// [`BESSEL_MAX_ARG`] are rejected.
pub fn bessel_j(p: i32, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > BESSEL_MAX_ARG {
        return Err(Error::UnsupportedRange {
            value: x,
            limit: BESSEL_MAX_ARG,
        });
    }
    let mut sign = 1.0;
    let order = if p < 0 {
        if p % 2 != 0 {
            sign = -sign;
        }
        (-(p as i64)) as u32
    } else {
        p as u32
    };
    let arg = if x < 0.0 {
        if order % 2 == 1 {
            sign = -sign;
        }
        -x
    } else {
        x
    };
    if arg == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    let v = if arg <= SERIES_LIMIT {
        series(order, arg)
    } else {
        miller(order, arg)
    };
    Ok(sign * v)
}
