//! Scalar root finding on bracketed, monotone-ish functions.

use crate::error::{Error, Result};

/// Finds `x` in `[lo, hi]` with `f(x) = 0` where `f(lo)` and `f(hi)` have
/// opposite signs. Illinois-modified regula falsi with a bisection
/// fallback; stops when `|f| <= ftol` or the bracket is narrower than `xtol`.
pub fn bracketed<F>(mut f: F, mut lo: f64, mut hi: f64, ftol: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    if f_lo.abs() <= ftol {
        return Ok(lo);
    }
    let mut f_hi = f(hi)?;
    if f_hi.abs() <= ftol {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Numerical(format!(
            "root not bracketed on [{lo}, {hi}] (f = {f_lo}, {f_hi})"
        )));
    }
    let mut side = 0i8;
    for iter in 0..200 {
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        // Every fourth iteration bisect to guarantee bracket shrinkage.
        if !x.is_finite() || x <= lo.min(hi) || x >= lo.max(hi) || iter % 4 == 3 {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx.abs() <= ftol || (hi - lo).abs() <= xtol {
            return Ok(x);
        }
        if fx.signum() == f_hi.signum() {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::Numerical(format!(
        "root finder did not converge on [{lo}, {hi}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let r = bracketed(|x| Ok(x * x * x - 2.0), 0.0, 3.0, 1e-14, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbracketed() {
        assert!(bracketed(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 1e-12).is_err());
    }

    #[test]
    fn handles_steep_exponential() {
        let r = bracketed(|x| Ok((80.0 * x).exp() - 10.0), 0.0, 1.0, 1e-12, 1e-16).unwrap();
        assert!((r - 10f64.ln() / 80.0).abs() < 1e-12);
    }
}
