//! Regularized incomplete gamma function and the chi-square tail.

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITERS: usize = 10_000;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        series(a, x)
    } else {
        Ok(1.0 - continued_fraction(a, x)?)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - series(a, x)?)
    } else {
        continued_fraction(a, x)
    }
}

/// Survival function of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    if !(dof > 0.0) {
        return Err(Error::InvalidArgument("degrees of freedom must be positive".into()));
    }
    if x.is_nan() {
        return Err(Error::InvalidArgument("chi-square statistic is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    gamma_q(0.5 * dof, 0.5 * x)
}

fn check(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() || !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(
            "incomplete gamma needs a > 0 and finite x >= 0".into(),
        ));
    }
    Ok(())
}

fn prefactor(a: f64, x: f64) -> f64 {
    libm::exp(-x + a * libm::log(x) - libm::lgamma(a))
}

fn series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITERS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok(sum * prefactor(a, x));
        }
    }
    Err(Error::Divergence { iteration: MAX_ITERS })
}

/// Modified Lentz evaluation of the continued fraction for `Q(a, x)`.
fn continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITERS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(prefactor(a, x) * h);
        }
    }
    Err(Error::Divergence { iteration: MAX_ITERS })
}
