//! Bracketed root finding for monotone functions.

use crate::error::{Error, Result};

/// Finds `inf { x in [lo, hi] : g(x) >= target }` for nondecreasing `g`.
///
/// Newton steps using `slope` are taken when they land strictly inside the
/// current bracket; otherwise the bracket is bisected. The invariant
/// `g(lo) < target <= g(hi)` is maintained throughout, so the returned upper
/// end converges to the left-continuous generalized inverse even across flat
/// stretches of `g`.
pub fn monotone_inverse<G, D>(g: G, slope: D, target: f64, lo: f64, hi: f64, x_tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter(format!("bad bracket [{lo}, {hi}]")));
    }
    if g(lo) >= target {
        return Ok(lo);
    }
    if g(hi) < target {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let gx = g(x);
        if gx >= target {
            b = x;
        } else {
            a = x;
        }
        let abs_tol = x_tol * (1.0 + a.abs().max(b.abs()));
        if b - a <= abs_tol {
            break;
        }
        let d = slope(x);
        let newton = x - (gx - target) / d;
        x = if d > 0.0 && newton.is_finite() && newton > a && newton < b {
            if (newton - x).abs() < 0.5 * abs_tol {
                // Converged from one side: probe just across the root so the
                // bracket collapses.
                if gx >= target {
                    x - abs_tol
                } else {
                    x + abs_tol
                }
            } else {
                newton
            }
        } else {
            0.5 * (a + b)
        };
        if x <= a || x >= b {
            x = 0.5 * (a + b);
        }
    }
    Ok(b)
}

/// Widens `[lo, hi]` geometrically until `g(lo) < target <= g(hi)`.
pub fn expand_bracket<G: Fn(f64) -> f64>(g: G, target: f64, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let mut step = (hi - lo).abs().max(1.0);
    for _ in 0..200 {
        let low_ok = g(lo) < target;
        let high_ok = g(hi) >= target;
        if low_ok && high_ok {
            return Ok((lo, hi));
        }
        if !low_ok {
            lo -= step;
        }
        if !high_ok {
            hi += step;
        }
        step *= 2.0;
        if !lo.is_finite() || !hi.is_finite() {
            break;
        }
    }
    Err(Error::InvalidParameter(format!("could not bracket level {target}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cube_root() {
        let x = monotone_inverse(|x| x * x * x, |x| 3.0 * x * x, 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(x, 2f64.cbrt(), epsilon = 1e-12);
    }

    #[test]
    fn flat_region_returns_left_end() {
        // g is 0.5 on [1, 2]; the generalized inverse of 0.5 is 1.
        let g = |x: f64| {
            if x < 1.0 {
                0.5 * x
            } else if x < 2.0 {
                0.5
            } else {
                0.5 + 0.5 * (x - 2.0)
            }
        };
        let x = monotone_inverse(g, |_| 0.0, 0.5, 0.0, 3.0, 1e-13).unwrap();
        assert_relative_eq!(x, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn expands() {
        let (lo, hi) = expand_bracket(|x| x, 100.0, 0.0, 1.0).unwrap();
        assert!(lo < 100.0 && hi >= 100.0);
    }
}
