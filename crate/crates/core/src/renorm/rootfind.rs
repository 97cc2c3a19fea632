//! Bracketed scalar root finding.

use roots::{find_root_brent, Convergency, SearchError};

use crate::error::{Error, Result};

/// Stops when `|f| < residual` or the bracket is narrower than `width`.
struct Tolerance {
    residual: f64,
    width: f64,
    max_iter: usize,
}

impl Convergency<f64> for Tolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() < self.residual
    }

    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() < self.width
    }

    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= self.max_iter
    }
}

/// Root of `f` in `[a, b]` by Brent's method (bisection with secant and
/// inverse quadratic steps). `f(a)` and `f(b)` must differ in sign.
pub(crate) fn bracketed_root(
    f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    residual: f64,
    width: f64,
) -> Result<f64> {
    let mut tol = Tolerance {
        residual,
        width,
        max_iter: 200,
    };
    find_root_brent(a, b, f, &mut tol).map_err(|e| match e {
        SearchError::NoBracketing => {
            Error::BranchExhausted(format!("no sign change of the residual on [{a}, {b}]"))
        }
        other => Error::Undefined(format!("root search failed: {other:?}")),
    })
}
