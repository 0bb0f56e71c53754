//! Principal branch of the Lambert W function on the nonnegative real axis.
//!
//! `W0(w)` is the unique `x >= 0` with `x * exp(x) = w`. Evaluation uses
//! Halley's method. Below `e` it iterates on `x*exp(x) - w` directly; above
//! `e` it iterates on the equivalent `x + ln(x) - ln(w)`, which never
//! overflows even for `w` near `f64::MAX`.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Halley iterations before giving up.
pub const MAX_ITERATIONS: usize = 50;

const SERIES_CUTOFF: f64 = 1e-4;

/// Evaluates `W0(w)` for finite `w >= 0`.
///
/// The result satisfies `|x*exp(x) - w| <= 1e-12 * max(1, w)` and is exactly
/// zero iff `w == 0`.
pub fn lambert_w0(w: f64) -> Result<f64> {
    if !w.is_finite() {
        return Err(Error::domain("w", format!("lambert_w0 needs a finite argument, got {w}")));
    }
    if w < 0.0 {
        return Err(Error::domain(
            "w",
            format!("lambert_w0 is only defined here for w >= 0, got {w}"),
        ));
    }
    if w == 0.0 {
        return Ok(0.0);
    }

    let mut x = initial_guess(w);
    let log_form = w > E;
    let ln_w = w.ln();

    for _ in 0..MAX_ITERATIONS {
        let next = if log_form {
            // g(x) = x + ln x - ln w, g' = (x + 1)/x, g'' = -1/x^2
            let g = x + x.ln() - ln_w;
            let gp = (x + 1.0) / x;
            let gpp = -1.0 / (x * x);
            x - 2.0 * g * gp / (2.0 * gp * gp - g * gpp)
        } else {
            let ex = x.exp();
            let f = x * ex - w;
            let fp = ex * (x + 1.0);
            x - f / (fp - (x + 2.0) * f / (2.0 * x + 2.0))
        };
        if !next.is_finite() || next <= 0.0 {
            // Not reachable from the starting guesses above; halve and retry.
            x *= 0.5;
            continue;
        }
        let step = (next - x).abs();
        x = next;
        if step <= 4.0 * f64::EPSILON * x {
            return Ok(x);
        }
    }

    Err(Error::numerical(
        "lambert_w0",
        format!("no convergence after {MAX_ITERATIONS} Halley steps for w = {w:e}"),
    ))
}

fn initial_guess(w: f64) -> f64 {
    if w < SERIES_CUTOFF {
        w - w * w
    } else if w > E {
        let l1 = w.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    } else {
        // Winitzki-style log approximation, within a few percent on [1e-4, e].
        let l = w.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    }
}
