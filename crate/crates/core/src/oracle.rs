//! Independent checks on the closed-form solver.
//!
//! Nothing here touches the Lambert W function or the dual bisection in
//! [`crate::solver`]:
//!
//! * [`stationarity_root`] solves the active-channel stationarity equation for
//!   a fixed multiplier by plain bisection on the power.
//! * [`projected_gradient_solve`] minimizes the objective over
//!   `{0 <= P_i <= cap_i, sum P_i <= p_tot}` by projected gradient descent.
//! * [`certify`] measures the KKT residuals of any candidate allocation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    cap_unchecked, objective_gradient, rate_unchecked, term_second_derivative, Allocation, ChannelSet, Problem,
    Regime, LN_2,
};

/// KKT measurements at a candidate allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Per channel: `|dL/dP_i|` on channels with power, dual infeasibility
    /// `max(0, -mu_i)` on channels without.
    pub stationarity_residuals: Vec<f64>,
    /// Implied multipliers of `P_i >= 0`, clipped at zero.
    pub mu: Vec<f64>,
    /// `|lambda (sum P - p_tot)|`.
    pub budget_slackness_gap: f64,
    /// `max_i |mu_i P_i|`.
    pub multiplier_slackness_gap: f64,
    /// Budget overrun or negative power, whichever is larger.
    pub primal_violation: f64,
    pub max_residual: f64,
}

impl KktReport {
    pub fn is_certified(&self, tolerance: f64) -> bool {
        self.max_residual <= tolerance
    }
}

/// Outcome of [`projected_gradient_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub allocation: Allocation,
    pub converged: bool,
    /// Euclidean gradient-mapping norm `||P - proj(P - grad J)||` at exit.
    pub residual: f64,
    pub iterations: usize,
}

/// Stopping length of the scaled projected step in
/// [`projected_gradient_solve`], relative to `max(1, max_i P_i)`.
pub const PG_TOLERANCE: f64 = 1e-9;

/// Default iteration budget for [`projected_gradient_solve`].
pub const PG_MAX_ITERS: usize = 20_000;

/// Positive root of `2 (log2(1 + aP) - t) a / ((1 + aP) ln 2) + lambda = 0`
/// on `(0, cap)`, found by bisection. Returns 0 when `lambda >= 2at/ln 2`.
pub fn stationarity_root(a: f64, t: f64, lambda: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::domain("gain", format!("must be finite and > 0, got {a}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::domain("target", format!("must be finite and >= 0, got {t}")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::domain("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    if lambda >= 2.0 * a * t / LN_2 {
        return Ok(0.0);
    }
    // Increasing on [0, cap]: negative at 0 below the threshold, lambda at cap.
    let g = |p: f64| 2.0 * (rate_unchecked(a, p) - t) * a / ((1.0 + a * p) * LN_2) + lambda;
    let (mut lo, mut hi) = (0.0, cap_unchecked(a, t));
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// KKT residuals of `allocation` for the unweighted problem.
pub fn certify(problem: &Problem, allocation: &Allocation) -> Result<KktReport> {
    certify_impl(&problem.channels.without_weights(), problem.p_tot, allocation)
}

/// KKT residuals for the weighted objective.
pub fn certify_weighted(problem: &Problem, allocation: &Allocation) -> Result<KktReport> {
    certify_impl(&problem.channels, problem.p_tot, allocation)
}

fn certify_impl(channels: &ChannelSet, p_tot: f64, allocation: &Allocation) -> Result<KktReport> {
    let n = channels.len();
    if allocation.powers.len() != n {
        return Err(Error::domain(
            "allocation",
            format!("expected {n} powers, got {}", allocation.powers.len()),
        ));
    }
    let lambda = allocation.lambda;
    let mut residuals = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut multiplier_gap: f64 = 0.0;
    let mut primal: f64 = 0.0;

    for i in 0..n {
        let (a, t, w, p) = (
            channels.gains()[i],
            channels.targets()[i],
            channels.weight(i),
            allocation.powers[i],
        );
        primal = primal.max(-p);
        if p > 0.0 {
            let grad = 2.0 * w * (rate_unchecked(a, p) - t) * a / ((1.0 + a * p) * LN_2);
            residuals.push((grad + lambda).abs());
            mu.push(0.0);
        } else {
            let raw = lambda - 2.0 * w * a * t / LN_2;
            residuals.push((-raw).max(0.0));
            mu.push(raw.max(0.0));
            multiplier_gap = multiplier_gap.max((raw.max(0.0) * p).abs());
        }
    }
    let used: f64 = allocation.powers.iter().sum();
    primal = primal.max(used - p_tot);
    let budget_gap = (lambda * (used - p_tot)).abs();
    let max_residual = residuals
        .iter()
        .copied()
        .fold(budget_gap.max(multiplier_gap).max(primal), f64::max);

    Ok(KktReport {
        stationarity_residuals: residuals,
        mu,
        budget_slackness_gap: budget_gap,
        multiplier_slackness_gap: multiplier_gap,
        primal_violation: primal,
        max_residual,
    })
}

/// Projects `point` onto `{0 <= x_i <= cap_i, sum x_i <= p_tot}` in the
/// Euclidean norm.
pub fn project_feasible(problem: &Problem, point: &[f64]) -> Result<Vec<f64>> {
    let n = problem.channels.len();
    if point.len() != n {
        return Err(Error::domain("point", format!("expected {n} entries, got {}", point.len())));
    }
    Ok(project_scaled(point, &vec![1.0; n], &problem.channels.caps(), problem.p_tot))
}

/// Minimizes `sum_i h_i (y_i - z_i)^2 / 2` over the capped simplex. The
/// solution is `y_i = clip(z_i - nu/h_i, 0, cap_i)` with `nu >= 0` found by
/// bisection; the returned point is on the feasible side of the bracket.
fn project_scaled(z: &[f64], h: &[f64], caps: &[f64], p_tot: f64) -> Vec<f64> {
    let coord = |i: usize, nu: f64| (z[i] - nu / h[i]).clamp(0.0, caps[i]);
    let sum_at = |nu: f64| (0..z.len()).map(|i| coord(i, nu)).sum::<f64>();
    let at = |nu: f64| (0..z.len()).map(|i| coord(i, nu)).collect::<Vec<f64>>();
    if sum_at(0.0) <= p_tot {
        return at(0.0);
    }
    // At nu_hi every coordinate is clipped to zero.
    let mut lo = 0.0;
    let mut hi = z.iter().zip(h).map(|(&zi, &hi)| zi * hi).fold(0.0, f64::max);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) > p_tot {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Projected gradient descent on the unweighted objective with default
/// settings (`step = 1`, [`PG_MAX_ITERS`]).
pub fn projected_gradient_default(problem: &Problem) -> Result<OracleSolution> {
    projected_gradient_solve(problem, 1.0, PG_MAX_ITERS)
}

/// Minimizes the unweighted objective over `{0 <= P <= cap, sum P <= p_tot}`.
///
/// Each step moves along `-grad J` scaled per coordinate by the inverse
/// curvature of that channel's term (the objective is separable, so this is
/// the diagonal of the Hessian), projects back in the same metric, and
/// backtracks from `step` until the Armijo condition holds. Iteration stops
/// once that full scaled step is shorter than [`PG_TOLERANCE`] times
/// `max(1, max_i P_i)`.
/// Running out of iterations is not an error; check `converged`.
pub fn projected_gradient_solve(problem: &Problem, step: f64, max_iters: usize) -> Result<OracleSolution> {
    pg_impl(&problem.channels.without_weights(), problem.p_tot, step, max_iters)
}

/// [`projected_gradient_solve`] for the weighted objective.
pub fn projected_gradient_solve_weighted(problem: &Problem, step: f64, max_iters: usize) -> Result<OracleSolution> {
    pg_impl(&problem.channels, problem.p_tot, step, max_iters)
}

fn pg_impl(channels: &ChannelSet, p_tot: f64, step: f64, max_iters: usize) -> Result<OracleSolution> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain("step", format!("must be finite and > 0, got {step}")));
    }
    const ARMIJO: f64 = 1e-4;
    let n = channels.len();
    let caps = channels.caps();

    // J(y) - J(x) term by term, without forming either objective, so steps
    // far below the resolution of J itself are still measured.
    let change = |x: &[f64], y: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let a = channels.gains()[i];
                let d = rate_unchecked(a, x[i]) - channels.targets()[i];
                let delta = (a * (y[i] - x[i]) / (1.0 + a * x[i])).ln_1p() / LN_2;
                channels.weight(i) * delta * (2.0 * d + delta)
            })
            .sum()
    };

    let share = p_tot / n as f64;
    let mut x: Vec<f64> = caps.iter().map(|&c| c.min(share)).collect();
    let mut here = Scaled::at(channels, &caps, p_tot, &x)?;
    let mut iterations = 0;

    while here.residual > tolerance(&x) && iterations < max_iters {
        iterations += 1;

        // Along weak channels J is too flat for function values to confirm
        // progress near the optimum, while the gradient stays accurate. The
        // full step is therefore also taken when it halves the residual.
        if step >= 1.0 {
            let there = Scaled::at(channels, &caps, p_tot, &here.target)?;
            if there.residual <= 0.5 * here.residual {
                x = here.target.clone();
                here = there;
                continue;
            }
        }

        let mut t = step;
        let mut moved = false;
        for _ in 0..80 {
            let trial: Vec<f64> = (0..n).map(|i| x[i] - t * here.grad[i] / here.metric[i]).collect();
            let y = project_scaled(&trial, &here.metric, &caps, p_tot);
            let decrease: f64 = (0..n).map(|i| here.grad[i] * (y[i] - x[i])).sum();
            let diff = change(&x, &y);
            if diff <= ARMIJO * decrease {
                moved = diff < 0.0;
                x = y;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // No verifiable descent left; report where we stand.
            break;
        }
        here = Scaled::at(channels, &caps, p_tot, &x)?;
    }

    let residual = here.residual;
    let converged = residual <= tolerance(&x);
    let used: f64 = x.iter().sum();
    let caps_sum: f64 = caps.iter().sum();
    let regime = if p_tot >= caps_sum { Regime::CaseA } else { Regime::CaseB };
    let lambda = match regime {
        Regime::CaseA => 0.0,
        Regime::CaseB => estimate_multiplier(channels, &x, &caps).unwrap_or(0.0),
    };
    let mut allocation = Allocation::from_powers(channels, x, lambda, regime, iterations, 0);
    allocation.power_used = used;
    Ok(OracleSolution {
        allocation,
        converged,
        residual,
        iterations,
    })
}

/// Gradient, diagonal curvature metric and full scaled projected step at a point.
struct Scaled {
    grad: Vec<f64>,
    metric: Vec<f64>,
    /// `proj(x - grad / metric)` in the metric.
    target: Vec<f64>,
    /// Euclidean length of `target - x`.
    residual: f64,
}

impl Scaled {
    fn at(channels: &ChannelSet, caps: &[f64], p_tot: f64, x: &[f64]) -> Result<Self> {
        let grad = objective_gradient(channels, x)?;
        let curvature: Vec<f64> = (0..x.len())
            .map(|i| channels.weight(i) * term_second_derivative(channels.gains()[i], channels.targets()[i], x[i]))
            .collect();
        let floor = 1e-12 * curvature.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        let metric: Vec<f64> = curvature.iter().map(|&h| h.max(floor)).collect();
        let newton: Vec<f64> = (0..x.len()).map(|i| x[i] - grad[i] / metric[i]).collect();
        let target = project_scaled(&newton, &metric, caps, p_tot);
        let residual = x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(Self {
            grad,
            metric,
            target,
            residual,
        })
    }
}

/// Stopping threshold, relative to the largest power.
fn tolerance(x: &[f64]) -> f64 {
    PG_TOLERANCE * x.iter().copied().fold(1.0, f64::max)
}

/// Averages `-dJ/dP_i` over channels strictly inside their box.
fn estimate_multiplier(channels: &ChannelSet, x: &[f64], caps: &[f64]) -> Option<f64> {
    let grad = objective_gradient(channels, x).ok()?;
    let interior: Vec<f64> = (0..x.len())
        .filter(|&i| x[i] > 0.0 && x[i] < caps[i])
        .map(|i| -grad[i])
        .collect();
    if interior.is_empty() {
        None
    } else {
        Some(interior.iter().sum::<f64>() / interior.len() as f64)
    }
}
