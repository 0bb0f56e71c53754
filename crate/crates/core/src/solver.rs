//! Target-rate least-squares allocation by dual bisection.
//!
//! For a fixed multiplier `lambda > 0` of the sum-power constraint, every
//! channel's optimal power has a closed form in the Lambert W function,
//! clipped to `[0, cap]`. The total `S(lambda)` is nonincreasing, so the
//! optimal multiplier is found by bisection on `S(lambda) = p_tot`. When the
//! budget covers every cap the solver returns the caps directly (`lambda = 0`).
//!
//! Channels whose inactivity threshold `2 w a T / ln 2` has been passed by the
//! lower bracket end get exactly zero power for the rest of the search and are
//! pruned from further evaluations. Pruning never changes the result: the
//! unpruned path returns the same exact zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambertw::lambert_w0;
use crate::model::{cap_unchecked, Allocation, ChannelSet, Problem, Regime, LN_2};

/// Bracket expansion steps allowed in either direction.
pub const MAX_DOUBLINGS: usize = 200;

/// Safety net for the bisection loop. The float-adjacency stop ends any
/// search long before this.
const MAX_BISECTIONS: usize = 4096;

/// Knobs that change how the search runs but never what it returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Skip channels already shut off by the lower bracket end.
    pub pruning: bool,
    /// Warm starts open the bracket at `[hint / f, hint * f]`. Suited to
    /// multipliers that move by about a percent between solves.
    pub warm_factor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            pruning: true,
            warm_factor: 1.01,
        }
    }
}

/// Bisection bracket. While searching, `S(lambda_lo) >= p_tot >= S(lambda_hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// False once a channel is permanently shut off.
    pub active_mask: Vec<bool>,
}

/// One sample of the dual curve `S(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualCurvePoint {
    pub lambda: f64,
    pub total_power: f64,
}

/// Multiplier at and above which a channel receives no power.
#[inline]
pub fn inactivity_threshold(a: f64, t: f64, weight: f64) -> f64 {
    2.0 * weight * a * t / LN_2
}

/// Smallest multiplier at which every channel is shut off.
pub fn dual_upper_bound(channels: &ChannelSet) -> f64 {
    channels
        .gains()
        .iter()
        .zip(channels.targets())
        .map(|(&a, &t)| inactivity_threshold(a, t, 1.0))
        .fold(0.0, f64::max)
}

/// Lambert-W power for an active channel, before clipping to `[0, cap]`.
///
/// Returns `(2/(lambda c^2)) W0(lambda c^2 2^t / (2a)) - 1/a` with `c = ln 2`.
/// The value is negative past the inactivity threshold and tends to `-1/a`
/// as `lambda` grows.
pub fn unclamped_power(a: f64, t: f64, lambda: f64) -> Result<f64> {
    check_channel(a, t, 1.0)?;
    check_lambda(lambda)?;
    closed_form(a, t, 1.0, lambda)
}

/// [`unclamped_power`] clipped to `[0, cap(a, t)]`.
pub fn clamped_power(a: f64, t: f64, lambda: f64) -> Result<f64> {
    check_channel(a, t, 1.0)?;
    check_lambda(lambda)?;
    channel_power(a, t, 1.0, lambda)
}

/// Weighted closed form: prefactor scaled by `weight`, Lambert argument
/// divided by it.
pub fn unclamped_power_weighted(a: f64, t: f64, weight: f64, lambda: f64) -> Result<f64> {
    check_channel(a, t, weight)?;
    check_lambda(lambda)?;
    closed_form(a, t, weight, lambda)
}

pub fn clamped_power_weighted(a: f64, t: f64, weight: f64, lambda: f64) -> Result<f64> {
    check_channel(a, t, weight)?;
    check_lambda(lambda)?;
    channel_power(a, t, weight, lambda)
}

// With alpha = lambda c^2 / (2 w a) and x = W0(alpha 2^t), the closed form
// (2w/(lambda c^2)) x - 1/a equals (x/alpha - 1)/a, and x e^x = alpha 2^t
// turns x/alpha into 2^t e^-x. That last form has no 0/0 as lambda -> 0.
#[inline]
fn closed_form(a: f64, t: f64, weight: f64, lambda: f64) -> Result<f64> {
    let alpha = lambda * LN_2 * LN_2 / (2.0 * weight * a);
    let scale = t.exp2();
    let arg = alpha * scale;
    if !arg.is_finite() {
        return Ok(-1.0 / a);
    }
    let x = lambert_w0(arg)?;
    Ok((scale * (-x).exp() - 1.0) / a)
}

#[inline]
fn channel_power(a: f64, t: f64, weight: f64, lambda: f64) -> Result<f64> {
    if lambda >= inactivity_threshold(a, t, weight) {
        return Ok(0.0);
    }
    let p = closed_form(a, t, weight, lambda)?;
    Ok(p.clamp(0.0, cap_unchecked(a, t)))
}

/// `S(lambda)`: total clipped power at multiplier `lambda` (unweighted).
pub fn total_power(channels: &ChannelSet, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mut sum = 0.0;
    for (&a, &t) in channels.gains().iter().zip(channels.targets()) {
        sum += channel_power(a, t, 1.0, lambda)?;
    }
    Ok(sum)
}

/// Samples `S(lambda)` on an ascending grid of positive multipliers.
pub fn dual_curve(channels: &ChannelSet, lambda_grid: &[f64]) -> Result<Vec<DualCurvePoint>> {
    if let Some(bad) = lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::domain("lambda_grid", format!("grid values must be finite and > 0, got {bad}")));
    }
    if lambda_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("lambda_grid", "grid must be sorted ascending"));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            Ok(DualCurvePoint {
                lambda,
                total_power: total_power(channels, lambda)?,
            })
        })
        .collect()
}

/// Optimal unweighted allocation. Weights on the channel set are ignored.
pub fn solve(problem: &Problem) -> Result<Allocation> {
    solve_with(problem, &SolveOptions::default())
}

pub fn solve_with(problem: &Problem, options: &SolveOptions) -> Result<Allocation> {
    Search::new(problem, false, options).run(None)
}

/// Like [`solve`], opening the bracket around `lambda_hint` (typically the
/// multiplier of a nearby, previously solved problem). A zero hint falls back
/// to the cold bracket.
pub fn solve_warm(problem: &Problem, lambda_hint: f64) -> Result<Allocation> {
    solve_warm_with(problem, lambda_hint, &SolveOptions::default())
}

pub fn solve_warm_with(problem: &Problem, lambda_hint: f64, options: &SolveOptions) -> Result<Allocation> {
    if !(lambda_hint.is_finite() && lambda_hint >= 0.0) {
        return Err(Error::domain("lambda_hint", format!("must be finite and >= 0, got {lambda_hint}")));
    }
    Search::new(problem, false, options).run(Some(lambda_hint))
}

/// Optimal allocation for the weighted objective `sum_i w_i (r_i - T_i)^2`.
pub fn allocate_weighted(problem: &Problem) -> Result<Allocation> {
    allocate_weighted_with(problem, &SolveOptions::default())
}

pub fn allocate_weighted_with(problem: &Problem, options: &SolveOptions) -> Result<Allocation> {
    if problem.channels.weights().is_none() {
        return Err(Error::domain("weights", "weighted allocation needs per-channel weights"));
    }
    Search::new(problem, true, options).run(None)
}

struct Search<'a> {
    problem: &'a Problem,
    weighted: bool,
    options: &'a SolveOptions,
    thresholds: Vec<f64>,
}

impl<'a> Search<'a> {
    fn new(problem: &'a Problem, weighted: bool, options: &'a SolveOptions) -> Self {
        let ch = &problem.channels;
        let thresholds = (0..ch.len())
            .map(|i| inactivity_threshold(ch.gains()[i], ch.targets()[i], Self::weight_of(ch, weighted, i)))
            .collect();
        Self {
            problem,
            weighted,
            options,
            thresholds,
        }
    }

    fn weight_of(ch: &ChannelSet, weighted: bool, i: usize) -> f64 {
        if weighted {
            ch.weight(i)
        } else {
            1.0
        }
    }

    fn weight(&self, i: usize) -> f64 {
        Self::weight_of(&self.problem.channels, self.weighted, i)
    }

    /// Every channel is off at or above this multiplier.
    fn lambda_max(&self) -> f64 {
        self.thresholds.iter().copied().fold(0.0, f64::max)
    }

    /// Fills `out` with clipped powers at `lambda` and returns their sum,
    /// accumulated in channel order.
    fn evaluate(&self, lambda: f64, mask: &[bool], out: &mut [f64]) -> Result<f64> {
        let ch = &self.problem.channels;
        let mut sum = 0.0;
        for i in 0..ch.len() {
            out[i] = if mask[i] {
                channel_power(ch.gains()[i], ch.targets()[i], self.weight(i), lambda)?
            } else {
                0.0
            };
            sum += out[i];
        }
        Ok(sum)
    }

    fn total(&self, lambda: f64, mask: &[bool], scratch: &mut [f64]) -> Result<f64> {
        if lambda >= self.lambda_max() {
            return Ok(0.0);
        }
        self.evaluate(lambda, mask, scratch)
    }

    fn prune(&self, state: &mut DualState) {
        if !self.options.pruning {
            return;
        }
        for (active, &threshold) in state.active_mask.iter_mut().zip(&self.thresholds) {
            if *active && state.lambda_lo >= threshold {
                *active = false;
            }
        }
    }

    fn allocation(&self, powers: Vec<f64>, lambda: f64, regime: Regime, iterations: usize, doublings: usize) -> Allocation {
        if self.weighted {
            Allocation::from_powers(&self.problem.channels, powers, lambda, regime, iterations, doublings)
        } else {
            let unweighted = self.problem.channels.without_weights();
            Allocation::from_powers(&unweighted, powers, lambda, regime, iterations, doublings)
        }
    }

    fn run(&self, hint: Option<f64>) -> Result<Allocation> {
        let ch = &self.problem.channels;
        let p_tot = self.problem.p_tot;
        let caps = ch.caps();
        let caps_sum: f64 = caps.iter().sum();

        if p_tot >= caps_sum {
            let mut alloc = self.allocation(caps, 0.0, Regime::CaseA, 0, 0);
            alloc.objective = 0.0;
            return Ok(alloc);
        }

        let n = ch.len();
        let mut scratch = vec![0.0; n];
        let all = vec![true; n];
        let (mut state, doublings) = match hint {
            Some(h) if h > 0.0 => self.warm_bracket(h, &all, &mut scratch)?,
            _ => self.cold_bracket(&all, &mut scratch)?,
        };
        self.prune(&mut state);

        let eps = self.problem.epsilon;
        let mut powers = vec![0.0; n];
        let mut iterations = 0;
        loop {
            let lambda = 0.5 * (state.lambda_lo + state.lambda_hi);
            let s = self.evaluate(lambda, &state.active_mask, &mut powers)?;
            iterations += 1;
            if s > p_tot {
                state.lambda_lo = lambda;
                self.prune(&mut state);
            } else {
                state.lambda_hi = lambda;
            }

            // Stop at the residual test, or once the midpoint can no longer
            // move in double precision.
            let width = state.lambda_hi - state.lambda_lo;
            let next = 0.5 * (state.lambda_lo + state.lambda_hi);
            let stalled = width < 1e-300 * state.lambda_hi.max(1.0)
                || next <= state.lambda_lo
                || next >= state.lambda_hi;
            if (s - p_tot).abs() < eps || stalled {
                return Ok(self.allocation(powers, lambda, Regime::CaseB, iterations, doublings));
            }
            if iterations >= MAX_BISECTIONS {
                return Err(Error::numerical(
                    "solve",
                    format!("bisection did not settle after {MAX_BISECTIONS} steps"),
                ));
            }
        }
    }

    fn cold_bracket(&self, mask: &[bool], scratch: &mut [f64]) -> Result<(DualState, usize)> {
        let p_tot = self.problem.p_tot;
        let mut hi = 1.0;
        let mut doublings = 0;
        while self.total(hi, mask, scratch)? > p_tot {
            if doublings == MAX_DOUBLINGS {
                return Err(Error::numerical(
                    "solve",
                    format!("no upper bracket after {MAX_DOUBLINGS} doublings"),
                ));
            }
            hi *= 2.0;
            doublings += 1;
        }
        let state = DualState {
            lambda_lo: 0.0,
            lambda_hi: hi,
            active_mask: mask.to_vec(),
        };
        Ok((state, doublings))
    }

    fn warm_bracket(&self, hint: f64, mask: &[bool], scratch: &mut [f64]) -> Result<(DualState, usize)> {
        let p_tot = self.problem.p_tot;
        let factor = self.options.warm_factor;
        if !(factor.is_finite() && factor > 1.0) {
            return Err(Error::domain("warm_factor", format!("must be > 1, got {factor}")));
        }
        let mut lo = hint / factor;
        let mut hi = hint * factor;
        // Each miss moves the bracket past the failed end and squares the
        // step, so a poor hint costs only logarithmically many evaluations.
        let mut step = factor * factor;
        let mut steps = 0;

        // Upper end: S(hi) must not exceed the budget.
        while self.total(hi, mask, scratch)? > p_tot {
            if steps == MAX_DOUBLINGS {
                return Err(Error::numerical("solve_warm", "no upper bracket found"));
            }
            lo = hi;
            // S vanishes at the largest threshold, which ends this loop.
            hi = (hi * step).min(self.lambda_max());
            step *= step;
            steps += 1;
        }
        // Lower end: S(lo) must reach the budget; S(0+) = sum of caps > p_tot.
        while lo > 0.0 && self.total(lo, mask, scratch)? < p_tot {
            hi = lo;
            lo /= step;
            step *= step;
            steps += 1;
            if steps > MAX_DOUBLINGS || lo < f64::MIN_POSITIVE {
                lo = 0.0;
            }
        }
        let state = DualState {
            lambda_lo: lo,
            lambda_hi: hi,
            active_mask: mask.to_vec(),
        };
        Ok((state, steps))
    }
}

fn check_channel(a: f64, t: f64, weight: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::domain("gain", format!("must be finite and > 0, got {a}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::domain("target", format!("must be finite and >= 0, got {t}")));
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::domain("weight", format!("must be finite and > 0, got {weight}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("lambda", format!("must be finite and > 0, got {lambda}")))
    }
}
