//! Comparison allocators: waterfilling, uniform split and proportional
//! fairness. All three always spend the whole budget. Their `objective` is
//! the unweighted target-rate objective, so they can be compared against the
//! solver directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, ChannelSet, Regime, LN_2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Waterfilling,
    Uniform,
    ProportionalFairness,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::Waterfilling,
        BaselineKind::Uniform,
        BaselineKind::ProportionalFairness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Waterfilling => "waterfilling",
            BaselineKind::Uniform => "uniform",
            BaselineKind::ProportionalFairness => "proportional_fairness",
        }
    }

    pub fn allocate(self, channels: &ChannelSet, p_tot: f64) -> Result<Allocation> {
        match self {
            BaselineKind::Waterfilling => waterfill(channels, p_tot),
            BaselineKind::Uniform => uniform(channels, p_tot),
            BaselineKind::ProportionalFairness => proportional_fair(channels, p_tot),
        }
    }
}

fn check_budget(p_tot: f64) -> Result<()> {
    if p_tot.is_finite() && p_tot > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("p_tot", format!("power budget must be finite and > 0, got {p_tot}")))
    }
}

fn finish(channels: &ChannelSet, powers: Vec<f64>, lambda: f64, iterations: usize) -> Allocation {
    Allocation::from_powers(&channels.without_weights(), powers, lambda, Regime::CaseB, iterations, 0)
}

/// Water level `nu` with `sum_i max(0, nu - 1/a_i) = p_tot`.
pub fn water_level(channels: &ChannelSet, p_tot: f64) -> Result<f64> {
    check_budget(p_tot)?;
    let mut floors: Vec<f64> = channels.gains().iter().map(|a| 1.0 / a).collect();
    floors.sort_by(f64::total_cmp);
    // Drop the weakest channels until the level clears every remaining floor.
    let mut prefix: f64 = floors.iter().sum();
    for k in (1..=floors.len()).rev() {
        let nu = (p_tot + prefix) / k as f64;
        if nu > floors[k - 1] {
            return Ok(nu);
        }
        prefix -= floors[k - 1];
    }
    unreachable!("a single channel always clears its own floor")
}

/// Sum-rate maximizing allocation `P_i = (nu - 1/a_i)+`.
///
/// `lambda` is reported as the sum-rate multiplier `1/(nu ln 2)`.
pub fn waterfill(channels: &ChannelSet, p_tot: f64) -> Result<Allocation> {
    let nu = water_level(channels, p_tot)?;
    let powers = channels.gains().iter().map(|a| (nu - 1.0 / a).max(0.0)).collect();
    Ok(finish(channels, powers, 1.0 / (nu * LN_2), 0))
}

/// Equal split `P_i = p_tot / N`. Carries no multiplier (`lambda = 0`).
pub fn uniform(channels: &ChannelSet, p_tot: f64) -> Result<Allocation> {
    check_budget(p_tot)?;
    let share = p_tot / channels.len() as f64;
    Ok(finish(channels, vec![share; channels.len()], 0.0, 0))
}

/// Lower bound on any proportional-fair power, as a fraction of the budget.
pub const PF_FLOOR: f64 = 1e-12;

/// Maximizes `sum_i ln(log2(1 + a_i P_i))` subject to `sum_i P_i = p_tot`.
///
/// Stationarity reads `a/((1 + aP) ln(1 + aP)) = mu` on every channel. With
/// `u = ln(1 + aP)` that is `u + ln u = ln(a/mu)`, solved per channel by
/// safeguarded Newton; the shared `mu` is found by geometric bisection.
/// `lambda` reports `mu`.
pub fn proportional_fair(channels: &ChannelSet, p_tot: f64) -> Result<Allocation> {
    check_budget(p_tot)?;
    let n = channels.len();
    let floor = PF_FLOOR * p_tot;
    let gains = channels.gains();

    let marginal = |a: f64, p: f64| a / ((1.0 + a * p) * (a * p).ln_1p());
    // mu_lo hands some channel the whole budget; mu_hi caps every channel at p_tot/N.
    let mut mu_lo = gains.iter().map(|&a| marginal(a, p_tot)).fold(f64::INFINITY, f64::min);
    let mut mu_hi = gains
        .iter()
        .map(|&a| marginal(a, p_tot / n as f64))
        .fold(0.0, f64::max);

    let mut powers = vec![0.0; n];
    let fill = |mu: f64, out: &mut [f64]| -> Result<f64> {
        let mut sum = 0.0;
        for (slot, &a) in out.iter_mut().zip(gains) {
            *slot = pf_channel_power(a, mu, floor, p_tot)?;
            sum += *slot;
        }
        Ok(sum)
    };

    let tol = 1e-12 * p_tot.max(1.0);
    let mut best: Option<(f64, f64)> = None;
    let mut iterations = 0;
    while iterations < 400 {
        let mu = (mu_lo * mu_hi).sqrt();
        let s = fill(mu, &mut powers)?;
        iterations += 1;
        let resid = (s - p_tot).abs();
        if resid <= tol {
            return Ok(finish(channels, powers, mu, iterations));
        }
        if best.is_none_or(|(r, _)| resid < r) {
            best = Some((resid, mu));
        }
        if s > p_tot {
            mu_lo = mu;
        } else {
            mu_hi = mu;
        }
        if mu_hi / mu_lo - 1.0 <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let (_, mu) = best.expect("at least one bisection step ran");
    fill(mu, &mut powers)?;
    Ok(finish(channels, powers, mu, iterations))
}

/// Proportional-fair power of one channel at multiplier `mu`, in `[floor, cap]`.
fn pf_channel_power(a: f64, mu: f64, floor: f64, cap: f64) -> Result<f64> {
    let target = (a / mu).ln();
    let h = |u: f64| u + u.ln() - target;
    let mut lo = (a * floor).ln_1p();
    let mut hi = (a * cap).ln_1p();
    if h(hi) <= 0.0 {
        return Ok(cap);
    }
    if h(lo) >= 0.0 {
        return Ok(floor);
    }

    let mut u = if target > 1.0 { target - target.ln() } else { target.exp() };
    if !(u > lo && u < hi) {
        u = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let hu = h(u);
        if hu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let newton = u - hu / (1.0 + 1.0 / u);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - u).abs() <= 2.0 * f64::EPSILON * u || hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok((next.exp_m1() / a).clamp(floor, cap));
        }
        u = next;
    }
    Err(Error::numerical(
        "proportional_fair",
        format!("per-channel solve did not converge (a = {a}, mu = {mu})"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_channels;

    #[test]
    fn waterfill_examples() {
        let sym = ChannelSet::uniform_target(vec![1.0, 1.0], 3.0).unwrap();
        let a = waterfill(&sym, 2.0).unwrap();
        assert!((a.powers[0] - 1.0).abs() < 1e-15 && (a.powers[1] - 1.0).abs() < 1e-15);

        let single = ChannelSet::uniform_target(vec![4.0], 3.0).unwrap();
        assert!((waterfill(&single, 3.5).unwrap().powers[0] - 3.5).abs() < 1e-15);

        let a = waterfill(&default_channels(), 10.0).unwrap();
        assert!((a.objective - 15.383).abs() < 1e-3, "J = {}", a.objective);
        assert!((a.power_used - 10.0).abs() < 1e-12 * 10.0);
    }

    #[test]
    fn waterfill_shuts_off_weak_channels() {
        let ch = ChannelSet::uniform_target(vec![10.0, 1.0, 0.01], 1.0).unwrap();
        let a = waterfill(&ch, 1.0).unwrap();
        assert_eq!(a.powers[2], 0.0);
        let nu = water_level(&ch, 1.0).unwrap();
        for (p, g) in a.powers.iter().zip(ch.gains()) {
            if *p > 0.0 {
                assert!((p + 1.0 / g - nu).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_examples() {
        let a = uniform(&default_channels(), 10.0).unwrap();
        assert!(a.powers.iter().all(|&p| p == 1.25));
        assert!((a.objective - 10.600).abs() < 1e-3);
        let single = ChannelSet::uniform_target(vec![4.0], 3.0).unwrap();
        assert_eq!(uniform(&single, 2.5).unwrap().powers, vec![2.5]);
        assert_eq!(uniform(&default_channels(), 0.0).unwrap_err().field(), Some("p_tot"));
    }

    #[test]
    fn pf_examples() {
        let sym = ChannelSet::uniform_target(vec![1.0, 1.0], 3.0).unwrap();
        let a = proportional_fair(&sym, 2.0).unwrap();
        assert!((a.powers[0] - 1.0).abs() < 1e-10 && (a.powers[1] - 1.0).abs() < 1e-10);

        let a = proportional_fair(&default_channels(), 10.0).unwrap();
        assert!((a.objective - 6.532).abs() < 0.05 * 6.532, "J = {}", a.objective);
        assert!((a.power_used - 10.0).abs() <= 1e-10);

        let single = ChannelSet::uniform_target(vec![0.3], 3.0).unwrap();
        assert!((proportional_fair(&single, 4.0).unwrap().powers[0] - 4.0).abs() <= 1e-10);
    }

    #[test]
    fn pf_equalizes_marginal_utility() {
        let ch = ChannelSet::uniform_target(vec![30.0, 4.0, 0.7, 0.05], 2.0).unwrap();
        let a = proportional_fair(&ch, 6.0).unwrap();
        let m: Vec<f64> = ch
            .gains()
            .iter()
            .zip(&a.powers)
            .map(|(&g, &p)| g / ((1.0 + g * p) * (g * p).ln_1p()))
            .collect();
        for v in &m {
            assert!((v / m[0] - 1.0).abs() < 1e-8, "{m:?}");
        }
    }

    #[test]
    fn pf_handles_extreme_spread() {
        let ch = ChannelSet::uniform_target(vec![1e4, 1e-4, 1.0], 3.0).unwrap();
        let a = proportional_fair(&ch, 0.01).unwrap();
        assert!((a.power_used - 0.01).abs() <= 1e-10);
        assert!(a.powers.iter().all(|&p| p >= PF_FLOOR * 0.01));
    }
}
