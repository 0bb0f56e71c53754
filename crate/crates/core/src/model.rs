//! Problem data: channels, targets, budgets, caps, rates and the objective.
//!
//! Everything is carried in linear units. Rates are spectral efficiencies in
//! bits/s/Hz; the objective is in bits^2.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nats per bit.
pub const LN_2: f64 = std::f64::consts::LN_2;

/// Default bisection tolerance on `|S(lambda) - p_tot|`.
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Static data of an allocation problem: per-channel gain-to-noise ratios,
/// targets and optional priority weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    gains: Vec<f64>,
    targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl ChannelSet {
    pub fn new(gains: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::domain("gains", "at least one channel is required"));
        }
        if targets.len() != gains.len() {
            return Err(Error::domain(
                "targets",
                format!("expected {} targets, got {}", gains.len(), targets.len()),
            ));
        }
        if let Some((i, a)) = gains.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::domain("gains", format!("gain {i} must be finite and > 0, got {a}")));
        }
        if let Some((i, t)) = targets.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::domain("targets", format!("target {i} must be finite and >= 0, got {t}")));
        }
        Ok(Self {
            gains,
            targets,
            weights: None,
        })
    }

    /// Same target on every channel.
    pub fn uniform_target(gains: Vec<f64>, target: f64) -> Result<Self> {
        let targets = vec![target; gains.len()];
        Self::new(gains, targets)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.gains.len() {
            return Err(Error::domain(
                "weights",
                format!("expected {} weights, got {}", self.gains.len(), weights.len()),
            ));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::domain("weights", format!("weight {i} must be finite and > 0, got {w}")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of channel `i`, 1 when no weights are set.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Drops the weights, leaving the unweighted problem.
    pub fn without_weights(&self) -> Self {
        Self {
            gains: self.gains.clone(),
            targets: self.targets.clone(),
            weights: None,
        }
    }

    /// Per-channel powers that exactly meet each target.
    pub fn caps(&self) -> Vec<f64> {
        self.gains
            .iter()
            .zip(&self.targets)
            .map(|(&a, &t)| cap_unchecked(a, t))
            .collect()
    }

    pub fn caps_sum(&self) -> f64 {
        self.caps().iter().sum()
    }
}

/// A channel set with a total power budget and a bisection tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub channels: ChannelSet,
    pub p_tot: f64,
    pub epsilon: f64,
}

impl Problem {
    pub fn new(channels: ChannelSet, p_tot: f64) -> Result<Self> {
        Self::with_epsilon(channels, p_tot, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(channels: ChannelSet, p_tot: f64, epsilon: f64) -> Result<Self> {
        if !(p_tot.is_finite() && p_tot > 0.0) {
            return Err(Error::domain("p_tot", format!("power budget must be finite and > 0, got {p_tot}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain("epsilon", format!("tolerance must be finite and > 0, got {epsilon}")));
        }
        Ok(Self {
            channels,
            p_tot,
            epsilon,
        })
    }

    /// Parses the problem-instance document (JSON). `targets` may be a scalar,
    /// broadcast to every channel.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)
            .map_err(|e| Error::domain("problem", format!("malformed problem document: {e}")))?;
        file.into_problem()
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            gains: self.channels.gains.clone(),
            targets: Targets::List(self.channels.targets.clone()),
            weights: self.channels.weights.clone(),
            p_tot: self.p_tot,
            epsilon: Some(self.epsilon),
        }
    }
}

/// Target field of a problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Targets {
    Scalar(f64),
    List(Vec<f64>),
}

/// On-disk form of a [`Problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub gains: Vec<f64>,
    pub targets: Targets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub p_tot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<Problem> {
        let targets = match self.targets {
            Targets::Scalar(t) => vec![t; self.gains.len()],
            Targets::List(v) => v,
        };
        let mut channels = ChannelSet::new(self.gains, targets)?;
        if let Some(w) = self.weights {
            channels = channels.with_weights(w)?;
        }
        Problem::with_epsilon(channels, self.p_tot, self.epsilon.unwrap_or(DEFAULT_EPSILON))
    }
}

/// Operating regime of an optimal allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Budget covers every cap; the power constraint is slack.
    CaseA,
    /// Budget is short of the caps; the power constraint is tight.
    CaseB,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::CaseA => f.write_str("CaseA"),
            Regime::CaseB => f.write_str("CaseB"),
        }
    }
}

/// Result of an allocator: powers plus everything derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub powers: Vec<f64>,
    pub rates: Vec<f64>,
    pub objective: f64,
    /// Multiplier of the sum-power constraint. Zero in the slack regime.
    pub lambda: f64,
    pub regime: Regime,
    /// Bisection steps on the dual variable.
    pub iterations: usize,
    /// Bracket expansion steps before bisection started.
    pub doublings: usize,
    pub power_used: f64,
}

impl Allocation {
    /// Builds an allocation, deriving rates, objective and power used from
    /// `powers`. Powers must already be validated against `channels`.
    pub fn from_powers(
        channels: &ChannelSet,
        powers: Vec<f64>,
        lambda: f64,
        regime: Regime,
        iterations: usize,
        doublings: usize,
    ) -> Self {
        let rates: Vec<f64> = channels
            .gains()
            .iter()
            .zip(&powers)
            .map(|(&a, &p)| rate_unchecked(a, p))
            .collect();
        let objective = weighted_deviation(channels, &rates);
        let power_used = powers.iter().sum();
        Self {
            powers,
            rates,
            objective,
            lambda,
            regime,
            iterations,
            doublings,
            power_used,
        }
    }

    /// Per-channel absolute deviations `|r_i - T_i|`.
    pub fn deviations(&self, channels: &ChannelSet) -> Vec<f64> {
        self.rates
            .iter()
            .zip(channels.targets())
            .map(|(r, t)| (r - t).abs())
            .collect()
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Spectral efficiency `log2(1 + a p)`.
pub fn rate(a: f64, p: f64) -> Result<f64> {
    check_gain(a)?;
    check_power(p)?;
    Ok(rate_unchecked(a, p))
}

#[inline]
pub(crate) fn rate_unchecked(a: f64, p: f64) -> f64 {
    (a * p).ln_1p() / LN_2
}

/// Power `(2^t - 1)/a` that exactly meets target `t`.
pub fn cap(a: f64, t: f64) -> Result<f64> {
    check_gain(a)?;
    check_target(t)?;
    Ok(cap_unchecked(a, t))
}

#[inline]
pub(crate) fn cap_unchecked(a: f64, t: f64) -> f64 {
    (t.exp2() - 1.0) / a
}

/// `sum_i w_i (r_i(P_i) - T_i)^2`.
pub fn objective(channels: &ChannelSet, powers: &[f64]) -> Result<f64> {
    check_powers(channels, powers)?;
    let rates: Vec<f64> = channels
        .gains()
        .iter()
        .zip(powers)
        .map(|(&a, &p)| rate_unchecked(a, p))
        .collect();
    Ok(weighted_deviation(channels, &rates))
}

fn weighted_deviation(channels: &ChannelSet, rates: &[f64]) -> f64 {
    rates
        .iter()
        .zip(channels.targets())
        .enumerate()
        .map(|(i, (r, t))| channels.weight(i) * (r - t) * (r - t))
        .sum()
}

/// Gradient of the (weighted) objective: `2 w_i (r_i - T_i) a_i / ((1 + a_i P_i) ln 2)`.
pub fn objective_gradient(channels: &ChannelSet, powers: &[f64]) -> Result<Vec<f64>> {
    check_powers(channels, powers)?;
    Ok((0..channels.len())
        .map(|i| {
            let (a, t, p) = (channels.gains[i], channels.targets[i], powers[i]);
            2.0 * channels.weight(i) * (rate_unchecked(a, p) - t) * a / ((1.0 + a * p) * LN_2)
        })
        .collect())
}

/// Second derivative of one unweighted objective term `(r(p) - t)^2`.
pub fn term_second_derivative(a: f64, t: f64, p: f64) -> f64 {
    let y = 1.0 + a * p;
    2.0 * a * a / (LN_2 * LN_2 * y * y) * (1.0 - (a * p).ln_1p() + t * LN_2)
}

/// Sign of the second derivative of `(r(p) - t)^2`.
///
/// Nonnegative on `[0, cap(a, t)]`; turns negative past `(e 2^t - 1)/a`.
pub fn second_derivative_sign(a: f64, t: f64, p: f64) -> Result<Ordering> {
    check_gain(a)?;
    check_target(t)?;
    check_power(p)?;
    // The prefactor is strictly positive, so the bracket carries the sign.
    let bracket = 1.0 - (a * p).ln_1p() + t * LN_2;
    Ok(bracket.partial_cmp(&0.0).unwrap_or(Ordering::Equal))
}

fn check_gain(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("gain", format!("must be finite and > 0, got {a}")))
    }
}

fn check_target(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain("target", format!("must be finite and >= 0, got {t}")))
    }
}

fn check_power(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain("power", format!("must be finite and >= 0, got {p}")))
    }
}

pub(crate) fn check_powers(channels: &ChannelSet, powers: &[f64]) -> Result<()> {
    if powers.len() != channels.len() {
        return Err(Error::domain(
            "powers",
            format!("expected {} powers, got {}", channels.len(), powers.len()),
        ));
    }
    powers.iter().try_for_each(|&p| check_power(p))
}

/// The eight-channel instance used throughout the experiments:
/// gains {20, 15, 10, 7, 5, 3, 2, 1}, target 3 on every channel.
pub fn default_channels() -> ChannelSet {
    ChannelSet::uniform_target(vec![20.0, 15.0, 10.0, 7.0, 5.0, 3.0, 2.0, 1.0], 3.0)
        .expect("default instance is valid")
}

/// Default gains with targets {5, 4, 3, 3, 2, 2, 1, 1}.
pub fn heterogeneous_channels() -> ChannelSet {
    ChannelSet::new(
        vec![20.0, 15.0, 10.0, 7.0, 5.0, 3.0, 2.0, 1.0],
        vec![5.0, 4.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0],
    )
    .expect("heterogeneous instance is valid")
}
