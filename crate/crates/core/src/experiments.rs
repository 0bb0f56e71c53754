//! Experiment harness: budget sweeps, the heterogeneous-target scenario,
//! Monte Carlo deviation statistics, SNR sensitivity, dual-curve sampling,
//! timing and warm-start comparisons.
//!
//! Everything except wall-clock timings is a deterministic function of its
//! inputs and seed. Parallel loops collect in index order, so results do not
//! depend on the thread count. CSV writers emit a header row and 17
//! significant digits per float.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::error::{Error, Result};
use crate::fading::{draw_gains, gaussian_factors, FadingConfig};
use crate::model::{heterogeneous_channels, Allocation, ChannelSet, Problem, DEFAULT_EPSILON};
use crate::solver::{dual_curve, dual_upper_bound, solve, solve_warm, DualCurvePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TargetRate,
    Waterfilling,
    Uniform,
    ProportionalFairness,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::TargetRate,
        Strategy::Waterfilling,
        Strategy::Uniform,
        Strategy::ProportionalFairness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::TargetRate => "target_rate",
            Strategy::Waterfilling => BaselineKind::Waterfilling.name(),
            Strategy::Uniform => BaselineKind::Uniform.name(),
            Strategy::ProportionalFairness => BaselineKind::ProportionalFairness.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn allocate(self, problem: &Problem) -> Result<Allocation> {
        let baseline = match self {
            Strategy::TargetRate => return solve(problem),
            Strategy::Waterfilling => BaselineKind::Waterfilling,
            Strategy::Uniform => BaselineKind::Uniform,
            Strategy::ProportionalFairness => BaselineKind::ProportionalFairness,
        };
        baseline.allocate(&problem.channels, problem.p_tot)
    }
}

fn check_grid(field: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain(field, "grid is empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain(field, "grid values must be finite"));
    }
    Ok(())
}

fn check_budget_grid(grid: &[f64]) -> Result<()> {
    check_grid("p_tot", grid)?;
    if grid.iter().any(|&x| x <= 0.0) {
        return Err(Error::domain("p_tot", "budgets must be > 0"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("p_tot", "budget grid must be ascending"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySeries {
    pub strategy: Strategy,
    pub power_used: Vec<f64>,
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub p_tot_grid: Vec<f64>,
    /// One entry per strategy, in [`Strategy::ALL`] order.
    pub series: Vec<StrategySeries>,
    pub caps_sum: f64,
}

impl SweepResult {
    pub fn series(&self, strategy: Strategy) -> &StrategySeries {
        self.series
            .iter()
            .find(|s| s.strategy == strategy)
            .expect("every strategy is swept")
    }
}

/// Runs every strategy at every budget of an ascending grid.
pub fn budget_sweep(channels: &ChannelSet, grid: &[f64]) -> Result<SweepResult> {
    check_budget_grid(grid)?;
    let mut series: Vec<StrategySeries> = Strategy::ALL
        .iter()
        .map(|&strategy| StrategySeries {
            strategy,
            power_used: Vec::with_capacity(grid.len()),
            objective: Vec::with_capacity(grid.len()),
        })
        .collect();
    for &p_tot in grid {
        let problem = Problem::new(channels.clone(), p_tot)?;
        for s in series.iter_mut() {
            let alloc = s.strategy.allocate(&problem)?;
            s.power_used.push(alloc.power_used);
            s.objective.push(alloc.objective);
        }
    }
    Ok(SweepResult {
        p_tot_grid: grid.to_vec(),
        series,
        caps_sum: channels.caps_sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousDemo {
    pub channels: ChannelSet,
    pub caps: Vec<f64>,
    pub caps_sum: f64,
    pub tight_budget: f64,
    pub tight: Allocation,
    pub slack_budget: f64,
    pub slack: Allocation,
}

impl HeterogeneousDemo {
    /// Budget left over in the slack scenario.
    pub fn unused_power(&self) -> f64 {
        self.slack_budget - self.slack.power_used
    }
}

/// Targets `{5,4,3,3,2,2,1,1}` on the default gains, solved at a budget below
/// the caps sum (5) and one above it (15).
pub fn heterogeneous_demo() -> Result<HeterogeneousDemo> {
    let channels = heterogeneous_channels();
    let (tight_budget, slack_budget) = (5.0, 15.0);
    let tight = solve(&Problem::new(channels.clone(), tight_budget)?)?;
    let slack = solve(&Problem::new(channels.clone(), slack_budget)?)?;
    Ok(HeterogeneousDemo {
        caps: channels.caps(),
        caps_sum: channels.caps_sum(),
        channels,
        tight_budget,
        tight,
        slack_budget,
        slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub strategy: Strategy,
    /// Pooled `|r_i - T_i|` over all realizations and channels, ascending.
    pub deviations: Vec<f64>,
    pub median: f64,
    pub p90: f64,
}

impl MonteCarloSummary {
    fn from_pool(strategy: Strategy, mut deviations: Vec<f64>) -> Self {
        deviations.sort_by(f64::total_cmp);
        Self {
            strategy,
            median: quantile(&deviations, 0.5),
            p90: quantile(&deviations, 0.9),
            deviations,
        }
    }

    /// Empirical CDF samples `(x_(k), k/n)`.
    pub fn empirical_cdf(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.deviations.len() as f64;
        self.deviations
            .iter()
            .enumerate()
            .map(move |(k, &x)| (x, (k + 1) as f64 / n))
    }
}

/// Linearly interpolated quantile of sorted data (the common "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn realization_problem(config: &FadingConfig, k: usize, target: f64, p_tot: f64) -> Result<Problem> {
    let channels = ChannelSet::uniform_target(draw_gains(config, k)?, target)?;
    Problem::new(channels, p_tot)
}

/// Deviation statistics of every strategy over seeded Rayleigh realizations.
/// Summaries come back in [`Strategy::ALL`] order.
pub fn monte_carlo(config: &FadingConfig, target: f64, p_tot: f64) -> Result<Vec<MonteCarloSummary>> {
    config.validate()?;
    let per_realization: Vec<Vec<Vec<f64>>> = (0..config.n_realizations)
        .into_par_iter()
        .map(|k| {
            let problem = realization_problem(config, k, target, p_tot)?;
            Strategy::ALL
                .iter()
                .map(|s| Ok(s.allocate(&problem)?.deviations(&problem.channels)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok(Strategy::ALL
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let pool = per_realization.iter().flat_map(|r| r[j].iter().copied()).collect();
            MonteCarloSummary::from_pool(s, pool)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSensitivity {
    pub snr_grid_db: Vec<f64>,
    /// `(strategy, mean J per grid point)` in [`Strategy::ALL`] order.
    pub mean_objective: Vec<(Strategy, Vec<f64>)>,
}

impl SnrSensitivity {
    pub fn series(&self, strategy: Strategy) -> &[f64] {
        &self
            .mean_objective
            .iter()
            .find(|(s, _)| *s == strategy)
            .expect("every strategy is evaluated")
            .1
    }
}

/// Mean objective per strategy across an SNR grid. `base.mean_snr_db` is
/// ignored; every grid point reuses the same unit-mean fading draws, so the
/// curves differ only through the SNR.
pub fn snr_sensitivity(snr_grid_db: &[f64], base: &FadingConfig, target: f64, p_tot: f64) -> Result<SnrSensitivity> {
    check_grid("snr_db", snr_grid_db)?;
    let mut mean_objective: Vec<(Strategy, Vec<f64>)> =
        Strategy::ALL.iter().map(|&s| (s, Vec::with_capacity(snr_grid_db.len()))).collect();
    for &snr in snr_grid_db {
        let config = FadingConfig { mean_snr_db: snr, ..*base };
        config.validate()?;
        let sums = (0..config.n_realizations)
            .into_par_iter()
            .map(|k| {
                let problem = realization_problem(&config, k, target, p_tot)?;
                Strategy::ALL
                    .iter()
                    .map(|s| Ok(s.allocate(&problem)?.objective))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (j, (_, series)) in mean_objective.iter_mut().enumerate() {
            let total: f64 = sums.iter().map(|r| r[j]).sum();
            series.push(total / config.n_realizations as f64);
        }
    }
    Ok(SnrSensitivity {
        snr_grid_db: snr_grid_db.to_vec(),
        mean_objective,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub mean_seconds: f64,
    /// Sample standard deviation over the timed runs.
    pub std_seconds: f64,
    pub iterations: usize,
}

/// Rayleigh instance at 10 dB with `T = 3` and budget `10 N / 8`, the
/// default instance's budget per channel. When that budget would cover every
/// cap it drops to half the caps sum, so the bisection always runs.
pub fn timing_instance(n: usize, seed: u64) -> Result<Problem> {
    let config = FadingConfig::new(n, 10.0, seed, 1)?;
    let channels = ChannelSet::uniform_target(draw_gains(&config, 0)?, 3.0)?;
    let p_tot = (10.0 * n as f64 / 8.0).min(0.5 * channels.caps_sum());
    Problem::with_epsilon(channels, p_tot, DEFAULT_EPSILON)
}

pub const MIN_TIMING_RUNS: usize = 5;

/// Shortest batch that counts as one timed run. Small instances solve in
/// microseconds, so a run repeats the solve until it spans at least this long.
pub const MIN_RUN_SECONDS: f64 = 1e-3;

/// Wall-clock time per [`solve`] for each channel count. An untimed warm-up
/// solve sizes the batches, then `runs` batches are timed.
pub fn timing_bench(n_grid: &[usize], runs: usize, seed: u64) -> Result<Vec<TimingRow>> {
    if runs < MIN_TIMING_RUNS {
        return Err(Error::domain("runs", format!("need at least {MIN_TIMING_RUNS} runs, got {runs}")));
    }
    if n_grid.contains(&0) {
        return Err(Error::domain("n", "channel counts must be >= 1"));
    }
    n_grid
        .iter()
        .map(|&n| {
            let problem = timing_instance(n, seed)?;
            let start = Instant::now();
            let warmup = solve(&problem)?;
            let single = start.elapsed().as_secs_f64().max(1e-9);
            let batch = ((MIN_RUN_SECONDS / single).ceil() as usize).clamp(1, 1_000_000);

            let mut times = Vec::with_capacity(runs);
            for _ in 0..runs {
                let start = Instant::now();
                for _ in 0..batch {
                    std::hint::black_box(solve(std::hint::black_box(&problem))?);
                }
                times.push(start.elapsed().as_secs_f64() / batch as f64);
            }
            let mean = times.iter().sum::<f64>() / runs as f64;
            let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (runs - 1) as f64;
            Ok(TimingRow {
                n,
                mean_seconds: mean,
                std_seconds: var.sqrt(),
                iterations: warmup.iterations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartResult {
    pub cold_iterations: Vec<usize>,
    pub warm_iterations: Vec<usize>,
}

impl WarmStartResult {
    pub fn mean_cold(&self) -> f64 {
        mean_count(&self.cold_iterations)
    }

    pub fn mean_warm(&self) -> f64 {
        mean_count(&self.warm_iterations)
    }
}

fn mean_count(xs: &[usize]) -> f64 {
    xs.iter().sum::<usize>() as f64 / xs.len().max(1) as f64
}

/// Slowly varying channels: starting from a timing instance, every step
/// multiplies each gain by `exp(sigma z)`, `z` standard normal, and solves
/// both cold and warm-started from the previous step's multiplier.
/// Iterations count bisection steps plus bracket expansions.
pub fn warm_start_experiment(n: usize, steps: usize, sigma: f64, seed: u64) -> Result<WarmStartResult> {
    if steps == 0 {
        return Err(Error::domain("steps", "need at least one step"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::domain("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    let base = timing_instance(n, seed)?;
    let targets = base.channels.targets().to_vec();
    let mut gains = base.channels.gains().to_vec();
    let mut hint = solve(&base)?.lambda;
    let mut result = WarmStartResult {
        cold_iterations: Vec::with_capacity(steps),
        warm_iterations: Vec::with_capacity(steps),
    };
    for step in 0..steps {
        for (g, f) in gains.iter_mut().zip(gaussian_factors(seed, step, n, sigma)) {
            *g *= f;
        }
        let problem = Problem::with_epsilon(ChannelSet::new(gains.clone(), targets.clone())?, base.p_tot, base.epsilon)?;
        let cold = solve(&problem)?;
        let warm = solve_warm(&problem, hint)?;
        result.cold_iterations.push(cold.iterations + cold.doublings);
        result.warm_iterations.push(warm.iterations + warm.doublings);
        hint = warm.lambda;
    }
    Ok(result)
}

/// `S(lambda)` on `points` log-spaced multipliers spanning six decades below
/// the largest inactivity threshold.
pub fn dual_curve_samples(channels: &ChannelSet, points: usize) -> Result<Vec<DualCurvePoint>> {
    if points < 2 {
        return Err(Error::domain("points", "need at least two samples"));
    }
    let top = dual_upper_bound(channels);
    if top <= 0.0 {
        return Err(Error::domain("targets", "all targets are zero, the dual curve is identically 0"));
    }
    let (lo, hi) = ((top * 1e-6).ln(), top.ln());
    let mut grid: Vec<f64> = (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect();
    grid[points - 1] = top;
    dual_curve(channels, &grid)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_table<P: AsRef<Path>>(path: P, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `p_tot,strategy,power_used,objective`, one row per budget and strategy.
pub fn write_sweep_csv<P: AsRef<Path>>(path: P, sweep: &SweepResult) -> Result<()> {
    let rows = sweep.p_tot_grid.iter().enumerate().flat_map(|(k, &p)| {
        sweep.series.iter().map(move |s| {
            vec![num(p), s.strategy.name().to_string(), num(s.power_used[k]), num(s.objective[k])]
        })
    });
    write_table(path, &["p_tot", "strategy", "power_used", "objective"], rows)
}

/// `cdf_<strategy>.csv` with `deviation,empirical_cdf` for every summary.
pub fn write_cdf_csvs<P: AsRef<Path>>(dir: P, summaries: &[MonteCarloSummary]) -> Result<()> {
    for s in summaries {
        let path = dir.as_ref().join(format!("cdf_{}.csv", s.strategy.name()));
        let rows = s.empirical_cdf().map(|(x, f)| vec![num(x), num(f)]);
        write_table(path, &["deviation", "empirical_cdf"], rows)?;
    }
    Ok(())
}

/// `snr_db,strategy,mean_J`.
pub fn write_snr_csv<P: AsRef<Path>>(path: P, result: &SnrSensitivity) -> Result<()> {
    let rows = result.snr_grid_db.iter().enumerate().flat_map(|(k, &snr)| {
        result
            .mean_objective
            .iter()
            .map(move |(s, series)| vec![num(snr), s.name().to_string(), num(series[k])])
    });
    write_table(path, &["snr_db", "strategy", "mean_J"], rows)
}

/// `n,mean_s,std_s,iterations`.
pub fn write_timing_csv<P: AsRef<Path>>(path: P, rows: &[TimingRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![r.n.to_string(), num(r.mean_seconds), num(r.std_seconds), r.iterations.to_string()]
    });
    write_table(path, &["n", "mean_s", "std_s", "iterations"], rows)
}

/// `lambda,total_power`.
pub fn write_dual_curve_csv<P: AsRef<Path>>(path: P, points: &[DualCurvePoint]) -> Result<()> {
    let rows = points.iter().map(|p| vec![num(p.lambda), num(p.total_power)]);
    write_table(path, &["lambda", "total_power"], rows)
}

/// `p_tot,channel,gain,target,power,rate,cap` for both budgets of the demo.
pub fn write_hetero_csv<P: AsRef<Path>>(path: P, demo: &HeterogeneousDemo) -> Result<()> {
    let ch = &demo.channels;
    let rows = [(demo.tight_budget, &demo.tight), (demo.slack_budget, &demo.slack)]
        .into_iter()
        .flat_map(|(budget, alloc)| {
            (0..ch.len()).map(move |i| {
                vec![
                    num(budget),
                    i.to_string(),
                    num(ch.gains()[i]),
                    num(ch.targets()[i]),
                    num(alloc.powers[i]),
                    num(alloc.rates[i]),
                    num(demo.caps[i]),
                ]
            })
        });
    write_table(path, &["p_tot", "channel", "gain", "target", "power", "rate", "cap"], rows)
}

/// `step,cold_iterations,warm_iterations`.
pub fn write_warmstart_csv<P: AsRef<Path>>(path: P, result: &WarmStartResult) -> Result<()> {
    let rows = result
        .cold_iterations
        .iter()
        .zip(&result.warm_iterations)
        .enumerate()
        .map(|(k, (c, w))| vec![k.to_string(), c.to_string(), w.to_string()]);
    write_table(path, &["step", "cold_iterations", "warm_iterations"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_channels;

    #[test]
    fn quantile_matches_linear_interpolation() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&x, 0.5), 2.5);
        assert!((quantile(&x, 0.9) - 3.7).abs() < 1e-15);
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn sweep_table() {
        let sweep = budget_sweep(&default_channels(), &[5.0, 10.0, 15.0, 20.0, 25.0]).unwrap();
        let tr = sweep.series(Strategy::TargetRate);
        let expect = [9.593, 1.789, 0.079, 0.0, 0.0];
        for (j, e) in tr.objective.iter().zip(expect) {
            assert!((j - e).abs() < 1e-3, "{j} vs {e}");
        }
        assert_eq!(tr.objective[3], 0.0);
        assert!((tr.power_used[3] - 16.75).abs() < 1e-12);
        assert_eq!(sweep.series(Strategy::Waterfilling).power_used.len(), 5);
        assert_eq!(budget_sweep(&default_channels(), &[2.0, 1.0]).unwrap_err().field(), Some("p_tot"));
    }

    #[test]
    fn hetero_numbers() {
        let d = heterogeneous_demo().unwrap();
        assert!((d.caps_sum - 7.35).abs() < 1e-12);
        assert!((d.unused_power() - 7.65).abs() < 1e-10);
        assert_eq!(d.slack.objective, 0.0);
        assert!((d.tight.power_used - 5.0).abs() < 1e-10);
        assert!(d.tight.objective > 0.0);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let cfg = FadingConfig::new(8, 10.0, 3, 40).unwrap();
        let a = monte_carlo(&cfg, 3.0, 10.0).unwrap();
        let b = monte_carlo(&cfg, 3.0, 10.0).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.deviations.len(), 320);
            assert!(s.deviations[0] >= 0.0 && s.median <= s.p90);
        }
    }

    #[test]
    fn timing_needs_five_runs() {
        assert_eq!(timing_bench(&[8], 4, 1).unwrap_err().field(), Some("runs"));
        let rows = timing_bench(&[8, 16], 5, 1).unwrap();
        assert!(rows.iter().all(|r| r.mean_seconds > 0.0));
    }

    #[test]
    fn dual_curve_is_nonincreasing() {
        let pts = dual_curve_samples(&default_channels(), 50).unwrap();
        assert!(pts.windows(2).all(|w| w[1].total_power <= w[0].total_power));
        assert_eq!(pts.last().unwrap().total_power, 0.0);
    }

    #[test]
    fn csv_rows_match_config() {
        let dir = tempfile::tempdir().unwrap();
        let sweep = budget_sweep(&default_channels(), &[5.0, 10.0]).unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &sweep).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 4);
        assert!(text.starts_with("p_tot,strategy,power_used,objective\n"));
        assert!(text.contains("1.0000000000000000e1,target_rate,"));
    }
}
