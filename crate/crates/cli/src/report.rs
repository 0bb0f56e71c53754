//! Human and JSON renderings of command results.

use std::fmt::Write;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use targetrate::experiments::{HeterogeneousDemo, MonteCarloSummary, SnrSensitivity, Strategy, SweepResult, TimingRow, WarmStartResult};
use targetrate::model::ProblemFile;
use targetrate::oracle::KktReport;
use targetrate::{Allocation, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
}

/// Machine-readable `solve` output; `certify --solution` reads it back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub strategy: Strategy,
    pub problem: ProblemFile,
    pub caps: Vec<f64>,
    pub unused_power: f64,
    pub allocation: Allocation,
}

impl SolutionDocument {
    pub fn new(strategy: Strategy, problem: &Problem, allocation: Allocation) -> Self {
        Self {
            strategy,
            problem: problem.to_file(),
            caps: problem.channels.caps(),
            unused_power: problem.p_tot - allocation.power_used,
            allocation,
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn solution(doc: &SolutionDocument, format: Format) -> String {
    if format == Format::Json {
        return json(doc);
    }
    let a = &doc.allocation;
    let p = &doc.problem;
    let targets: Vec<f64> = match &p.targets {
        targetrate::model::Targets::Scalar(t) => vec![*t; p.gains.len()],
        targetrate::model::Targets::List(v) => v.clone(),
    };
    let mut out = String::new();
    writeln!(out, "strategy   {}", doc.strategy.name()).unwrap();
    writeln!(out, "regime     {}", a.regime).unwrap();
    writeln!(out, "J = {:.6}", a.objective).unwrap();
    writeln!(out, "lambda     {:.6e}", a.lambda).unwrap();
    writeln!(out, "iterations {} (+{} bracket expansions)", a.iterations, a.doublings).unwrap();
    writeln!(out, "power      used {:.6} of {:.6}, unused {}", a.power_used, p.p_tot, trim(doc.unused_power)).unwrap();
    writeln!(out, "{:>7} {:>12} {:>8} {:>12} {:>10} {:>12}", "channel", "gain", "target", "power", "rate", "cap").unwrap();
    let rows = p.gains.iter().zip(&targets).zip(a.powers.iter().zip(&a.rates)).zip(&doc.caps);
    for (i, (((g, t), (pw, r)), c)) in rows.enumerate() {
        writeln!(out, "{i:>7} {g:>12.6} {t:>8.4} {pw:>12.6} {r:>10.6} {c:>12.6}").unwrap();
    }
    out
}

/// Six decimals with trailing zeros dropped, so `13.000000` prints as `13`.
fn trim(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

pub fn sweep(sweep: &SweepResult) -> String {
    let mut out = String::new();
    writeln!(out, "sum of caps {:.6}", sweep.caps_sum).unwrap();
    write!(out, "{:>10}", "p_tot").unwrap();
    for s in &sweep.series {
        write!(out, " {:>22}", s.strategy.name()).unwrap();
    }
    out.push('\n');
    for (k, p) in sweep.p_tot_grid.iter().enumerate() {
        write!(out, "{p:>10.4}").unwrap();
        for s in &sweep.series {
            write!(out, " {:>10.3} J {:>8.3} P", s.objective[k], s.power_used[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn monte_carlo(summaries: &[MonteCarloSummary]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<22} {:>8} {:>8} {:>9}", "strategy", "median", "p90", "samples").unwrap();
    for s in summaries {
        writeln!(out, "{:<22} {:>8.4} {:>8.4} {:>9}", s.strategy.name(), s.median, s.p90, s.deviations.len()).unwrap();
    }
    out
}

pub fn snr(result: &SnrSensitivity) -> String {
    let mut out = String::new();
    write!(out, "{:>7}", "snr_db").unwrap();
    for (s, _) in &result.mean_objective {
        write!(out, " {:>22}", s.name()).unwrap();
    }
    out.push('\n');
    for (k, snr) in result.snr_grid_db.iter().enumerate() {
        write!(out, "{snr:>7.2}").unwrap();
        for (_, series) in &result.mean_objective {
            write!(out, " {:>22.4}", series[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn timing(rows: &[TimingRow], warm: &WarmStartResult) -> String {
    let mut out = String::new();
    writeln!(out, "{:>6} {:>12} {:>12} {:>10}", "n", "mean_ms", "std_ms", "iterations").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:>6} {:>12.4} {:>12.4} {:>10}",
            r.n,
            r.mean_seconds * 1e3,
            r.std_seconds * 1e3,
            r.iterations
        )
        .unwrap();
    }
    writeln!(
        out,
        "warm start over {} steps: mean iterations cold {:.2}, warm {:.2}",
        warm.cold_iterations.len(),
        warm.mean_cold(),
        warm.mean_warm()
    )
    .unwrap();
    out
}

pub fn hetero(demo: &HeterogeneousDemo, format: Format) -> String {
    if format == Format::Json {
        return json(demo);
    }
    let mut out = String::new();
    writeln!(out, "sum of caps {:.6}", demo.caps_sum).unwrap();
    for (budget, a) in [(demo.tight_budget, &demo.tight), (demo.slack_budget, &demo.slack)] {
        writeln!(
            out,
            "p_tot {budget}: regime {}, J = {:.6}, used {:.6}, unused {}",
            a.regime,
            a.objective,
            a.power_used,
            trim(budget - a.power_used)
        )
        .unwrap();
        for (i, (r, t)) in a.rates.iter().zip(demo.channels.targets()).enumerate() {
            writeln!(out, "  channel {i}: rate {r:.6} target {t}").unwrap();
        }
    }
    out
}

pub fn kkt(report: &KktReport, tolerance: f64, format: Format) -> String {
    if format == Format::Json {
        #[derive(Serialize)]
        struct Doc<'a> {
            certified: bool,
            tolerance: f64,
            report: &'a KktReport,
        }
        return json(&Doc {
            certified: report.is_certified(tolerance),
            tolerance,
            report,
        });
    }
    let mut out = String::new();
    let worst = report.stationarity_residuals.iter().copied().fold(0.0, f64::max);
    writeln!(out, "stationarity residual (max)  {worst:.3e}").unwrap();
    writeln!(out, "budget slackness gap         {:.3e}", report.budget_slackness_gap).unwrap();
    writeln!(out, "multiplier slackness gap     {:.3e}", report.multiplier_slackness_gap).unwrap();
    writeln!(out, "primal violation             {:.3e}", report.primal_violation).unwrap();
    writeln!(out, "max residual                 {:.3e}", report.max_residual).unwrap();
    writeln!(
        out,
        "certified                    {} (tolerance {tolerance:e})",
        if report.is_certified(tolerance) { "yes" } else { "no" }
    )
    .unwrap();
    out
}
