mod common;

use rand::Rng;
use targetrate::model::{objective, objective_gradient, ChannelSet, Regime};
use targetrate::oracle::{certify, project_feasible, projected_gradient_default, stationarity_root};
use targetrate::solver::{solve, unclamped_power};

use common::{max_abs_diff, random_instance, rng};

#[test]
fn projected_gradient_agrees_with_closed_form() {
    let mut rng = rng(11);
    let mut regimes = [0usize; 2];
    for _ in 0..100 {
        let n = rng.gen_range(1..=16);
        let problem = random_instance(&mut rng, n, (0.1, 50.0), 6.0);
        let closed = solve(&problem).unwrap();
        let pg = projected_gradient_default(&problem).unwrap();
        assert!(pg.converged, "oracle stalled at residual {} after {} on {problem:?}\n{:?}\n{:?}", pg.residual, pg.iterations, closed.powers, pg.allocation.powers);
        let j = closed.objective;
        assert!((j - pg.allocation.objective).abs() <= 1e-5 * j.max(1.0), "{j} vs {}", pg.allocation.objective);
        assert!(max_abs_diff(&closed.powers, &pg.allocation.powers) <= 1e-4, "{problem:?}\n{:?}\n{:?}\n{} {}", closed.powers, pg.allocation.powers, pg.residual, pg.iterations);
        regimes[(closed.regime == Regime::CaseB) as usize] += 1;
    }
    assert!(regimes[0] > 0 && regimes[1] > 0, "{regimes:?}");
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = rng(12);
    let h = 1e-6;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let gains: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1f64..50.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..6.0)).collect();
        let ch = ChannelSet::new(gains, targets).unwrap();
        let p: Vec<f64> = ch.caps().iter().map(|c| c * rng.gen_range(0.05..0.95)).collect();
        let g = objective_gradient(&ch, &p).unwrap();
        for i in 0..n {
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (objective(&ch, &up).unwrap() - objective(&ch, &dn).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs(), "coordinate {i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn bisection_root_matches_lambert_form() {
    for a in [0.05, 0.3, 1.0, 4.0, 20.0, 100.0] {
        for t in [0.25, 1.0, 2.5, 4.0, 6.0] {
            for lambda in [1e-9, 1e-6, 1e-3, 0.1, 0.5, 1.0, 3.0, 10.0] {
                let root = stationarity_root(a, t, lambda).unwrap();
                let closed = unclamped_power(a, t, lambda).unwrap().max(0.0);
                assert!((root - closed).abs() <= 1e-9 * closed.max(1.0), "a={a} t={t} l={lambda}: {root} vs {closed}");
            }
        }
    }
}

#[test]
fn feasible_perturbations_do_not_improve() {
    let mut rng = rng(13);
    for _ in 0..20 {
        let n = rng.gen_range(2..=12);
        let problem = random_instance(&mut rng, n, (0.1, 50.0), 6.0);
        let best = solve(&problem).unwrap();
        assert!(certify(&problem, &best).unwrap().is_certified(1e-6));
        let j = objective(&problem.channels, &best.powers).unwrap();
        for _ in 0..50 {
            let mut d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = rng.gen_range(0.0..1e-3) / norm;
            let moved: Vec<f64> = best.powers.iter().zip(&mut d).map(|(p, x)| p + *x * scale).collect();
            let q = project_feasible(&problem, &moved).unwrap();
            assert!(objective(&problem.channels, &q).unwrap() >= j - 1e-9);
        }
    }
}
