#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use targetrate::baselines::{proportional_fair, uniform, waterfill};
use targetrate::lambertw::lambert_w0;
use targetrate::model::{cap, objective, rate, second_derivative_sign, ChannelSet, Problem, Regime, LN_2};
use targetrate::oracle::certify;
use targetrate::solver::{allocate_weighted, inactivity_threshold, solve, total_power, unclamped_power};

fn gain() -> impl Strategy<Value = f64> {
    (-2.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

/// Random channels with a budget between 1% and 200% of the caps sum.
fn instance(max_n: usize) -> impl Strategy<Value = Problem> {
    (1..=max_n)
        .prop_flat_map(|n| (prop::collection::vec(gain(), n), prop::collection::vec(0.0f64..6.0, n), 0.01f64..2.0))
        .prop_map(|(gains, targets, frac)| {
            let channels = ChannelSet::new(gains, targets).unwrap();
            let p_tot = (frac * channels.caps_sum()).max(1e-3);
            Problem::new(channels, p_tot).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solve_respects_targets_caps_and_budget(problem in instance(32)) {
        let alloc = solve(&problem).unwrap();
        let ch = &problem.channels;
        let caps = ch.caps();
        for i in 0..ch.len() {
            prop_assert!(alloc.rates[i] <= ch.targets()[i] + 1e-9);
            prop_assert!(alloc.powers[i] >= 0.0);
            prop_assert!(alloc.powers[i] <= caps[i] + 1e-12);
        }
        let covered = problem.p_tot >= ch.caps_sum();
        prop_assert_eq!(covered, alloc.regime == Regime::CaseA);
        prop_assert_eq!(covered, alloc.objective == 0.0);
        prop_assert_eq!(covered, alloc.lambda == 0.0);
        if covered {
            prop_assert_eq!(&alloc.powers, &caps);
        } else {
            prop_assert!((alloc.power_used - problem.p_tot).abs() <= problem.epsilon);
        }
    }

    #[test]
    fn channels_past_threshold_get_nothing(problem in instance(32)) {
        let alloc = solve(&problem).unwrap();
        let ch = &problem.channels;
        for i in 0..ch.len() {
            if alloc.lambda > 0.0 && alloc.lambda >= inactivity_threshold(ch.gains()[i], ch.targets()[i], 1.0) {
                prop_assert_eq!(alloc.powers[i], 0.0);
            }
        }
    }

    #[test]
    fn solve_is_kkt_certified(problem in instance(16)) {
        let alloc = solve(&problem).unwrap();
        let report = certify(&problem, &alloc).unwrap();
        prop_assert!(report.max_residual <= 1e-6, "{:?}", report);
    }

    #[test]
    fn dual_curve_is_nonincreasing(problem in instance(32), lo in -8.0f64..0.0, span in 0.5f64..8.0) {
        let grid: Vec<f64> = (0..50).map(|k| 10f64.powf(lo + span * k as f64 / 49.0)).collect();
        let s: Vec<f64> = grid.iter().map(|&l| total_power(&problem.channels, l).unwrap()).collect();
        for w in s.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn objective_nonincreasing_in_budget(problem in instance(16), mut fracs in prop::collection::vec(0.01f64..2.0, 2..12)) {
        fracs.sort_by(f64::total_cmp);
        let caps_sum = problem.channels.caps_sum();
        let mut prev = f64::INFINITY;
        for f in fracs {
            let p = Problem::new(problem.channels.clone(), (f * caps_sum).max(1e-3)).unwrap();
            let j = solve(&p).unwrap().objective;
            prop_assert!(j <= prev + 1e-9 * prev.clamp(1.0, 1e9), "{} after {}", j, prev);
            if p.p_tot >= caps_sum {
                prop_assert_eq!(j, 0.0);
            }
            prev = j;
        }
    }

    #[test]
    fn raising_a_target_never_helps(problem in instance(16), pick in any::<prop::sample::Index>(), bump in 0.0f64..2.0) {
        let base = solve(&problem).unwrap().objective;
        let mut targets = problem.channels.targets().to_vec();
        let i = pick.index(targets.len());
        targets[i] += bump;
        let raised = ChannelSet::new(problem.channels.gains().to_vec(), targets).unwrap();
        let j = solve(&Problem::new(raised, problem.p_tot).unwrap()).unwrap().objective;
        prop_assert!(j >= base - 1e-9 * base.max(1.0), "{} < {}", j, base);
    }

    #[test]
    fn equal_gains_split_evenly(n in 1usize..32, a in gain(), t in 0.0f64..6.0, frac in 0.01f64..2.0) {
        let channels = ChannelSet::uniform_target(vec![a; n], t).unwrap();
        let c = cap(a, t).unwrap();
        let p_tot = (frac * c * n as f64).max(1e-3);
        let alloc = solve(&Problem::new(channels, p_tot).unwrap()).unwrap();
        let expected = (p_tot / n as f64).min(c);
        for p in &alloc.powers {
            prop_assert!((p - expected).abs() <= 1e-10 * expected.max(1.0), "{} vs {}", p, expected);
        }
    }

    #[test]
    fn unit_weights_are_bit_identical(problem in instance(32)) {
        let plain = solve(&problem).unwrap();
        let n = problem.channels.len();
        let weighted = Problem::new(problem.channels.clone().with_weights(vec![1.0; n]).unwrap(), problem.p_tot).unwrap();
        let w = allocate_weighted(&weighted).unwrap();
        prop_assert_eq!(plain.powers, w.powers);
        prop_assert_eq!(plain.lambda.to_bits(), w.lambda.to_bits());
        prop_assert_eq!(plain.objective.to_bits(), w.objective.to_bits());
    }

    #[test]
    fn small_lambda_approaches_cap(a in gain(), t in 0.1f64..6.0, e in -14.0f64..-8.0) {
        let lambda = 10f64.powf(e);
        let c = cap(a, t).unwrap();
        let approx = c - lambda * LN_2 * LN_2 * (2.0 * t).exp2() / (2.0 * a * a);
        let p = unclamped_power(a, t, lambda).unwrap();
        prop_assert!((p - approx).abs() <= 1e-6 * c, "{} vs {}", p, approx);
    }

    #[test]
    fn cap_inverts_rate(a in 0.01f64..100.0, t in 0.0f64..10.0) {
        let r = rate(a, cap(a, t).unwrap()).unwrap();
        prop_assert!((r - t).abs() <= 1e-12 * t.max(1.0));
    }

    #[test]
    fn terms_are_convex_below_cap(a in gain(), t in 0.0f64..6.0, u in 0.0f64..=1.0) {
        let p = u * cap(a, t).unwrap();
        prop_assert_ne!(second_derivative_sign(a, t, p).unwrap(), std::cmp::Ordering::Less);
    }

    #[test]
    fn objective_is_nonnegative(problem in instance(16), us in prop::collection::vec(0.0f64..3.0, 32)) {
        let caps = problem.channels.caps();
        let powers: Vec<f64> = caps.iter().zip(&us).map(|(c, u)| c * u).collect();
        let j = objective(&problem.channels, &powers).unwrap();
        prop_assert!(j >= 0.0);
        prop_assert!(objective(&problem.channels, &caps).unwrap() <= 1e-24);
    }

    #[test]
    fn lambert_round_trip_and_order(e1 in -12.0f64..12.0, e2 in -12.0f64..12.0) {
        let (w1, w2) = (10f64.powf(e1), 10f64.powf(e2));
        let x1 = lambert_w0(w1).unwrap();
        prop_assert!((x1 * x1.exp() - w1).abs() / w1.max(1.0) <= 1e-12);
        if w1 < w2 {
            prop_assert!(x1 < lambert_w0(w2).unwrap());
        }
    }

    #[test]
    fn waterfilling_maximizes_sum_rate(problem in instance(32)) {
        let wf = waterfill(&problem.channels, problem.p_tot).unwrap();
        let others = [
            solve(&problem).unwrap(),
            uniform(&problem.channels, problem.p_tot).unwrap(),
            proportional_fair(&problem.channels, problem.p_tot).unwrap(),
        ];
        for o in &others {
            prop_assert!(wf.sum_rate() >= o.sum_rate() - 1e-9 * wf.sum_rate().max(1.0));
        }
        for b in [&wf, &others[1], &others[2]] {
            prop_assert!((b.power_used - problem.p_tot).abs() <= 1e-10 * problem.p_tot.max(1.0));
        }
    }

    #[test]
    fn target_rate_minimizes_objective(problem in instance(32)) {
        let j = solve(&problem).unwrap().objective;
        for b in [
            waterfill(&problem.channels, problem.p_tot).unwrap(),
            uniform(&problem.channels, problem.p_tot).unwrap(),
            proportional_fair(&problem.channels, problem.p_tot).unwrap(),
        ] {
            prop_assert!(j <= b.objective + 1e-9 * b.objective.max(1.0), "{} > {}", j, b.objective);
        }
    }

    #[test]
    fn waterfilling_shares_one_level(problem in instance(32)) {
        let wf = waterfill(&problem.channels, problem.p_tot).unwrap();
        let levels: Vec<f64> = wf.powers.iter().zip(problem.channels.gains())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, a)| p + 1.0 / a)
            .collect();
        for l in &levels {
            prop_assert!((l - levels[0]).abs() <= 1e-10 * levels[0].max(1.0));
        }
    }
}
