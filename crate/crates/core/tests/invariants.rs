#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pinchsim::baselines::SchemeId;
use pinchsim::channel::{ActivationMask, ChannelModel};
use pinchsim::coalition::Game;
use pinchsim::harness::{aggregate, TrialRecord};
use pinchsim::power::WaveguideProblem;
use pinchsim::power_mo::{self, PolyblockOptions};
use pinchsim::power_sca::{self, ScaOptions};
use pinchsim::rates::{
    full_budget_interference, interference, optimal_order, position_rates, rates_min_form, rates_under_optimal_order,
    AssignmentState, PowerAllocation,
};
use pinchsim::scenario::{build_derived, sample_drop, ScenarioConfig, UserDrop};

fn mask_from_seed(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ActivationMask {
    let mut mask = ActivationMask::new(k, m);
    for kk in 0..k {
        for mm in 0..m {
            mask.set(kk, mm, rng.gen_bool(0.25));
        }
        if mask.active_count(kk) == 0 {
            mask.set(kk, 0, true);
        }
    }
    mask
}

/// Decreasing SIC constants, as produced by an optimal order.
fn constants() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..1.0, 1..=3).prop_map(|e| {
        let mut c: Vec<f64> = e.into_iter().map(|x| 10f64.powf(x)).collect();
        c.sort_by(|a, b| b.total_cmp(a));
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moving_the_feed_only_rotates_phases(seed in any::<u64>(), shift in 0.0f64..30.0) {
        let cfg = ScenarioConfig { users: 4, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drop = sample_drop(&cfg, &mut rng);
        let mut mask = ActivationMask::new(cfg.waveguides, cfg.antennas);
        // Feed left of every antenna in both cases, one antenna per waveguide.
        mask.set(0, rng.gen_range(0..cfg.antennas), true);
        mask.set(1, rng.gen_range(0..cfg.antennas), true);
        let far = UserDrop { feed_x: -20.0, ..drop.clone() };
        let farther = UserDrop { feed_x: -20.0 - shift, ..drop };
        let a = ChannelModel::pinching(&far, &consts).channel(&mask);
        let b = ChannelModel::pinching(&farther, &consts).channel(&mask);
        for k in 0..cfg.waveguides {
            for n in 0..cfg.users {
                let (x, y) = (a.gain2(k, n), b.gain2(k, n));
                prop_assert!((x - y).abs() <= 1e-9 * x);
            }
        }
    }

    #[test]
    fn channel_magnitude_bounded_by_sum_of_amplitudes(seed in any::<u64>()) {
        let cfg = ScenarioConfig { users: 5, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drop = sample_drop(&cfg, &mut rng);
        let mask = mask_from_seed(&mut rng, cfg.waveguides, cfg.antennas);
        let model = ChannelModel::pinching(&drop, &consts);
        let ch = model.channel(&mask);
        for k in 0..cfg.waveguides {
            for n in 0..cfg.users {
                let bound: f64 = mask.active(k).map(|m| model.contribution(k, m, n).norm()).sum();
                prop_assert!(ch.h(k, n).norm() <= bound * (1.0 + 1e-12));
                prop_assert!(bound <= mask.active_count(k) as f64 * consts.eta / cfg.height * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn position_rate_monotone_in_own_power(c in constants(), seed in any::<u64>(), bump in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = c.len();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let i = rng.gen_range(0..n);
        let mut q = p.clone();
        q[i] += bump;
        let (rp, rq) = (position_rates(&c, &p), position_rates(&c, &q));
        prop_assert!(rq[i] >= rp[i]);
        for j in 0..i {
            prop_assert!(rq[j] <= rp[j] + 1e-15);
        }
        for j in i + 1..n {
            prop_assert_eq!(rq[j], rp[j]);
        }
    }

    #[test]
    fn order_and_interference_ignore_the_split(seed in any::<u64>()) {
        let cfg = ScenarioConfig { waveguides: 3, users: 7, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drop = sample_drop(&cfg, &mut rng);
        let mask = mask_from_seed(&mut rng, 3, cfg.antennas);
        let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
        let assign = AssignmentState::new(3, (0..7).map(|n| n % 3).collect()).unwrap();
        let reference = full_budget_interference(&ch, &assign, &consts);
        let mut p = vec![0.0; 7];
        for k in 0..3 {
            let members = assign.coalition(k);
            let w: Vec<f64> = members.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            for (&n, x) in members.iter().zip(w) {
                p[n] = x / s;
            }
        }
        let interf = interference(&ch, &assign, &PowerAllocation::new(p), &consts);
        for k in 0..3 {
            for n in 0..7 {
                prop_assert!((interf.get(k, n) - reference.get(k, n)).abs() <= 1e-12 * reference.get(k, n));
            }
        }
        let (a, b) = (optimal_order(&ch, &assign, &interf, &consts), optimal_order(&ch, &assign, &reference, &consts));
        prop_assert_eq!(a.orders(), b.orders());
    }

    #[test]
    fn closed_form_equals_min_form(seed in any::<u64>()) {
        let cfg = ScenarioConfig { waveguides: 2, users: 6, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drop = sample_drop(&cfg, &mut rng);
        let mask = mask_from_seed(&mut rng, 2, cfg.antennas);
        let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
        let assign = AssignmentState::new(2, (0..6).map(|_| rng.gen_range(0..2)).collect()).unwrap();
        let interf = full_budget_interference(&ch, &assign, &consts);
        let plan = optimal_order(&ch, &assign, &interf, &consts);
        let pa = PowerAllocation::equal_split(&assign);
        let a = rates_under_optimal_order(&plan, &pa, &ch, &assign, &consts, 0.1);
        let b = rates_min_form(&plan, &pa, &ch, &assign, &interf, &consts, 0.1);
        for (x, y) in a.per_user.iter().zip(&b.per_user) {
            prop_assert!((x - y).abs() <= 1e-12 * y.max(1e-300));
        }
    }

    #[test]
    fn polyblock_bounds_sandwich_and_vertex_growth(c in constants(), min_rate in 0.0f64..1.5) {
        let problem = WaveguideProblem::new(0, (0..c.len()).collect(), c.clone(), min_rate).unwrap();
        if let Ok(sol) = power_mo::solve(&problem, &PolyblockOptions::default()) {
            let n = c.len();
            for step in &sol.trace {
                prop_assert!(step.lower <= step.upper);
                prop_assert!(step.vertex_count <= 1 + step.iteration * (n - 1).max(1));
            }
            for w in sol.trace.windows(2) {
                prop_assert!(w[1].upper <= w[0].upper + 1e-12);
                prop_assert!(w[1].lower >= w[0].lower);
            }
            prop_assert!(problem.is_feasible(&sol.solution.p, 1e-12));
            prop_assert!(sol.solution.value <= sol.upper_bound);
        }
    }

    #[test]
    fn sca_output_feasible_and_ascending_once_feasible(c in constants(), min_rate in 0.0f64..1.5) {
        let problem = WaveguideProblem::new(0, (0..c.len()).collect(), c, min_rate).unwrap();
        if let Ok(sol) = power_sca::solve(&problem, &ScaOptions::default()) {
            prop_assert!(problem.is_feasible(&sol.solution.p, 1e-9));
            let first = sol.trace.iter().position(|it| problem.is_feasible(&it.p, 1e-12));
            if let Some(first) = first {
                for w in sol.trace[first..].windows(2) {
                    prop_assert!(w[1].value >= w[0].value);
                }
            }
        }
    }

    #[test]
    fn coalition_game_keeps_a_partition_and_climbs(seed in any::<u64>()) {
        let cfg = ScenarioConfig { waveguides: 2, antennas: 10, users: 5, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let drop = sample_drop(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let game = Game::new(&drop, &consts, cfg.min_rate);
        let state = game.solve().unwrap();
        let mut previous = game.initialize().unwrap().value;
        for record in &state.move_log {
            prop_assert!(record.value > previous);
            previous = record.value;
        }
        let alpha = state.assign.alpha_matrix();
        for n in 0..cfg.users {
            prop_assert_eq!((0..cfg.waveguides).filter(|&k| alpha[k][n]).count(), 1);
        }
        for k in 0..cfg.waveguides {
            prop_assert_eq!(state.assign.is_serving(k), state.mask.active_count(k) > 0);
        }
        prop_assert!((state.value - game.value(&state.assign, &state.mask).unwrap()).abs() <= 1e-12 * state.value);
    }

    #[test]
    fn aggregation_ignores_record_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records: Vec<TrialRecord> = (0..30)
            .map(|i| TrialRecord {
                trial: i / 6,
                scheme: SchemeId::ALL[i % 3],
                sweep_name: "pt".into(),
                sweep_value: [-5.0, 0.0][i % 2],
                sum_rate: rng.gen_range(0.0..20.0),
                outage_users: rng.gen_range(0..8),
                n_users: 8,
                cg_cycles: 0,
                pa_iterations: 0,
                wall_ms: 0.0,
            })
            .collect();
        let before = aggregate(&records).unwrap();
        for i in (1..records.len()).rev() {
            records.swap(i, rng.gen_range(0..=i));
        }
        let after = aggregate(&records).unwrap();
        prop_assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            prop_assert_eq!(a.scheme, b.scheme);
            prop_assert_eq!(a.sweep_value, b.sweep_value);
            prop_assert!((a.mean_sum_rate - b.mean_sum_rate).abs() <= 1e-12 * a.mean_sum_rate.max(1.0));
            prop_assert_eq!(a.outage_probability, b.outage_probability);
        }
    }
}
