//! Library results checked against independent computations done here with
//! plain floating point arithmetic.

#![allow(clippy::needless_range_loop)]

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pinchsim::channel::{ActivationMask, ChannelModel};
use pinchsim::coalition::{Game, Move};
use pinchsim::power::WaveguideProblem;
use pinchsim::power_mo::{self, PolyblockOptions};
use pinchsim::power_sca::{self, ScaOptions};
use pinchsim::rates::{
    full_budget_interference, optimal_order, rates_under_optimal_order, AssignmentState, PowerAllocation,
};
use pinchsim::scenario::{build_derived, sample_drop, DerivedConstants, ScenarioConfig, UserDrop};

const C: f64 = 299_792_458.0;

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `h_{k,n}` summed term by term with unreduced phases, as `(re, im)`.
fn direct_channel(drop: &UserDrop, fc: f64, n_eff: f64, mask: &ActivationMask) -> Vec<Vec<(f64, f64)>> {
    let lambda = C / fc;
    let lambda_g = lambda / n_eff;
    let eta = C / (4.0 * std::f64::consts::PI * fc);
    drop.waveguide_y
        .iter()
        .enumerate()
        .map(|(k, &yk)| {
            drop.user_xy
                .iter()
                .map(|&[ux, uy]| {
                    let mut h = (0.0, 0.0);
                    for (m, &xm) in drop.antenna_x.iter().enumerate() {
                        if !mask.is_active(k, m) {
                            continue;
                        }
                        let r = dist([ux, uy, 0.0], [xm, yk, drop.height]);
                        let l = (xm - drop.feed_x).abs();
                        let theta = 2.0 * std::f64::consts::PI * (r / lambda + l / lambda_g);
                        h.0 += eta * theta.cos() / r;
                        h.1 -= eta * theta.sin() / r;
                    }
                    h
                })
                .collect()
        })
        .collect()
}

fn random_mask(rng: &mut ChaCha8Rng, k: usize, m: usize, density: f64) -> ActivationMask {
    let mut mask = ActivationMask::new(k, m);
    for kk in 0..k {
        for mm in 0..m {
            mask.set(kk, mm, rng.gen_bool(density));
        }
        if mask.active_count(kk) == 0 {
            mask.set(kk, rng.gen_range(0..m), true);
        }
    }
    mask
}

/// Min-form SIC rate of every user, from gains alone, full budgets.
fn direct_rates(
    gains: &[Vec<f64>],
    active: &[usize],
    orders: &[Vec<usize>],
    p: &[f64],
    consts: &DerivedConstants,
) -> Vec<f64> {
    let users = gains[0].len();
    let a: Vec<f64> = active.iter().map(|&m| if m == 0 { 0.0 } else { consts.tx_power / m as f64 }).collect();
    let mut rates = vec![0.0; users];
    for (k, order) in orders.iter().enumerate() {
        for (i, &target) in order.iter().enumerate() {
            let later: f64 = order[i + 1..].iter().map(|&u| p[u]).sum();
            let mut best = f64::INFINITY;
            for &decoder in &order[i..] {
                let interference: f64 = (0..orders.len())
                    .filter(|&j| j != k && !orders[j].is_empty())
                    .map(|j| a[j] * gains[j][decoder])
                    .sum();
                let signal = a[k] * gains[k][decoder];
                let sinr = p[target] * signal / (signal * later + interference + consts.noise);
                best = best.min((1.0 + sinr).log2());
            }
            rates[target] = best;
        }
    }
    rates
}

/// Global optimum of one waveguide's split: fill tail sums greedily, each
/// as large as the QoS constraint of the previous position allows.
fn greedy_optimum(problem: &WaveguideProblem) -> Option<f64> {
    let g = problem.gamma_min();
    let c = &problem.inv_snr;
    let n = problem.len();
    let mut tails = vec![1.0; n + 1];
    tails[n] = 0.0;
    for i in 0..n - 1 {
        tails[i + 1] = ((tails[i] - g * c[i]) / (1.0 + g)).min(tails[i]);
    }
    if tails[n - 1] < g * c[n - 1] - 1e-15 || tails.iter().any(|&s| s < 0.0) {
        return None;
    }
    let p: Vec<f64> = (0..n).map(|i| tails[i] - tails[i + 1]).collect();
    Some(p.iter().enumerate().map(|(i, &pi)| (1.0 + pi / (tails[i + 1] + c[i])).log2()).sum())
}

fn problem_from_drop(rng: &mut ChaCha8Rng, users: usize, min_rate: f64) -> WaveguideProblem {
    let cfg = ScenarioConfig { waveguides: 1, users, antennas: 12, min_rate, ..ScenarioConfig::default() };
    let consts = build_derived(&cfg).unwrap();
    let drop = sample_drop(&cfg, rng);
    let mask = random_mask(rng, 1, cfg.antennas, 0.25);
    let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
    let assign = AssignmentState::new(1, vec![0; users]).unwrap();
    let interf = full_budget_interference(&ch, &assign, &consts);
    let plan = optimal_order(&ch, &assign, &interf, &consts);
    WaveguideProblem::from_plan(&plan, &ch, &consts, 0, min_rate).unwrap()
}

#[test]
fn constants_at_28_ghz() {
    let consts = build_derived(&ScenarioConfig::default()).unwrap();
    let lambda = C / 28e9;
    assert!((consts.lambda - lambda).abs() < 1e-18);
    assert!((consts.lambda_g - 7.648e-3).abs() < 1e-6);
    assert!((consts.eta - C / (4.0 * std::f64::consts::PI * 28e9)).abs() < 1e-18);
    assert!((consts.eta - 8.520e-4).abs() < 1e-7);
    assert!((consts.noise - 1e-12).abs() < 1e-27);
    assert!((consts.tx_power - 1e-2).abs() < 1e-17);
}

#[test]
fn waveguide_layouts() {
    let two = ScenarioConfig { waveguides: 2, width_y: 10.0, ..ScenarioConfig::default() };
    assert_eq!(two.waveguide_positions(), vec![-2.5, 2.5]);
    let three = ScenarioConfig { waveguides: 3, width_y: 8.0, ..ScenarioConfig::default() };
    let ys = three.waveguide_positions();
    assert!((ys[0] + 2.6667).abs() < 1e-4 && ys[1] == 0.0 && (ys[2] - 2.6667).abs() < 1e-4);
    let six = ScenarioConfig { antennas: 6, ..ScenarioConfig::default() };
    assert_eq!(six.antenna_positions(), vec![-5.0, -3.0, -1.0, 1.0, 3.0, 5.0]);
}

#[test]
fn channel_matches_term_by_term_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let cfg = ScenarioConfig { waveguides: rng.gen_range(1..=3), users: 6, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let drop = sample_drop(&cfg, &mut rng);
        let mask = random_mask(&mut rng, cfg.waveguides, cfg.antennas, 0.3);
        let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
        let direct = direct_channel(&drop, cfg.carrier_hz, cfg.n_eff, &mask);
        for k in 0..cfg.waveguides {
            for n in 0..cfg.users {
                let h = ch.h(k, n);
                let (re, im) = direct[k][n];
                let scale = (re * re + im * im).sqrt().max(consts.eta / 20.0);
                assert!((h.re - re).abs() < 1e-9 * scale && (h.im - im).abs() < 1e-9 * scale);
                assert!((ch.gain2(k, n) - (re * re + im * im)).abs() < 1e-8 * scale * scale);
            }
        }
    }
}

#[test]
fn single_antenna_below_user() {
    let cfg = ScenarioConfig { waveguides: 1, users: 1, ..ScenarioConfig::default() };
    let consts = build_derived(&cfg).unwrap();
    let drop = UserDrop::with_users(&cfg, vec![[cfg.antenna_positions()[7], 0.0]]);
    let mut mask = ActivationMask::new(1, cfg.antennas);
    mask.set(0, 7, true);
    let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
    assert!((ch.gain2(0, 0) - 8.07e-8).abs() < 0.01e-8);
    assert!((ch.gain2(0, 0) - consts.eta.powi(2) / 9.0).abs() < 1e-22);
    // Full power on that antenna: SNR = 0.01 · η²/9 / 1e-12.
    let assign = AssignmentState::new(1, vec![0]).unwrap();
    let interf = full_budget_interference(&ch, &assign, &consts);
    let plan = optimal_order(&ch, &assign, &interf, &consts);
    let report = rates_under_optimal_order(&plan, &PowerAllocation::equal_split(&assign), &ch, &assign, &consts, 0.1);
    let snr = 0.01 * consts.eta.powi(2) / 9.0 / 1e-12;
    assert!((report.total - (1.0 + snr).log2()).abs() < 1e-12);
    assert!((report.total - 9.658).abs() < 1e-3);
}

#[test]
fn closed_form_rates_match_direct_min_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let k_count = rng.gen_range(1..=3);
        let users = rng.gen_range(k_count..=4 * k_count);
        let cfg = ScenarioConfig { waveguides: k_count, users, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let drop = sample_drop(&cfg, &mut rng);
        let mask = random_mask(&mut rng, k_count, cfg.antennas, 0.2);
        let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
        let waveguide_of = (0..users).map(|n| if n < k_count { n } else { rng.gen_range(0..k_count) }).collect();
        let assign = AssignmentState::new(k_count, waveguide_of).unwrap();
        let interf = full_budget_interference(&ch, &assign, &consts);
        let plan = optimal_order(&ch, &assign, &interf, &consts);
        let mut p = vec![0.0; users];
        for k in 0..k_count {
            let members = assign.coalition(k);
            let w: Vec<f64> = members.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (&n, wi) in members.iter().zip(&w) {
                p[n] = wi / total;
            }
        }
        let report = rates_under_optimal_order(&plan, &PowerAllocation::new(p.clone()), &ch, &assign, &consts, 0.1);
        let gains: Vec<Vec<f64>> = (0..k_count).map(|k| (0..users).map(|n| ch.gain2(k, n)).collect()).collect();
        let active: Vec<usize> = (0..k_count).map(|k| mask.active_count(k)).collect();
        let direct = direct_rates(&gains, &active, plan.orders(), &p, &consts);
        for (a, b) in report.per_user.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn sorted_order_beats_every_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let cfg = ScenarioConfig { waveguides: 2, users: 6, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let drop = sample_drop(&cfg, &mut rng);
        let mask = random_mask(&mut rng, 2, cfg.antennas, 0.2);
        let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
        let assign = AssignmentState::new(2, vec![0, 0, 0, 0, 1, 1]).unwrap();
        let interf = full_budget_interference(&ch, &assign, &consts);
        let plan = optimal_order(&ch, &assign, &interf, &consts);
        let gains: Vec<Vec<f64>> = (0..2).map(|k| (0..6).map(|n| ch.gain2(k, n)).collect()).collect();
        let active = [mask.active_count(0), mask.active_count(1)];
        let p = [0.4, 0.3, 0.2, 0.1, 0.6, 0.4];
        let position_powers = [0.4, 0.3, 0.2, 0.1];
        let sorted = plan.order(0).to_vec();
        let mut pp = p;
        for (&n, &x) in sorted.iter().zip(&position_powers) {
            pp[n] = x;
        }
        let best: f64 = direct_rates(&gains, &active, plan.orders(), &pp, &consts)[..4].iter().sum();
        for perm in (0..4).permutations(4) {
            let mut orders = plan.orders().to_vec();
            orders[0] = perm.clone();
            let mut q = p;
            for (&n, &x) in perm.iter().zip(&position_powers) {
                q[n] = x;
            }
            let total: f64 = direct_rates(&gains, &active, &orders, &q, &consts)[..4].iter().sum();
            assert!(best >= total - 1e-9, "{best} < {total} for {perm:?}");
        }
    }
}

#[test]
fn polyblock_reaches_greedy_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let options = PolyblockOptions { epsilon: 1e-7, max_iter: 20_000 };
    let mut solved = 0;
    while solved < 30 {
        let users = rng.gen_range(1..=3);
        let min_rate = rng.gen_range(0.0..1.0);
        let problem = problem_from_drop(&mut rng, users, min_rate);
        let Some(opt) = greedy_optimum(&problem) else {
            assert!(power_mo::solve(&problem, &options).is_err());
            continue;
        };
        solved += 1;
        let sol = power_mo::solve(&problem, &options).unwrap();
        assert!(sol.solution.converged);
        assert!(sol.solution.value <= opt + 1e-9);
        assert!(sol.solution.value >= opt - 1e-7, "{} vs {opt}", sol.solution.value);
        assert!(problem.is_feasible(&sol.solution.p, 1e-12));
    }
}

#[test]
fn polyblock_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..20 {
        let min_rate = rng.gen_range(0.0..2.0);
        let problem = problem_from_drop(&mut rng, 2, min_rate);
        let grid = (0..=1000)
            .map(|i| [i as f64 / 1000.0, 1.0 - i as f64 / 1000.0])
            .filter(|p| problem.is_feasible(p, 0.0))
            .map(|p| problem.objective(&p))
            .fold(f64::NEG_INFINITY, f64::max);
        match power_mo::solve(&problem, &PolyblockOptions::default()) {
            Ok(sol) => assert!((sol.solution.value - grid).abs() <= 1e-2),
            Err(_) => assert!(grid == f64::NEG_INFINITY),
        }
    }
}

#[test]
fn impossible_target_is_infeasible() {
    let problem = WaveguideProblem::new(0, vec![0, 1], vec![0.5, 1e-3], 6.0).unwrap();
    assert!(matches!(
        power_mo::solve(&problem, &PolyblockOptions::default()),
        Err(pinchsim::PowerError::InfeasibleQos { .. })
    ));
    assert!(matches!(
        power_sca::solve(&problem, &ScaOptions::default()),
        Err(pinchsim::PowerError::InfeasibleQos { .. })
    ));
}

#[test]
fn sca_close_to_polyblock() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut solved = 0;
    while solved < 30 {
        let users = rng.gen_range(1..=3);
        let min_rate = rng.gen_range(0.0..0.8);
        let problem = problem_from_drop(&mut rng, users, min_rate);
        let Ok(mo) = power_mo::solve(&problem, &PolyblockOptions { epsilon: 1e-8, max_iter: 20_000 }) else {
            continue;
        };
        solved += 1;
        let sca = power_sca::solve(&problem, &ScaOptions::default()).unwrap();
        assert!(sca.solution.value <= mo.solution.value + 1e-6);
        assert!(sca.solution.value >= 0.98 * mo.solution.value);
        if users == 1 {
            assert_eq!(sca.solution.p, mo.solution.p);
        }
    }
}

#[test]
fn reverting_last_move_breaks_stability() {
    let cfg = ScenarioConfig::default();
    let consts = build_derived(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut checked = 0;
    for _ in 0..10 {
        let drop = sample_drop(&cfg, &mut rng);
        let game = Game::new(&drop, &consts, cfg.min_rate);
        let final_state = game.solve().unwrap();
        assert!(game.is_nash_stable(&final_state).unwrap());
        let Some((last, earlier)) = final_state.move_log.split_last() else {
            continue;
        };
        // Replay every move but the last one.
        let mut state = game.initialize().unwrap();
        for record in earlier {
            match record.kind {
                Move::User { user, to, .. } => {
                    let (assign, mask) = game.moved(&state, user, to);
                    state.assign = assign;
                    state.mask = mask;
                }
                Move::Activate { waveguide, antenna } => state.mask.set(waveguide, antenna, true),
                Move::Deactivate { waveguide, antenna } => state.mask.set(waveguide, antenna, false),
            }
        }
        state.value = game.value(&state.assign, &state.mask).unwrap();
        assert!((state.value - (last.value - last.delta)).abs() < 1e-9);
        assert!(!game.is_nash_stable(&state).unwrap());
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn row_update_matches_full_recompute() {
    let cfg = ScenarioConfig { waveguides: 3, ..ScenarioConfig::default() };
    let consts = build_derived(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let drop = sample_drop(&cfg, &mut rng);
    let model = ChannelModel::pinching(&drop, &consts);
    let mut mask = random_mask(&mut rng, 3, cfg.antennas, 0.3);
    let mut ch = model.channel(&mask);
    let before = ch.clone();
    mask.set(1, 4, !mask.is_active(1, 4));
    model.update_row(&mut ch, 1, &mask);
    assert_eq!(ch, model.channel(&mask));
    for n in 0..cfg.users {
        assert_eq!(ch.h(0, n), before.h(0, n));
        assert_eq!(ch.h(2, n), before.h(2, n));
    }
}
