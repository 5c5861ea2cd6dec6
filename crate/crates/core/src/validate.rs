//! Self-check suites run by `pinchsim validate`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{ActivationMask, ChannelModel};
use crate::coalition::Game;
use crate::power::WaveguideProblem;
use crate::power_mo::{self, PolyblockOptions};
use crate::rates::{full_budget_interference, optimal_order, plan_for_orders, position_rates, AssignmentState};
use crate::scenario::{build_derived, sample_drop, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Sorted decoding order against every permutation, position by position.
pub fn permutation_suite(instances: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..instances {
        let k_count = rng.gen_range(1..=3);
        let users = rng.gen_range(1..=5 * k_count).max(k_count);
        let cfg = ScenarioConfig { waveguides: k_count, users, antennas: 10, ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).expect("valid config");
        let drop = sample_drop(&cfg, &mut rng);
        let waveguide_of: Vec<usize> =
            (0..users).map(|n| if n < k_count { n } else { rng.gen_range(0..k_count) }).collect();
        let assign = AssignmentState::new(k_count, waveguide_of).expect("indices in range");
        let mut mask = ActivationMask::new(k_count, cfg.antennas);
        for k in 0..k_count {
            for m in 0..cfg.antennas {
                mask.set(k, m, rng.gen_bool(0.3));
            }
            if mask.active_count(k) == 0 {
                mask.set(k, rng.gen_range(0..cfg.antennas), true);
            }
        }
        let ch = ChannelModel::pinching(&drop, &consts).channel(&mask);
        let interf = full_budget_interference(&ch, &assign, &consts);
        let sorted = optimal_order(&ch, &assign, &interf, &consts);
        for k in 0..k_count {
            let members = sorted.order(k).to_vec();
            if members.len() > 5 {
                continue;
            }
            let a = consts.tx_power / ch.active_count(k) as f64;
            let mut p: Vec<f64> = (0..members.len()).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            let c_sorted: Vec<f64> = sorted.constants_in_order(k).iter().map(|c| c / a).collect();
            let best = position_rates(&c_sorted, &p);
            for perm in permutations(&members) {
                let mut orders = sorted.orders().to_vec();
                orders[k] = perm;
                let plan = plan_for_orders(&ch, &assign, &interf, &consts, orders);
                let c: Vec<f64> = plan.constants_in_order(k).iter().map(|c| c / a).collect();
                let rates = position_rates(&c, &p);
                for (pos, (r, b)) in rates.iter().zip(&best).enumerate() {
                    if b - r < -1e-9 {
                        failures.push(format!("case {case}, waveguide {k}, position {pos}: {b} < {r}"));
                    }
                }
            }
        }
    }
    SuiteReport { name: "permutation", cases: instances, failures }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Two-user polyblock against a simplex grid search.
pub fn grid_search_suite(instances: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut cases = 0;
    while cases < instances {
        let mut c = [10f64.powf(rng.gen_range(-4.0..1.0)), 10f64.powf(rng.gen_range(-4.0..1.0))];
        c.sort_by(|a, b| b.total_cmp(a));
        let problem = WaveguideProblem::new(0, vec![0, 1], c.to_vec(), rng.gen_range(0.0..1.5)).expect("two users");
        let Ok(sol) = power_mo::solve(&problem, &PolyblockOptions::default()) else {
            continue;
        };
        cases += 1;
        let grid = (0..=1000)
            .map(|i| {
                let x = i as f64 / 1000.0;
                [x, 1.0 - x]
            })
            .filter(|p| problem.is_feasible(p, 1e-12))
            .map(|p| problem.objective(&p))
            .fold(f64::NEG_INFINITY, f64::max);
        if grid.is_finite() && (sol.solution.value - grid).abs() > 1e-2 {
            failures.push(format!("case {cases}: polyblock {} vs grid {grid}", sol.solution.value));
        }
        if sol.trace.iter().any(|s| s.lower > s.upper + 1e-12) {
            failures.push(format!("case {cases}: lower bound above upper bound"));
        }
    }
    SuiteReport { name: "grid-search", cases, failures }
}

/// Coalition game outputs are Nash stable and climb strictly.
pub fn stability_suite(drops: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let cfg = ScenarioConfig { waveguides: 2, antennas: 10, users: 6, ..ScenarioConfig::default() };
    let consts = build_derived(&cfg).expect("valid config");
    for case in 0..drops {
        let mut drop = sample_drop(&cfg, &mut rng);
        drop.user_xy.shuffle(&mut rng);
        let game = Game::new(&drop, &consts, cfg.min_rate);
        match game.solve() {
            Ok(state) => {
                if !game.is_nash_stable(&state).unwrap_or(false) {
                    failures.push(format!("drop {case}: final structure not Nash stable"));
                }
                if state.move_log.iter().any(|m| m.delta <= 0.0) {
                    failures.push(format!("drop {case}: non-improving move accepted"));
                }
            }
            Err(e) => failures.push(format!("drop {case}: {e}")),
        }
    }
    SuiteReport { name: "stability", cases: drops, failures }
}

pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![permutation_suite(50, seed), grid_search_suite(20, seed), stability_suite(10, seed)]
}
