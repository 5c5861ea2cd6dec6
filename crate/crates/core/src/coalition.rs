//! Coalition-formation game for waveguide assignment and antenna activation.
//!
//! Users are players choosing a waveguide; antennas are players choosing to
//! be on or off. The coalition value is the system sum rate, so every move
//! is judged by its effect on all users, including the interference it
//! causes on other waveguides. A move is accepted only if it strictly raises
//! the value, which makes the loop terminate in a Nash-stable structure.

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::channel::{ActivationMask, ChannelMatrix, ChannelModel};
use crate::power::{PowerError, WaveguideProblem};
use crate::power_mo::{self, PolyblockOptions};
use crate::power_sca::{self, ScaOptions};
use crate::rates::{
    full_budget_interference, optimal_order, rates_under_optimal_order, AssignmentState, DecodingPlan, PowerAllocation,
    RateReport,
};
use crate::scenario::{DerivedConstants, UserDrop};

/// A candidate must beat the current value by more than this (relative to
/// `max(1, value)`) to count as a strict improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoalitionError {
    #[error("coalition game exceeded {cap} cycles without settling")]
    CycleCap { cap: usize },
    #[error("last active antenna on waveguide {waveguide} cannot be switched off")]
    LastAntenna { waveguide: usize },
    #[error("antenna toggle on idle waveguide {waveguide}")]
    IdleWaveguide { waveguide: usize },
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// Power allocation solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaSolver {
    Mo,
    Sca,
}

/// How power is split when a structure is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaPolicy {
    #[default]
    EqualSplit,
    Optimized(PaSolver),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Move {
    User { user: usize, from: usize, to: usize },
    Activate { waveguide: usize, antenna: usize },
    Deactivate { waveguide: usize, antenna: usize },
}

/// One accepted move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub cycle: usize,
    #[serde(rename = "move")]
    pub kind: Move,
    /// Coalition value after the move.
    pub value: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub assign: AssignmentState,
    pub mask: ActivationMask,
    pub value: f64,
    pub cycle_count: usize,
    pub move_log: Vec<MoveRecord>,
    /// Candidate evaluations in each completed cycle.
    pub evaluations: Vec<usize>,
}

impl GameState {
    pub fn total_evaluations(&self) -> usize {
        self.evaluations.iter().sum()
    }
}

/// Channels, decoding plan, allocation and rates of one structure.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub channel: ChannelMatrix,
    pub plan: DecodingPlan,
    pub pa: PowerAllocation,
    pub report: RateReport,
    /// `false` if some waveguide could not meet QoS and was solved without it.
    pub qos_met: bool,
    pub pa_iterations: usize,
}

/// Everything fixed for one drop.
#[derive(Debug, Clone)]
pub struct Game<'a> {
    pub model: ChannelModel,
    pub drop: &'a UserDrop,
    pub consts: &'a DerivedConstants,
    pub min_rate: f64,
    pub policy: PaPolicy,
    pub mo: PolyblockOptions,
    pub sca: ScaOptions,
}

impl<'a> Game<'a> {
    pub fn new(drop: &'a UserDrop, consts: &'a DerivedConstants, min_rate: f64) -> Self {
        Self {
            model: ChannelModel::pinching(drop, consts),
            drop,
            consts,
            min_rate,
            policy: PaPolicy::EqualSplit,
            mo: PolyblockOptions::default(),
            sca: ScaOptions::default(),
        }
    }

    pub fn with_policy(mut self, policy: PaPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Full evaluation of a structure under `policy`.
    pub fn evaluate_with(
        &self,
        assign: &AssignmentState,
        mask: &ActivationMask,
        policy: PaPolicy,
    ) -> Result<Evaluation, PowerError> {
        let channel = self.model.channel(mask);
        let interf = full_budget_interference(&channel, assign, self.consts);
        let plan = optimal_order(&channel, assign, &interf, self.consts);
        let mut pa = PowerAllocation::equal_split(assign);
        let mut qos_met = true;
        let mut pa_iterations = 0;
        if let PaPolicy::Optimized(solver) = policy {
            for k in 0..assign.waveguides() {
                if plan.order(k).is_empty() {
                    continue;
                }
                let problem = WaveguideProblem::from_plan(&plan, &channel, self.consts, k, self.min_rate)?;
                let (p, iterations, met) = solve_waveguide(&problem, solver, &self.mo, &self.sca)?;
                problem.apply(&p, &mut pa);
                qos_met &= met;
                pa_iterations += iterations;
            }
        }
        let report = rates_under_optimal_order(&plan, &pa, &channel, assign, self.consts, self.min_rate);
        Ok(Evaluation { channel, plan, pa, report, qos_met, pa_iterations })
    }

    /// Coalition value of a structure under the game's policy.
    pub fn value(&self, assign: &AssignmentState, mask: &ActivationMask) -> Result<f64, PowerError> {
        if self.policy == PaPolicy::EqualSplit {
            return Ok(self.equal_split_value(assign, mask));
        }
        self.evaluate_with(assign, mask, self.policy).map(|e| e.report.total)
    }

    fn equal_split_value(&self, assign: &AssignmentState, mask: &ActivationMask) -> f64 {
        let channel = self.model.channel(mask);
        let interf = full_budget_interference(&channel, assign, self.consts);
        let plan = optimal_order(&channel, assign, &interf, self.consts);
        let pa = PowerAllocation::equal_split(assign);
        rates_under_optimal_order(&plan, &pa, &channel, assign, self.consts, self.min_rate).total
    }

    /// Nearest waveguide by `|y_n - y_k|` (lower index on ties) and nearest
    /// antenna on it for every user.
    pub fn initialize(&self) -> Result<GameState, PowerError> {
        let k_count = self.drop.waveguides();
        let waveguide_of: Vec<usize> =
            self.drop.user_xy.iter().map(|&[_, y]| nearest(&self.drop.waveguide_y, y)).collect();
        let assign = AssignmentState::new(k_count, waveguide_of).expect("nearest waveguide index in range");
        let mut mask = ActivationMask::new(k_count, self.drop.antennas());
        for n in 0..self.drop.users() {
            mask.set(assign.waveguide_of(n), self.nearest_antenna(n), true);
        }
        let value = self.value(&assign, &mask)?;
        Ok(GameState { assign, mask, value, cycle_count: 0, move_log: Vec::new(), evaluations: Vec::new() })
    }

    fn nearest_antenna(&self, n: usize) -> usize {
        nearest(&self.drop.antenna_x, self.drop.user_xy[n][0])
    }

    fn improves(candidate: f64, current: f64) -> bool {
        candidate > current + IMPROVEMENT_TOL * current.abs().max(1.0)
    }

    /// Structure after moving user `n` to waveguide `to`. The source waveguide
    /// switches off when it empties; an idle target switches on the user's
    /// nearest antenna.
    pub fn moved(&self, state: &GameState, n: usize, to: usize) -> (AssignmentState, ActivationMask) {
        let from = state.assign.waveguide_of(n);
        let mut assign = state.assign.clone();
        let mut mask = state.mask.clone();
        assign.move_user(n, to);
        if !assign.is_serving(from) {
            mask.clear_waveguide(from);
        }
        if mask.active_count(to) == 0 {
            mask.set(to, self.nearest_antenna(n), true);
        }
        (assign, mask)
    }

    /// Tries moving user `n` to waveguide `to`; applies it if the value
    /// strictly rises.
    pub fn try_user_move(&self, state: &mut GameState, n: usize, to: usize) -> Result<bool, PowerError> {
        let from = state.assign.waveguide_of(n);
        if from == to {
            return Ok(false);
        }
        let (assign, mask) = self.moved(state, n, to);
        let value = self.value(&assign, &mask)?;
        if !Self::improves(value, state.value) {
            return Ok(false);
        }
        self.accept(state, assign, mask, value, Move::User { user: n, from, to });
        Ok(true)
    }

    /// Tries flipping antenna `m` on waveguide `k`; applies it if the value
    /// strictly rises.
    pub fn try_antenna_toggle(&self, state: &mut GameState, k: usize, m: usize) -> Result<bool, CoalitionError> {
        if !state.assign.is_serving(k) {
            return Err(CoalitionError::IdleWaveguide { waveguide: k });
        }
        let on = state.mask.is_active(k, m);
        if on && state.mask.active_count(k) == 1 {
            return Err(CoalitionError::LastAntenna { waveguide: k });
        }
        let mut mask = state.mask.clone();
        mask.set(k, m, !on);
        let value = self.value(&state.assign, &mask)?;
        if !Self::improves(value, state.value) {
            return Ok(false);
        }
        let kind = if on {
            Move::Deactivate { waveguide: k, antenna: m }
        } else {
            Move::Activate { waveguide: k, antenna: m }
        };
        let assign = state.assign.clone();
        self.accept(state, assign, mask, value, kind);
        Ok(true)
    }

    fn accept(&self, state: &mut GameState, assign: AssignmentState, mask: ActivationMask, value: f64, kind: Move) {
        state.move_log.push(MoveRecord { cycle: state.cycle_count, kind, value, delta: value - state.value });
        state.assign = assign;
        state.mask = mask;
        state.value = value;
    }

    /// Default cycle cap `10·K·M·N`.
    pub fn default_cycle_cap(&self) -> usize {
        10 * self.drop.waveguides() * self.drop.antennas() * self.drop.users()
    }

    /// Runs cycles until one passes without an accepted move.
    pub fn run(&self, mut state: GameState, cycle_cap: usize) -> Result<GameState, CoalitionError> {
        let (k_count, m_count, n_count) = (self.drop.waveguides(), self.drop.antennas(), self.drop.users());
        loop {
            if state.cycle_count >= cycle_cap {
                return Err(CoalitionError::CycleCap { cap: cycle_cap });
            }
            state.cycle_count += 1;
            let mut evaluations = 0;
            let mut changed = false;
            for k in 0..k_count {
                for n in 0..n_count {
                    if state.assign.waveguide_of(n) != k {
                        evaluations += 1;
                        changed |= self.try_user_move(&mut state, n, k)?;
                    }
                }
                if !state.assign.is_serving(k) {
                    continue;
                }
                for m in 0..m_count {
                    if state.mask.is_active(k, m) && state.mask.active_count(k) == 1 {
                        continue;
                    }
                    evaluations += 1;
                    changed |= self.try_antenna_toggle(&mut state, k, m)?;
                }
            }
            state.evaluations.push(evaluations);
            if !changed {
                return Ok(state);
            }
        }
    }

    /// `initialize` followed by `run` with the default cap.
    pub fn solve(&self) -> Result<GameState, CoalitionError> {
        let state = self.initialize()?;
        self.run(state, self.default_cycle_cap())
    }

    /// Checks every unilateral user move and every legal antenna toggle.
    pub fn is_nash_stable(&self, state: &GameState) -> Result<bool, PowerError> {
        let current = self.value(&state.assign, &state.mask)?;
        for n in 0..self.drop.users() {
            for k in 0..self.drop.waveguides() {
                if state.assign.waveguide_of(n) == k {
                    continue;
                }
                let (assign, mask) = self.moved(state, n, k);
                if Self::improves(self.value(&assign, &mask)?, current) {
                    return Ok(false);
                }
            }
        }
        for k in 0..self.drop.waveguides() {
            if !state.assign.is_serving(k) {
                continue;
            }
            for m in 0..self.drop.antennas() {
                let on = state.mask.is_active(k, m);
                if on && state.mask.active_count(k) == 1 {
                    continue;
                }
                let mut mask = state.mask.clone();
                mask.set(k, m, !on);
                if Self::improves(self.value(&state.assign, &mask)?, current) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Index of the entry of `positions` closest to `x`, lowest index on ties.
pub fn nearest(positions: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, p) in positions.iter().enumerate() {
        if (p - x).abs() < (positions[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Solves one waveguide, relaxing QoS if it cannot be met. Returns the
/// coefficients, the iteration count and whether QoS held.
pub fn solve_waveguide(
    problem: &WaveguideProblem,
    solver: PaSolver,
    mo: &PolyblockOptions,
    sca: &ScaOptions,
) -> Result<(Vec<f64>, usize, bool), PowerError> {
    match solver {
        PaSolver::Mo => {
            let (s, met) = power_mo::solve_or_relax(problem, mo)?;
            Ok((s.solution.p, s.solution.iterations, met))
        }
        PaSolver::Sca => {
            let (s, met) = power_sca::solve_or_relax(problem, sca)?;
            Ok((s.solution.p, s.solution.iterations, met))
        }
    }
}

/// Writes the move log as JSON lines.
pub fn write_move_log<W: Write>(mut out: W, log: &[MoveRecord]) -> std::io::Result<()> {
    for record in log {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_derived, ScenarioConfig};

    fn setup(k: usize, users: Vec<[f64; 2]>) -> (ScenarioConfig, DerivedConstants, UserDrop) {
        let cfg = ScenarioConfig { waveguides: k, users: users.len(), ..ScenarioConfig::default() };
        let consts = build_derived(&cfg).unwrap();
        let drop = UserDrop::with_users(&cfg, users);
        (cfg, consts, drop)
    }

    #[test]
    fn nearest_breaks_ties_low() {
        assert_eq!(nearest(&[-2.0, 2.0], 0.0), 0);
        assert_eq!(nearest(&[-2.0, 2.0], 0.1), 1);
        assert_eq!(nearest(&[-2.5, 2.5], 2.0), 1);
    }

    #[test]
    fn initial_structure() {
        let (_, consts, drop) = setup(2, vec![[0.0, 2.0], [0.1, 1.5], [-3.0, -1.0]]);
        let game = Game::new(&drop, &consts, 0.1);
        let s = game.initialize().unwrap();
        assert_eq!(s.assign.coalition(1), vec![0, 1]);
        assert_eq!(s.assign.coalition(0), vec![2]);
        // Users 0 and 1 share their nearest antenna.
        assert_eq!(s.mask.active_count(1), 1);
        assert_eq!(s.mask.active_count(0), 1);
    }

    #[test]
    fn single_user_single_waveguide() {
        let (_, consts, drop) = setup(1, vec![[1.0, 0.5]]);
        let game = Game::new(&drop, &consts, 0.1);
        let s = game.solve().unwrap();
        assert_eq!(s.assign.waveguide_of(0), 0);
        assert!(s.mask.active_count(0) >= 1);
        assert!(game.is_nash_stable(&s).unwrap());
    }

    #[test]
    fn last_antenna_guard() {
        let (_, consts, drop) = setup(1, vec![[1.0, 0.5]]);
        let game = Game::new(&drop, &consts, 0.1);
        let mut s = game.initialize().unwrap();
        let m = s.mask.active(0).next().unwrap();
        assert_eq!(game.try_antenna_toggle(&mut s, 0, m), Err(CoalitionError::LastAntenna { waveguide: 0 }));
    }

    #[test]
    fn emptied_waveguide_switches_off() {
        let (_, consts, drop) = setup(2, vec![[0.0, 2.0], [1.0, -2.0]]);
        let game = Game::new(&drop, &consts, 0.1);
        let s = game.initialize().unwrap();
        let (assign, mask) = game.moved(&s, 0, 0);
        assert!(!assign.is_serving(1));
        assert_eq!(mask.active_count(1), 0);
    }

    #[test]
    fn moves_strictly_increase_value() {
        let users = vec![[-4.0, 3.0], [-1.0, 1.0], [2.0, -3.5], [4.5, 0.2], [0.0, -1.0], [3.0, 3.0]];
        let (_, consts, drop) = setup(2, users);
        let game = Game::new(&drop, &consts, 0.1);
        let s = game.solve().unwrap();
        let mut last = game.initialize().unwrap().value;
        for rec in &s.move_log {
            assert!(rec.value > last);
            assert!((rec.delta - (rec.value - last)).abs() < 1e-12);
            last = rec.value;
        }
        assert_eq!(last, s.value);
        assert!(game.is_nash_stable(&s).unwrap());
    }

    #[test]
    fn move_log_json_lines() {
        let rec = MoveRecord { cycle: 2, kind: Move::Activate { waveguide: 1, antenna: 4 }, value: 3.5, delta: 0.25 };
        let mut buf = Vec::new();
        write_move_log(&mut buf, &[rec, rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(parsed["cycle"], 2);
        assert_eq!(parsed["move"]["type"], "activate");
        assert_eq!(parsed["delta"], 0.25);
    }
}
