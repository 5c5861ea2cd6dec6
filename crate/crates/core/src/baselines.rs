//! The proposed scheme and the comparison systems, all run on the same drop.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::channel::{user_points, ActivationMask, ArrayGeometry, ChannelModel, Point3};
use crate::coalition::{nearest, CoalitionError, Game, GameState, MoveRecord, PaPolicy, PaSolver};
use crate::rates::{
    bits, full_budget_interference, optimal_order, rates_under_optimal_order, AssignmentState, PowerAllocation,
    RateReport,
};
use crate::scenario::{DerivedConstants, UserDrop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    /// Coalition game followed by optimised power allocation.
    NomaCgSca,
    /// Coalition game with equal power split.
    NomaCg,
    /// Nearest waveguide and nearest antenna, equal power split.
    NomaFixed,
    /// Time sharing, one user at a time on its nearest antenna.
    OmaPinching,
    /// Fixed central array with half-wavelength spacing.
    ConventionalFixed,
    /// One central waveguide with the coalition game.
    SingleWaveguide,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::NomaCgSca,
        SchemeId::NomaCg,
        SchemeId::NomaFixed,
        SchemeId::OmaPinching,
        SchemeId::ConventionalFixed,
        SchemeId::SingleWaveguide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::NomaCgSca => "noma_cg_sca",
            SchemeId::NomaCg => "noma_cg",
            SchemeId::NomaFixed => "noma_fixed",
            SchemeId::OmaPinching => "oma_pinching",
            SchemeId::ConventionalFixed => "conventional_fixed",
            SchemeId::SingleWaveguide => "single_waveguide",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// Settings shared by every scheme in a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSettings {
    pub min_rate: f64,
    /// Solver behind `noma_cg_sca`; `None` keeps the equal split.
    pub pa: Option<PaSolver>,
    /// Coalition-game / power-allocation passes for `noma_cg_sca`.
    pub passes: usize,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        Self { min_rate: 0.1, pa: Some(PaSolver::Sca), passes: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub report: RateReport,
    pub cg_cycles: usize,
    pub pa_iterations: usize,
    pub active_antennas: usize,
    /// Accepted coalition-game moves; empty for schemes without the game.
    pub move_log: Vec<MoveRecord>,
}

/// Runs `scheme` on `drop`.
pub fn run_scheme(
    scheme: SchemeId,
    drop: &UserDrop,
    consts: &DerivedConstants,
    settings: &SchemeSettings,
) -> Result<SchemeOutcome, CoalitionError> {
    let min_rate = settings.min_rate;
    match scheme {
        SchemeId::NomaFixed => {
            let game = Game::new(drop, consts, min_rate);
            let state = game.initialize()?;
            outcome(&game, &state, PaPolicy::EqualSplit)
        }
        SchemeId::NomaCg => {
            let game = Game::new(drop, consts, min_rate);
            let state = game.solve()?;
            outcome(&game, &state, PaPolicy::EqualSplit)
        }
        SchemeId::SingleWaveguide => {
            let single = single_waveguide_drop(drop);
            let game = Game::new(&single, consts, min_rate);
            let state = game.solve()?;
            outcome(&game, &state, PaPolicy::EqualSplit)
        }
        SchemeId::NomaCgSca => {
            let game = Game::new(drop, consts, min_rate);
            let mut state = game.solve()?;
            let Some(solver) = settings.pa else {
                return outcome(&game, &state, PaPolicy::EqualSplit);
            };
            let policy = PaPolicy::Optimized(solver);
            let mut cycles = state.cycle_count;
            let mut log = state.move_log.clone();
            if settings.passes > 1 {
                let refine = game.clone().with_policy(policy);
                for _ in 1..settings.passes {
                    state.value = refine.value(&state.assign, &state.mask)?;
                    state.cycle_count = 0;
                    state.evaluations.clear();
                    state.move_log.clear();
                    state = refine.run(state, refine.default_cycle_cap())?;
                    for mut record in state.move_log.iter().copied() {
                        record.cycle += cycles;
                        log.push(record);
                    }
                    cycles += state.cycle_count;
                    if state.cycle_count == 1 {
                        break;
                    }
                }
            }
            let mut out = outcome(&game, &state, policy)?;
            out.cg_cycles = cycles;
            out.move_log = log;
            Ok(out)
        }
        SchemeId::OmaPinching => Ok(SchemeOutcome {
            report: oma_pinching(drop, consts, min_rate),
            cg_cycles: 0,
            pa_iterations: 0,
            active_antennas: drop.users(),
            move_log: Vec::new(),
        }),
        SchemeId::ConventionalFixed => Ok(SchemeOutcome {
            report: conventional_fixed(drop, consts, min_rate),
            cg_cycles: 0,
            pa_iterations: 0,
            active_antennas: drop.antennas(),
            move_log: Vec::new(),
        }),
    }
}

fn outcome(game: &Game<'_>, state: &GameState, policy: PaPolicy) -> Result<SchemeOutcome, CoalitionError> {
    let eval = game.evaluate_with(&state.assign, &state.mask, policy)?;
    Ok(SchemeOutcome {
        report: eval.report,
        cg_cycles: state.cycle_count,
        pa_iterations: eval.pa_iterations,
        active_antennas: state.mask.total_active(),
        move_log: state.move_log.clone(),
    })
}

/// The same users under a single waveguide along `y = 0`.
pub fn single_waveguide_drop(drop: &UserDrop) -> UserDrop {
    UserDrop { waveguide_y: vec![0.0], ..drop.clone() }
}

/// OMA: each user gets a `1/N` time share on the nearest antenna of its
/// nearest waveguide at full power, with no other transmitter active.
pub fn oma_pinching(drop: &UserDrop, consts: &DerivedConstants, min_rate: f64) -> RateReport {
    let users = drop.users();
    let model = ChannelModel::pinching(drop, consts);
    let waveguide_of: Vec<usize> = drop.user_xy.iter().map(|&[_, y]| nearest(&drop.waveguide_y, y)).collect();
    let per_user = (0..users)
        .map(|n| {
            let k = waveguide_of[n];
            let m = nearest(&drop.antenna_x, drop.user_xy[n][0]);
            let gain = model.contribution(k, m, n).norm_sqr();
            bits(consts.tx_power * gain / consts.noise) / users as f64
        })
        .collect();
    let assign = AssignmentState::new(drop.waveguides(), waveguide_of).expect("nearest index in range");
    RateReport::from_user_rates(per_user, &assign, min_rate)
}

/// Geometry of the fixed array: `M` antennas spaced `λ/2` around the centre
/// of the area at height `d`, fed from the first element.
pub fn conventional_geometry(antennas: usize, height: f64, consts: &DerivedConstants) -> ArrayGeometry {
    let spacing = consts.lambda / 2.0;
    let centre = (antennas as f64 - 1.0) / 2.0;
    let row: Vec<Point3> = (0..antennas).map(|m| Point3::new((m as f64 - centre) * spacing, 0.0, height)).collect();
    let feed = row[0];
    ArrayGeometry { antennas: vec![row], feeds: vec![feed] }
}

/// NOMA over the fixed array: all antennas active, equal power split,
/// optimal decoding order.
pub fn conventional_fixed(drop: &UserDrop, consts: &DerivedConstants, min_rate: f64) -> RateReport {
    let geometry = conventional_geometry(drop.antennas(), drop.height, consts);
    let model = ChannelModel::new(&geometry, &user_points(drop), consts);
    let mask = ActivationMask::all_active(1, drop.antennas());
    let ch = model.channel(&mask);
    let assign = AssignmentState::new(1, vec![0; drop.users()]).expect("single waveguide");
    let interf = full_budget_interference(&ch, &assign, consts);
    let plan = optimal_order(&ch, &assign, &interf, consts);
    let pa = PowerAllocation::equal_split(&assign);
    rates_under_optimal_order(&plan, &pa, &ch, &assign, consts, min_rate)
}
