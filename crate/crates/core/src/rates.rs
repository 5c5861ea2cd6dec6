//! NOMA/SIC rate engine.
//!
//! Users on waveguide `k` are decoded in an order `Q_k`. A user sees the
//! signals of later-decoded users on its own waveguide as interference, plus
//! the full transmissions of every other waveguide (`I_{k,n}`). The rate a
//! user can be served at is the minimum over itself and every later user
//! that must decode its message first.
//!
//! Under a fixed order every rate can be written with a per-user constant
//! `C = max{(I + σ²)/|h|²}` over the later-or-equal decoders, which is the
//! form the power allocation solvers work with. Sorting users by
//! `(I + σ²)/|h|²` descending makes `C` equal to the user's own ratio and
//! maximises every position's rate at once.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::channel::ChannelMatrix;
use crate::scenario::DerivedConstants;

/// Rates below `R_min - OUTAGE_TOLERANCE` count as outage.
pub const OUTAGE_TOLERANCE: f64 = 1e-9;

/// `log2(1 + sinr)` evaluated through `ln_1p`.
pub fn bits(sinr: f64) -> f64 {
    sinr.ln_1p() / LN_2
}

/// Waveguide assignment: every user belongs to exactly one waveguide.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentState {
    waveguides: usize,
    waveguide_of: Vec<usize>,
}

impl AssignmentState {
    /// Returns `None` if any entry names a waveguide `>= waveguides`.
    pub fn new(waveguides: usize, waveguide_of: Vec<usize>) -> Option<Self> {
        waveguide_of.iter().all(|&k| k < waveguides).then_some(Self { waveguides, waveguide_of })
    }

    pub fn waveguides(&self) -> usize {
        self.waveguides
    }

    pub fn users(&self) -> usize {
        self.waveguide_of.len()
    }

    pub fn waveguide_of(&self, n: usize) -> usize {
        self.waveguide_of[n]
    }

    /// `α_{k,n}`.
    pub fn alpha(&self, k: usize, n: usize) -> bool {
        self.waveguide_of[n] == k
    }

    pub fn alpha_matrix(&self) -> Vec<Vec<bool>> {
        (0..self.waveguides).map(|k| (0..self.users()).map(|n| self.alpha(k, n)).collect()).collect()
    }

    /// Users of coalition `A_k`, ascending.
    pub fn coalition(&self, k: usize) -> Vec<usize> {
        (0..self.users()).filter(|&n| self.waveguide_of[n] == k).collect()
    }

    pub fn coalition_size(&self, k: usize) -> usize {
        self.waveguide_of.iter().filter(|&&w| w == k).count()
    }

    pub fn is_serving(&self, k: usize) -> bool {
        self.waveguide_of.contains(&k)
    }

    pub fn move_user(&mut self, n: usize, k: usize) {
        assert!(k < self.waveguides);
        self.waveguide_of[n] = k;
    }
}

/// Power allocation coefficients, one per user, expressed as a fraction of
/// the transmit power of the user's own waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    p: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(p: Vec<f64>) -> Self {
        Self { p }
    }

    /// `p = 1/N_k` for every user.
    pub fn equal_split(assign: &AssignmentState) -> Self {
        let sizes: Vec<usize> = (0..assign.waveguides()).map(|k| assign.coalition_size(k)).collect();
        Self { p: (0..assign.users()).map(|n| 1.0 / sizes[assign.waveguide_of(n)] as f64).collect() }
    }

    pub fn get(&self, n: usize) -> f64 {
        self.p[n]
    }

    pub fn set(&mut self, n: usize, value: f64) {
        self.p[n] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// `Σ_n α_{k,n} p_{k,n}`.
    pub fn budget_used(&self, assign: &AssignmentState, k: usize) -> f64 {
        (0..assign.users()).filter(|&n| assign.alpha(k, n)).map(|n| self.p[n]).sum()
    }
}

/// Inter-waveguide interference `I_{k,n}` in watts (K × N).
#[derive(Debug, Clone, PartialEq)]
pub struct Interference {
    users: usize,
    values: Vec<f64>,
}

impl Interference {
    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.values[k * self.users + n]
    }
}

/// `I_{k,n} = Σ_{k'≠k} (P_t/M_{k'}) |h_{k',n}|² Σ_i α_{k',i} p_{k',i}`.
pub fn interference(
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    pa: &PowerAllocation,
    consts: &DerivedConstants,
) -> Interference {
    let (kk, nn) = (ch.waveguides(), ch.users());
    // Received power from each waveguide at each user.
    let mut received = vec![0.0; kk * nn];
    for k in 0..kk {
        let m_k = ch.active_count(k);
        let budget = pa.budget_used(assign, k);
        if m_k == 0 || budget == 0.0 {
            continue;
        }
        let scale = consts.tx_power / m_k as f64 * budget;
        for n in 0..nn {
            received[k * nn + n] = scale * ch.gain2(k, n);
        }
    }
    let mut values = vec![0.0; kk * nn];
    for n in 0..nn {
        for k in 0..kk {
            values[k * nn + n] = (0..kk).filter(|&j| j != k).map(|j| received[j * nn + n]).sum();
        }
    }
    Interference { users: nn, values }
}

/// Interference when every serving waveguide spends its full budget, which
/// makes it independent of how power is split inside each waveguide.
pub fn full_budget_interference(
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    consts: &DerivedConstants,
) -> Interference {
    interference(ch, assign, &PowerAllocation::equal_split(assign), consts)
}

/// `(I_{k,n} + σ²) / |h_{k,n}|²` for user `n` on its own waveguide.
pub fn noise_to_gain_ratio(
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    interf: &Interference,
    consts: &DerivedConstants,
    n: usize,
) -> f64 {
    let k = assign.waveguide_of(n);
    let g = ch.gain2(k, n);
    if g > 0.0 {
        (interf.get(k, n) + consts.noise) / g
    } else {
        f64::INFINITY
    }
}

/// Decoding orders for every waveguide plus the per-user SIC constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingPlan {
    orders: Vec<Vec<usize>>,
    ratio: Vec<f64>,
    sic_constant: Vec<f64>,
}

impl DecodingPlan {
    /// `Q_k`, first-decoded user first.
    pub fn order(&self, k: usize) -> &[usize] {
        &self.orders[k]
    }

    pub fn orders(&self) -> &[Vec<usize>] {
        &self.orders
    }

    /// `(I + σ²)/|h|²` of user `n`.
    pub fn ratio(&self, n: usize) -> f64 {
        self.ratio[n]
    }

    /// `C_{k,n}`: the largest ratio among `n` and the users decoded after it.
    pub fn sic_constant(&self, n: usize) -> f64 {
        self.sic_constant[n]
    }

    /// SIC constants of waveguide `k` in decoding order.
    pub fn constants_in_order(&self, k: usize) -> Vec<f64> {
        self.orders[k].iter().map(|&n| self.sic_constant[n]).collect()
    }
}

/// Builds a plan for arbitrary given orders.
pub fn plan_for_orders(
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    interf: &Interference,
    consts: &DerivedConstants,
    orders: Vec<Vec<usize>>,
) -> DecodingPlan {
    let ratio: Vec<f64> = (0..assign.users()).map(|n| noise_to_gain_ratio(ch, assign, interf, consts, n)).collect();
    let mut sic_constant = vec![0.0; assign.users()];
    for order in &orders {
        let mut running = f64::NEG_INFINITY;
        for &n in order.iter().rev() {
            running = running.max(ratio[n]);
            sic_constant[n] = running;
        }
    }
    DecodingPlan { orders, ratio, sic_constant }
}

/// Sorts each waveguide's users by `(I + σ²)/|h|²` descending, ties broken by
/// ascending user index.
///
/// `interf` should be the full-budget interference; the order is then the
/// same for every power split.
pub fn optimal_order(
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    interf: &Interference,
    consts: &DerivedConstants,
) -> DecodingPlan {
    let orders = (0..assign.waveguides())
        .map(|k| {
            let mut users = assign.coalition(k);
            let key = |n: usize| noise_to_gain_ratio(ch, assign, interf, consts, n);
            users.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
            users
        })
        .collect();
    plan_for_orders(ch, assign, interf, consts, orders)
}

/// Rate at which user `decoder` can decode the message of user `target`
/// on waveguide `k` under `order`, from the explicit channels.
///
/// `decoder` must sit at the same or a later position than `target`.
#[allow(clippy::too_many_arguments)]
pub fn decode_rate(
    ch: &ChannelMatrix,
    pa: &PowerAllocation,
    interf: &Interference,
    consts: &DerivedConstants,
    k: usize,
    order: &[usize],
    decoder: usize,
    target: usize,
) -> f64 {
    let pos = order.iter().position(|&u| u == target).expect("target not in order");
    debug_assert!(order[pos..].contains(&decoder), "decoder precedes target");
    let m_k = ch.active_count(k);
    if m_k == 0 {
        return 0.0;
    }
    let scale = consts.tx_power / m_k as f64 * ch.gain2(k, decoder);
    let later: f64 = order[pos + 1..].iter().map(|&i| pa.get(i)).sum();
    let signal = pa.get(target) * scale;
    if signal == 0.0 {
        return 0.0;
    }
    bits(signal / (scale * later + interf.get(k, decoder) + consts.noise))
}

/// Min-form achievable rate of `target`: the smallest decode rate over the
/// target itself and every user decoded after it.
pub fn achievable_rate(
    ch: &ChannelMatrix,
    pa: &PowerAllocation,
    interf: &Interference,
    consts: &DerivedConstants,
    k: usize,
    order: &[usize],
    target: usize,
) -> f64 {
    let pos = order.iter().position(|&u| u == target).expect("target not in order");
    order[pos..]
        .iter()
        .map(|&decoder| decode_rate(ch, pa, interf, consts, k, order, decoder, target))
        .fold(f64::INFINITY, f64::min)
}

/// Rates by decoding position for one waveguide in closed form:
/// `R_(n) = log2(1 + p_(n) / (Σ_{j>n} p_(j) + C_(n)/a))` with `a = P_t/M_k`.
///
/// `c_over_a` holds `C_(n)/a`; `p` the coefficients in the same order.
pub fn position_rates(c_over_a: &[f64], p: &[f64]) -> Vec<f64> {
    debug_assert_eq!(c_over_a.len(), p.len());
    let mut rates = vec![0.0; p.len()];
    let mut later = 0.0;
    for i in (0..p.len()).rev() {
        rates[i] = if p[i] > 0.0 { bits(p[i] / (later + c_over_a[i])) } else { 0.0 };
        later += p[i];
    }
    rates
}

/// Per-user and aggregate rates of one system state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_user: Vec<f64>,
    /// Sum rate of each waveguide; idle waveguides report 0.
    pub per_waveguide: Vec<f64>,
    pub total: f64,
    /// `true` when the user's rate falls short of `R_min`.
    pub outage: Vec<bool>,
}

impl RateReport {
    pub fn from_user_rates(per_user: Vec<f64>, assign: &AssignmentState, min_rate: f64) -> Self {
        let mut per_waveguide = vec![0.0; assign.waveguides()];
        for (n, &r) in per_user.iter().enumerate() {
            per_waveguide[assign.waveguide_of(n)] += r;
        }
        let outage = per_user.iter().map(|&r| r < min_rate - OUTAGE_TOLERANCE).collect();
        Self { total: per_user.iter().sum(), per_user, per_waveguide, outage }
    }

    pub fn outage_count(&self) -> usize {
        self.outage.iter().filter(|&&o| o).count()
    }
}

/// Closed-form rates of every user under `plan` (any plan; with the optimal
/// order the constants reduce to each user's own ratio).
pub fn rates_under_optimal_order(
    plan: &DecodingPlan,
    pa: &PowerAllocation,
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    consts: &DerivedConstants,
    min_rate: f64,
) -> RateReport {
    let mut per_user = vec![0.0; assign.users()];
    for (k, order) in plan.orders().iter().enumerate() {
        if order.is_empty() || ch.active_count(k) == 0 {
            continue;
        }
        let a = consts.tx_power / ch.active_count(k) as f64;
        let c: Vec<f64> = order.iter().map(|&n| plan.sic_constant(n) / a).collect();
        let p: Vec<f64> = order.iter().map(|&n| pa.get(n)).collect();
        for (&n, r) in order.iter().zip(position_rates(&c, &p)) {
            per_user[n] = r;
        }
    }
    RateReport::from_user_rates(per_user, assign, min_rate)
}

/// Min-form rates of every user under the plan's orders, evaluated from the
/// explicit channels and decode rates.
pub fn rates_min_form(
    plan: &DecodingPlan,
    pa: &PowerAllocation,
    ch: &ChannelMatrix,
    assign: &AssignmentState,
    interf: &Interference,
    consts: &DerivedConstants,
    min_rate: f64,
) -> RateReport {
    let mut per_user = vec![0.0; assign.users()];
    for (k, order) in plan.orders().iter().enumerate() {
        for &n in order {
            per_user[n] = achievable_rate(ch, pa, interf, consts, k, order, n);
        }
    }
    RateReport::from_user_rates(per_user, assign, min_rate)
}
