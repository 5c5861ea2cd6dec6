//! Monte Carlo sweeps over drops, schemes and one swept parameter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

use crate::baselines::{run_scheme, SchemeId, SchemeSettings};
use crate::coalition::{MoveRecord, PaSolver};
use crate::scenario::{build_derived, sample_drop, ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("sweep value {value} gives an invalid scenario: {source}")]
    Scenario { value: f64, source: ScenarioError },
    #[error("no records to aggregate")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Transmit power, dBm.
    Pt,
    /// Target rate, bits/s/Hz.
    Rmin,
    /// Antennas per waveguide.
    M,
    /// Waveguides.
    K,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Pt => "pt",
            SweepAxis::Rmin => "rmin",
            SweepAxis::M => "m",
            SweepAxis::K => "k",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(HarnessError::Plan(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::Pt => cfg.tx_power_dbm = value,
            SweepAxis::Rmin => cfg.min_rate = value,
            SweepAxis::M => cfg.antennas = count()?,
            SweepAxis::K => {
                cfg.waveguides = count()?;
                cfg.waveguide_y = None;
            }
        }
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pt" => Ok(SweepAxis::Pt),
            "rmin" => Ok(SweepAxis::Rmin),
            "m" => Ok(SweepAxis::M),
            "k" => Ok(SweepAxis::K),
            _ => Err(format!("unknown sweep axis `{s}` (expected pt, rmin, m or k)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: ScenarioConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<SchemeId>,
    pub pa: Option<PaSolver>,
    pub passes: usize,
    pub seed: u64,
    /// When `false`, `wall_ms` is written as 0 so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl ExperimentPlan {
    /// A single-point plan at the base transmit power.
    pub fn new(base: ScenarioConfig) -> Self {
        Self {
            axis: SweepAxis::Pt,
            values: vec![base.tx_power_dbm],
            seed: base.seed,
            base,
            trials: 1,
            schemes: SchemeId::ALL.to_vec(),
            pa: Some(PaSolver::Sca),
            passes: 1,
            record_wall_time: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Plan("trial count must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(HarnessError::Plan("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Plan("sweep values must be strictly increasing".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::Plan("no schemes selected".into()));
        }
        if self.passes == 0 {
            return Err(HarnessError::Plan("passes must be at least 1".into()));
        }
        for &value in &self.values {
            let cfg = self.axis.apply(&self.base, value)?;
            cfg.validate().map_err(|source| HarnessError::Scenario { value, source })?;
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub scheme: SchemeId,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub sum_rate: f64,
    pub outage_users: usize,
    pub n_users: usize,
    pub cg_cycles: usize,
    pub pa_iterations: usize,
    pub wall_ms: f64,
}

/// SplitMix64 finaliser over the master seed and trial index.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One coalition-game move tagged with the run it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoggedMove {
    pub trial: usize,
    pub scheme: SchemeId,
    pub sweep_value: f64,
    #[serde(flatten)]
    pub record: MoveRecord,
}

/// Runs every `(value, trial, scheme)` combination. Trials run in parallel;
/// the returned records are ordered by sweep value, trial and scheme.
///
/// A scheme that fails on a drop is reported on stderr and recorded with
/// zero rate and every user in outage.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<TrialRecord>, HarnessError> {
    run_experiment_logged(plan).map(|(records, _)| records)
}

/// [`run_experiment`] plus the coalition-game move logs, in the same order.
pub fn run_experiment_logged(plan: &ExperimentPlan) -> Result<(Vec<TrialRecord>, Vec<LoggedMove>), HarnessError> {
    plan.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..plan.values.len()).flat_map(|v| (0..plan.trials).map(move |t| (v, t))).collect();
    let nested: Vec<(Vec<TrialRecord>, Vec<LoggedMove>)> =
        jobs.par_iter().map(|&(v, trial)| run_trial(plan, v, trial)).collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    let mut moves = Vec::new();
    for (r, m) in nested {
        records.extend(r);
        moves.extend(m);
    }
    Ok((records, moves))
}

fn run_trial(
    plan: &ExperimentPlan,
    v: usize,
    trial: usize,
) -> Result<(Vec<TrialRecord>, Vec<LoggedMove>), HarnessError> {
    let value = plan.values[v];
    let cfg = plan.axis.apply(&plan.base, value)?;
    let consts = build_derived(&cfg).map_err(|source| HarnessError::Scenario { value, source })?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(plan.seed, trial));
    let drop = sample_drop(&cfg, &mut rng);
    let settings = SchemeSettings { min_rate: cfg.min_rate, pa: plan.pa, passes: plan.passes };
    let mut moves = Vec::new();
    let records = plan
        .schemes
        .iter()
        .map(|&scheme| {
            let start = Instant::now();
            let result = run_scheme(scheme, &drop, &consts, &settings);
            let wall_ms = if plan.record_wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let base = TrialRecord {
                trial,
                scheme,
                sweep_name: plan.axis.name().to_string(),
                sweep_value: value,
                sum_rate: 0.0,
                outage_users: cfg.users,
                n_users: cfg.users,
                cg_cycles: 0,
                pa_iterations: 0,
                wall_ms,
            };
            match result {
                Ok(out) => {
                    moves.extend(out.move_log.iter().map(|&record| LoggedMove {
                        trial,
                        scheme,
                        sweep_value: value,
                        record,
                    }));
                    TrialRecord {
                        sum_rate: out.report.total,
                        outage_users: out.report.outage_count(),
                        cg_cycles: out.cg_cycles,
                        pa_iterations: out.pa_iterations,
                        ..base
                    }
                }
                Err(e) => {
                    eprintln!("trial {trial}, {scheme} at {}={value}: {e}", plan.axis.name());
                    base
                }
            }
        })
        .collect();
    Ok((records, moves))
}

/// Writes records with the fixed column set.
pub fn write_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_writer(out);
    if records.is_empty() {
        writer.write_record([
            "trial",
            "scheme",
            "sweep_name",
            "sweep_value",
            "sum_rate",
            "outage_users",
            "n_users",
            "cg_cycles",
            "pa_iterations",
            "wall_ms",
        ])?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Mean sum rate and outage probability of one scheme at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub sweep_value: f64,
    pub trials: usize,
    pub mean_sum_rate: f64,
    /// Users in outage over all users of all trials.
    pub outage_probability: f64,
}

/// Rate sum, trials, outage users, users, sweep value.
type Tally = (f64, usize, usize, usize, f64);

/// Groups by `(scheme, sweep value)`, ordered by scheme then value.
pub fn aggregate(records: &[TrialRecord]) -> Result<Vec<SummaryRow>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut groups: BTreeMap<(SchemeId, u64), Tally> = BTreeMap::new();
    for r in records {
        // Ordered bit pattern so negative values (dBm) sort correctly.
        let bits = r.sweep_value.to_bits();
        let key = if r.sweep_value.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let e = groups.entry((r.scheme, key)).or_insert((0.0, 0, 0, 0, r.sweep_value));
        e.0 += r.sum_rate;
        e.1 += 1;
        e.2 += r.outage_users;
        e.3 += r.n_users;
    }
    Ok(groups
        .into_iter()
        .map(|((scheme, _), (sum, trials, outage, users, value))| SummaryRow {
            scheme,
            sweep_value: value,
            trials,
            mean_sum_rate: sum / trials as f64,
            outage_probability: outage as f64 / users as f64,
        })
        .collect())
}
