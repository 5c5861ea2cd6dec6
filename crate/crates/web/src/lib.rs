//! Browser bindings. Each export takes plain values and returns a JSON
//! string; the page in `www/` draws the results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use pinchsim::baselines::{run_scheme, SchemeId, SchemeSettings};
use pinchsim::channel::{ArrayGeometry, ChannelModel, Point3};
use pinchsim::coalition::{Game, GameState, PaSolver};
use pinchsim::power::WaveguideProblem;
use pinchsim::power_mo::{self, PolyblockOptions};
use pinchsim::power_sca::{self, ScaOptions};
use pinchsim::scenario::{build_derived, sample_drop, DerivedConstants, ScenarioConfig, UserDrop};

/// Grid sizes above this are clamped.
const MAX_RESOLUTION: usize = 200;

fn parse_config(config_json: &str) -> Result<ScenarioConfig, String> {
    let text = if config_json.trim().is_empty() { "{}" } else { config_json };
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

struct Solved {
    cfg: ScenarioConfig,
    consts: DerivedConstants,
    drop: UserDrop,
    state: GameState,
}

fn solve_drop(config_json: &str, seed: u64) -> Result<Solved, String> {
    let cfg = parse_config(config_json)?;
    let consts = build_derived(&cfg).map_err(|e| e.to_string())?;
    let drop = sample_drop(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    let state = Game::new(&drop, &consts, cfg.min_rate).solve().map_err(|e| e.to_string())?;
    Ok(Solved { cfg, consts, drop, state })
}

#[derive(Serialize)]
struct SchemeLine {
    scheme: &'static str,
    sum_rate: f64,
    outage_users: usize,
    active_antennas: usize,
}

/// Drops users, runs the coalition game and every comparison scheme.
pub fn simulate(config_json: &str, seed: u64) -> Result<String, String> {
    let Solved { cfg, consts, drop, state } = solve_drop(config_json, seed)?;
    let game = Game::new(&drop, &consts, cfg.min_rate);
    let eval =
        game.evaluate_with(&state.assign, &state.mask, pinchsim::PaPolicy::EqualSplit).map_err(|e| e.to_string())?;
    let settings = SchemeSettings { min_rate: cfg.min_rate, pa: Some(PaSolver::Sca), passes: 1 };
    let schemes = SchemeId::ALL
        .iter()
        .map(|&s| {
            run_scheme(s, &drop, &consts, &settings).map(|o| SchemeLine {
                scheme: s.as_str(),
                sum_rate: o.report.total,
                outage_users: o.report.outage_count(),
                active_antennas: o.active_antennas,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let active: Vec<Vec<usize>> = (0..drop.waveguides()).map(|k| state.mask.active(k).collect()).collect();
    let out = json!({
        "length_x": cfg.length_x,
        "width_y": cfg.width_y,
        "waveguide_y": drop.waveguide_y,
        "antenna_x": drop.antenna_x,
        "feed_x": drop.feed_x,
        "users": drop.user_xy,
        "assignment": (0..drop.users()).map(|n| state.assign.waveguide_of(n)).collect::<Vec<_>>(),
        "active": active,
        "user_rates": eval.report.per_user,
        "min_rate": cfg.min_rate,
        "cycles": state.cycle_count,
        "moves": state.move_log,
        "schemes": schemes,
    });
    Ok(out.to_string())
}

/// Best-waveguide receive SNR in dB over a `resolution × resolution` grid,
/// with the antennas the coalition game activated.
pub fn gain_map(config_json: &str, seed: u64, resolution: usize) -> Result<String, String> {
    let Solved { cfg, consts, drop, state } = solve_drop(config_json, seed)?;
    let res = resolution.clamp(2, MAX_RESOLUTION);
    let (x0, y0) = (-cfg.length_x / 2.0, -cfg.width_y / 2.0);
    let step = |span: f64, i: usize| span * i as f64 / (res - 1) as f64;
    let points: Vec<Point3> = (0..res)
        .flat_map(|j| (0..res).map(move |i| (i, j)))
        .map(|(i, j)| Point3::new(x0 + step(cfg.length_x, i), y0 + step(cfg.width_y, j), 0.0))
        .collect();
    let model = ChannelModel::new(&ArrayGeometry::pinching(&drop), &points, &consts);
    let ch = model.channel(&state.mask);
    let snr_db: Vec<f64> = (0..points.len())
        .map(|p| {
            let best = (0..ch.waveguides())
                .filter(|&k| ch.active_count(k) > 0)
                .map(|k| consts.tx_power / ch.active_count(k) as f64 * ch.gain2(k, p))
                .fold(0.0, f64::max);
            10.0 * (best / consts.noise).max(1e-30).log10()
        })
        .collect();
    let out = json!({
        "resolution": res,
        "x": [x0, -x0],
        "y": [y0, -y0],
        "snr_db": snr_db,
    });
    Ok(out.to_string())
}

/// Two users sharing one waveguide with noise-to-gain constants `c1`, `c2`
/// (normalised by the per-antenna power). Returns the rate pairs along the
/// budget line and both solvers' answers.
pub fn power_region(c1: f64, c2: f64, min_rate: f64, samples: usize) -> Result<String, String> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err("constants must be positive".into());
    }
    let (c_first, c_second) = if c1 >= c2 { (c1, c2) } else { (c2, c1) };
    let problem =
        WaveguideProblem::new(0, vec![0, 1], vec![c_first, c_second], min_rate.max(0.0)).map_err(|e| e.to_string())?;
    let samples = samples.clamp(2, 2000);
    let boundary: Vec<serde_json::Value> = (0..samples)
        .map(|i| {
            let p0 = i as f64 / (samples - 1) as f64;
            let p = [p0, 1.0 - p0];
            let r = problem.rates(&p);
            json!({"p": p0, "rates": r, "feasible": problem.is_feasible(&p, 0.0)})
        })
        .collect();
    let polyblock = match power_mo::solve(&problem, &PolyblockOptions { epsilon: 1e-6, max_iter: 5000 }) {
        Ok(s) => json!({
            "p": s.solution.p,
            "value": s.solution.value,
            "rates": problem.rates(&s.solution.p),
            "trace": s.trace,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let sca = match power_sca::solve(&problem, &ScaOptions::default()) {
        Ok(s) => json!({
            "p": s.solution.p,
            "value": s.solution.value,
            "rates": problem.rates(&s.solution.p),
            "trace": s.trace.iter().map(|it| json!({"t": it.t, "p": it.p, "value": it.value})).collect::<Vec<_>>(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let out = json!({
        "constants": [c_first, c_second],
        "min_rate": min_rate,
        "boundary": boundary,
        "polyblock": polyblock,
        "sca": sca,
    });
    Ok(out.to_string())
}

fn to_js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(config_json: &str, seed: u32) -> Result<String, JsError> {
    to_js(simulate(config_json, seed as u64))
}

#[wasm_bindgen(js_name = gainMap)]
pub fn gain_map_js(config_json: &str, seed: u32, resolution: u32) -> Result<String, JsError> {
    to_js(gain_map(config_json, seed as u64, resolution as usize))
}

#[wasm_bindgen(js_name = powerRegion)]
pub fn power_region_js(c1: f64, c2: f64, min_rate: f64, samples: u32) -> Result<String, JsError> {
    to_js(power_region(c1, c2, min_rate, samples as usize))
}
