//! Exact forward evaluation of a policy and a seeded Monte Carlo simulator.
//!
//! Every path ends with a fill: either a passive one before the horizon or the
//! forced spread cross at `f`. Expectations conditioned on execution are
//! therefore plain expectations.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{successors, Control, TransitionEdge};
use crate::model::{ExecFlag, ModelParams, OrderbookState};
use crate::solver::{terminal_value, Policy};

/// Probability mass seen at one layer during forward propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub layer: usize,
    /// Mass of states where the order is still resting.
    pub live_mass: f64,
    /// Part of `live_mass` under which the policy keeps the order in place.
    pub stay_mass: f64,
    /// Mass already filled (flagged `ExecutedNow` or `Cemetery`).
    pub executed_mass: f64,
}

impl LayerProfile {
    pub fn stay_share(&self) -> Option<f64> {
        (self.live_mass > 0.0).then(|| self.stay_mass / self.live_mass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    /// `E(Z_{k0})` in ticks.
    pub expected_gain: f64,
    /// Mid price at the execution step, in ticks.
    pub expected_exec_mid: f64,
    /// Expected execution step `k0`.
    pub expected_duration: f64,
    /// Probability-weighted share of pre-fill decision steps spent staying.
    pub stay_ratio: f64,
    pub exec_before_horizon_prob: f64,
    pub layers: Vec<LayerProfile>,
}

impl PolicyMetrics {
    pub fn cancel_ratio(&self) -> f64 {
        1.0 - self.stay_ratio
    }
}

/// Selects the control for one step of a path given the held control.
fn step_control(
    policy: &Policy,
    layer: usize,
    state: &OrderbookState,
    held: Option<Control>,
) -> Result<Control> {
    let decide = held.is_none() || policy.schedule().is_decision_epoch(layer);
    if decide {
        policy
            .control(layer, state)
            .ok_or(Error::MissingControl { layer, state: *state })
    } else {
        Ok(held.expect("held control outside a decision epoch"))
    }
}

fn is_fill(edge: &TransitionEdge) -> bool {
    edge.next.exec == ExecFlag::ExecutedNow
}

/// Propagates the exact distribution of the chain under `policy`.
///
/// For policies on a latency schedule the mass is tracked per held control.
pub fn evaluate(
    initial: OrderbookState,
    params: &ModelParams,
    policy: &Policy,
) -> Result<PolicyMetrics> {
    params.validate()?;
    initial.validate(params.q_max)?;
    let f = params.horizon;

    let mut gain = 0.0;
    let mut exec_mid = 0.0;
    let mut duration = 0.0;
    let mut fill_mass = 0.0;
    let mut stay_total = 0.0;
    let mut epoch_total = 0.0;
    let mut layers = Vec::with_capacity(f + 1);

    // executed mass is absorbed immediately; only live states are carried
    let mut live: Vec<((OrderbookState, Option<Control>), f64)> = Vec::new();
    let mut executed = 0.0;
    if initial.is_live() {
        live.push(((initial, None), 1.0));
    } else {
        executed = 1.0;
    }

    for n in 0..f {
        let mut next: FxHashMap<(OrderbookState, Option<Control>), f64> = FxHashMap::default();
        let mut order: Vec<(OrderbookState, Option<Control>)> = Vec::new();
        let mut profile = LayerProfile {
            layer: n,
            live_mass: 0.0,
            stay_mass: 0.0,
            executed_mass: executed,
        };
        for ((state, held), mass) in &live {
            let control = step_control(policy, n, state, *held)?;
            profile.live_mass += mass;
            if control == Control::Stay {
                profile.stay_mass += mass;
            }
            for edge in successors(state, control, params)? {
                let m = mass * edge.prob;
                if is_fill(&edge) {
                    gain += m * edge.reward;
                    exec_mid += m * edge.next.price_ticks();
                    duration += m * (n + 1) as f64;
                    fill_mass += m;
                    executed += m;
                } else {
                    let key = (edge.next, Some(control));
                    match next.get_mut(&key) {
                        Some(v) => *v += m,
                        None => {
                            next.insert(key, m);
                            order.push(key);
                        }
                    }
                }
            }
        }
        stay_total += profile.stay_mass;
        epoch_total += profile.live_mass;
        layers.push(profile);
        live = order.into_iter().map(|k| (k, next[&k])).collect();
    }

    let mut last = LayerProfile {
        layer: f,
        live_mass: 0.0,
        stay_mass: 0.0,
        executed_mass: executed,
    };
    for ((state, _), mass) in &live {
        gain += mass * terminal_value(state, params.alpha)?;
        exec_mid += mass * state.price_ticks();
        duration += mass * f as f64;
        last.live_mass += mass;
    }
    layers.push(last);

    Ok(PolicyMetrics {
        expected_gain: gain,
        expected_exec_mid: exec_mid,
        expected_duration: duration,
        stay_ratio: if epoch_total > 0.0 { stay_total / epoch_total } else { 1.0 },
        exec_before_horizon_prob: fill_mass,
        layers,
    })
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub path: usize,
    pub gain: f64,
    pub exec_mid: f64,
    pub duration: usize,
    pub passive_fill: bool,
    pub stay_epochs: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledMetrics {
    pub n_paths: usize,
    pub mean_gain: f64,
    pub se_gain: f64,
    pub mean_exec_mid: f64,
    pub se_exec_mid: f64,
    pub mean_duration: f64,
    pub se_duration: f64,
    pub stay_ratio: f64,
    pub exec_before_horizon_prob: f64,
}

/// Random stream for one path: a function of `(seed, path)` only.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn draw<'a>(row: &'a [TransitionEdge], u: f64) -> &'a TransitionEdge {
    let mut acc = 0.0;
    for e in row {
        acc += e.prob;
        if u < acc {
            return e;
        }
    }
    row.last().expect("non-empty row")
}

fn simulate_path(
    initial: OrderbookState,
    params: &ModelParams,
    policy: &Policy,
    seed: u64,
    path: usize,
) -> Result<PathOutcome> {
    let mut rng = path_rng(seed, path);
    let mut out = PathOutcome {
        path,
        gain: 0.0,
        exec_mid: initial.price_ticks(),
        duration: 0,
        passive_fill: false,
        stay_epochs: 0,
        epochs: 0,
    };
    if !initial.is_live() {
        return Ok(out);
    }
    let mut state = initial;
    let mut held = None;
    for n in 0..params.horizon {
        let control = step_control(policy, n, &state, held)?;
        held = Some(control);
        out.epochs += 1;
        if control == Control::Stay {
            out.stay_epochs += 1;
        }
        let row = successors(&state, control, params)?;
        let edge = draw(&row, rng.gen::<f64>());
        if is_fill(edge) {
            out.gain = edge.reward;
            out.exec_mid = edge.next.price_ticks();
            out.duration = n + 1;
            out.passive_fill = true;
            return Ok(out);
        }
        state = edge.next;
    }
    out.gain = terminal_value(&state, params.alpha)?;
    out.exec_mid = state.price_ticks();
    out.duration = params.horizon;
    Ok(out)
}

/// Simulates `n_paths` independent trajectories; output depends only on the
/// arguments, not on how paths are scheduled across threads.
pub fn simulate_paths(
    initial: OrderbookState,
    params: &ModelParams,
    policy: &Policy,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathOutcome>> {
    if n_paths == 0 {
        return Err(Error::Argument("n_paths must be at least 1".into()));
    }
    params.validate()?;
    initial.validate(params.q_max)?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_path(initial, params, policy, seed, i))
        .collect()
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

pub fn summarize(paths: &[PathOutcome]) -> SampledMetrics {
    let n = paths.len();
    let (mean_gain, se_gain) = mean_and_se(paths.iter().map(|p| p.gain), n);
    let (mean_exec_mid, se_exec_mid) = mean_and_se(paths.iter().map(|p| p.exec_mid), n);
    let (mean_duration, se_duration) = mean_and_se(paths.iter().map(|p| p.duration as f64), n);
    let stay: usize = paths.iter().map(|p| p.stay_epochs).sum();
    let epochs: usize = paths.iter().map(|p| p.epochs).sum();
    SampledMetrics {
        n_paths: n,
        mean_gain,
        se_gain,
        mean_exec_mid,
        se_exec_mid,
        mean_duration,
        se_duration,
        stay_ratio: if epochs > 0 { stay as f64 / epochs as f64 } else { 1.0 },
        exec_before_horizon_prob: paths.iter().filter(|p| p.passive_fill).count() as f64 / n as f64,
    }
}

pub fn simulate(
    initial: OrderbookState,
    params: &ModelParams,
    policy: &Policy,
    n_paths: usize,
    seed: u64,
) -> Result<SampledMetrics> {
    Ok(summarize(&simulate_paths(initial, params, policy, n_paths, seed)?))
}

pub fn write_paths_csv<W: Write>(paths: &[PathOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in paths {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
