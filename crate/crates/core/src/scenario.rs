//! Scenario files and the experiment drivers behind the command-line tool.
//!
//! A scenario is a JSON document holding model parameters, a grid of initial
//! states and the sweep to run. Drivers return typed rows; grid cells are
//! solved in parallel but rows always come back in grid order.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate, simulate_paths, summarize, PathOutcome};
use crate::kernel::{raw_successors, successors, Control, TransitionEdge};
use crate::latency::{framework_name, latency_sweep, LatencyCurve, DEFAULT_TAUS};
use crate::model::{ModelParams, OrderbookState};
use crate::solver::{reachable, solve_fixed_on, solve_on};

/// Inclusive integer range written as `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span(pub u32, pub u32);

impl Span {
    pub fn single(v: u32) -> Self {
        Span(v, v)
    }

    pub fn values(self) -> impl Iterator<Item = u32> {
        self.0..=self.1
    }

    fn is_empty(self) -> bool {
        self.0 > self.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub q_before: Span,
    pub q_after: Span,
    pub q_opp: Span,
    pub price_ticks: i64,
}

impl GridSpec {
    pub fn single(q_before: u32, q_after: u32, q_opp: u32, price_ticks: i64) -> Self {
        GridSpec {
            q_before: Span::single(q_before),
            q_after: Span::single(q_after),
            q_opp: Span::single(q_opp),
            price_ticks,
        }
    }

    /// The published sweep: `Q_before = 1`, `Q_after` in 1..=11, `Q_opp` in 2..=12.
    pub fn imbalance_grid(price_ticks: i64) -> Self {
        GridSpec {
            q_before: Span::single(1),
            q_after: Span(1, 11),
            q_opp: Span(2, 12),
            price_ticks,
        }
    }

    /// Initial states in `(q_before, q_after, q_opp)` lexicographic order.
    pub fn states(&self) -> Vec<OrderbookState> {
        let mut out = Vec::new();
        for b in self.q_before.values() {
            for a in self.q_after.values() {
                for o in self.q_opp.values() {
                    out.push(OrderbookState::new(b, a, o, self.price_ticks));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    ImbalanceGrid,
    Horizon,
    Latency,
    Single,
}

fn default_seed() -> u64 {
    42
}

fn default_paths() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub params: ModelParams,
    pub grid: GridSpec,
    pub sweep: SweepKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Remaining-time grid of the horizon sweep; `1..=f` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<usize>>,
    /// Microprice sensitivities of the latency sweep; `[params.alpha]` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for (name, span) in [
            ("q_before", self.grid.q_before),
            ("q_after", self.grid.q_after),
            ("q_opp", self.grid.q_opp),
        ] {
            if span.is_empty() {
                return Err(Error::Config(format!("grid range {name} is empty")));
            }
        }
        if self.grid.q_opp.0 == 0 {
            return Err(Error::Config("grid q_opp must start at 1 or more".into()));
        }
        if self.grid.q_before.0 + self.grid.q_after.0 == 0 {
            return Err(Error::Config("grid includes a state with an empty bid queue".into()));
        }
        if let Some(h) = &self.horizons {
            if h.is_empty() || h.iter().any(|&v| v == 0) {
                return Err(Error::Config("horizons must be non-empty and positive".into()));
            }
        }
        if let Some(t) = &self.taus {
            if t.is_empty() || t.iter().any(|&v| v == 0 || v > self.params.horizon) {
                return Err(Error::Config(format!(
                    "taus must be non-empty and within [1, {}]",
                    self.params.horizon
                )));
            }
        }
        if let Some(a) = &self.alphas {
            if a.is_empty() || a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config("alphas must be non-empty and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn framework(&self) -> &'static str {
        framework_name(&self.params)
    }

    fn first_state(&self) -> OrderbookState {
        self.grid.states()[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub framework: String,
    pub q_before: u32,
    pub q_after: u32,
    pub q_opp: u32,
    pub imbalance: f64,
    pub v_opt: f64,
    pub v_stay: f64,
    pub v_cancel: f64,
    pub first_control: Control,
    pub states: usize,
}

/// Optimal and fixed-control values for every grid state.
pub fn run_solve(config: &ScenarioConfig) -> Result<Vec<SolveRow>> {
    let params = &config.params;
    config
        .grid
        .states()
        .par_iter()
        .map(|&s| {
            let space = Arc::new(reachable(s, params)?);
            let opt = solve_on(&space, params)?;
            Ok(SolveRow {
                framework: config.framework().into(),
                q_before: s.q_before,
                q_after: s.q_after,
                q_opp: s.q_opp,
                imbalance: s.imbalance()?,
                v_opt: opt.value,
                v_stay: solve_fixed_on(&space, params, Control::Stay)?.value,
                v_cancel: solve_fixed_on(&space, params, Control::Cancel)?.value,
                first_control: opt.policy.control(0, &s).unwrap_or(Control::Stay),
                states: space.total_states(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceRow {
    pub framework: String,
    pub q_before: u32,
    pub q_after: u32,
    pub q_opp: u32,
    pub imbalance: f64,
    pub v_opt: f64,
    pub v_nc: f64,
    pub improvement: f64,
    pub exec_mid_opt: f64,
    pub exec_mid_nc: f64,
    pub duration_opt: f64,
    pub duration_nc: f64,
    pub stay_ratio_opt: f64,
    pub stay_ratio_nc: f64,
    pub first_control: Control,
}

/// Optimal against always-stay metrics over the grid of initial states.
pub fn sweep_imbalance(config: &ScenarioConfig) -> Result<Vec<ImbalanceRow>> {
    let params = &config.params;
    config
        .grid
        .states()
        .par_iter()
        .map(|&s| {
            let space = Arc::new(reachable(s, params)?);
            let opt = solve_on(&space, params)?;
            let nc = solve_fixed_on(&space, params, Control::Stay)?;
            let m_opt = evaluate(s, params, &opt.policy)?;
            let m_nc = evaluate(s, params, &crate::solver::Policy::constant(Control::Stay))?;
            Ok(ImbalanceRow {
                framework: config.framework().into(),
                q_before: s.q_before,
                q_after: s.q_after,
                q_opp: s.q_opp,
                imbalance: s.imbalance()?,
                v_opt: opt.value,
                v_nc: nc.value,
                improvement: opt.value - nc.value,
                exec_mid_opt: m_opt.expected_exec_mid,
                exec_mid_nc: m_nc.expected_exec_mid,
                duration_opt: m_opt.expected_duration,
                duration_nc: m_nc.expected_duration,
                stay_ratio_opt: m_opt.stay_ratio,
                stay_ratio_nc: m_nc.stay_ratio,
                first_control: opt.policy.control(0, &s).unwrap_or(Control::Stay),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub framework: String,
    pub remaining: usize,
    /// Optimal value with `remaining` steps to go, from the grid's first state.
    pub v_opt: f64,
    pub v_nc: f64,
    /// Share of live mass kept in the book at `remaining` steps before the
    /// horizon, along the optimal policy of the longest horizon.
    pub stay_share: Option<f64>,
    pub cancel_share: Option<f64>,
}

pub fn sweep_horizon(config: &ScenarioConfig) -> Result<Vec<HorizonRow>> {
    let s = config.first_state();
    let horizons = config
        .horizons
        .clone()
        .unwrap_or_else(|| (1..=config.params.horizon).collect());
    let longest = *horizons.iter().max().expect("validated non-empty");
    let long_params = config.params.clone().with_horizon(longest);
    let long_space = Arc::new(reachable(s, &long_params)?);
    let long_opt = solve_on(&long_space, &long_params)?;
    let profile = evaluate(s, &long_params, &long_opt.policy)?.layers;

    horizons
        .par_iter()
        .map(|&r| {
            let p = config.params.clone().with_horizon(r);
            let space = Arc::new(reachable(s, &p)?);
            let layer = &profile[longest - r];
            let stay_share = layer.stay_share();
            Ok(HorizonRow {
                framework: config.framework().into(),
                remaining: r,
                v_opt: solve_on(&space, &p)?.value,
                v_nc: solve_fixed_on(&space, &p, Control::Stay)?.value,
                stay_share,
                cancel_share: stay_share.map(|v| 1.0 - v),
            })
        })
        .collect()
}

pub fn run_latency(config: &ScenarioConfig) -> Result<Vec<LatencyCurve>> {
    let f = config.params.horizon;
    let taus = config
        .taus
        .clone()
        .unwrap_or_else(|| DEFAULT_TAUS.iter().copied().filter(|&t| t <= f).collect());
    let alphas = config.alphas.clone().unwrap_or_else(|| vec![config.params.alpha]);
    latency_sweep(&config.name, config.first_state(), &config.params, &taus, &alphas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub framework: String,
    pub q_before: u32,
    pub q_after: u32,
    pub q_opp: u32,
    pub n_paths: usize,
    pub seed: u64,
    pub exact_gain: f64,
    pub mean_gain: f64,
    pub se_gain: f64,
    pub exact_duration: f64,
    pub mean_duration: f64,
    pub se_duration: f64,
    pub exact_stay_ratio: f64,
    pub sampled_stay_ratio: f64,
    pub exact_exec_before_horizon: f64,
    pub sampled_exec_before_horizon: f64,
}

/// Exact and sampled metrics of the optimal policy for each grid state.
/// Paths of the first grid state are returned for optional logging.
pub fn run_simulate(
    config: &ScenarioConfig,
    n_paths: usize,
    seed: u64,
) -> Result<(Vec<SimulateRow>, Vec<PathOutcome>)> {
    let params = &config.params;
    let mut first_paths = Vec::new();
    let mut rows = Vec::new();
    for (i, s) in config.grid.states().into_iter().enumerate() {
        let opt = solve_on(&Arc::new(reachable(s, params)?), params)?;
        let exact = evaluate(s, params, &opt.policy)?;
        let paths = simulate_paths(s, params, &opt.policy, n_paths, seed)?;
        let sampled = summarize(&paths);
        rows.push(SimulateRow {
            framework: config.framework().into(),
            q_before: s.q_before,
            q_after: s.q_after,
            q_opp: s.q_opp,
            n_paths,
            seed,
            exact_gain: exact.expected_gain,
            mean_gain: sampled.mean_gain,
            se_gain: sampled.se_gain,
            exact_duration: exact.expected_duration,
            mean_duration: sampled.mean_duration,
            se_duration: sampled.se_duration,
            exact_stay_ratio: exact.stay_ratio,
            sampled_stay_ratio: sampled.stay_ratio,
            exact_exec_before_horizon: exact.exec_before_horizon_prob,
            sampled_exec_before_horizon: sampled.exec_before_horizon_prob,
        });
        if i == 0 {
            first_paths = paths;
        }
    }
    Ok((rows, first_paths))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDump {
    pub state: OrderbookState,
    pub control: Control,
    /// Row mass before normalization.
    pub raw_mass: f64,
    pub edges: Vec<TransitionEdge>,
}

pub fn kernel_dump(state: OrderbookState, control: Control, params: &ModelParams) -> Result<KernelDump> {
    params.validate()?;
    let raw_mass = raw_successors(&state, control, params)?.iter().map(|e| e.prob).sum();
    Ok(KernelDump {
        state,
        control,
        raw_mass,
        edges: successors(&state, control, params)?,
    })
}

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
