//! Forward enumeration of reachable states and the backward recursion
//! `G_f = Z_f`, `G_n = max(P^c G_{n+1}, P^s G_{n+1})`.
//!
//! Payoffs of passive fills are banked on the transition that fills the order,
//! so a state flagged `ExecutedNow` or `Cemetery` is worth zero from then on.
//! A live state at the last layer is worth `microprice - (P + 1/2)`: the order
//! is pulled and the spread is crossed.
//!
//! The latency-constrained problem runs the same recursion on the state
//! augmented with the control currently held; the control may only change on
//! layers that are multiples of `tau`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{successors, Control, TransitionEdge};
use crate::model::{microprice, ModelParams, OrderbookState};

/// Value of a live state when the horizon is reached.
pub fn terminal_value(state: &OrderbookState, alpha: f64) -> Result<f64> {
    if !state.is_live() {
        return Ok(0.0);
    }
    Ok(microprice(state, alpha)? - state.best_ask_ticks())
}

/// States reachable at one step index, deduplicated, in discovery order.
#[derive(Debug, Clone, Default)]
pub struct Layer {
    states: Vec<OrderbookState>,
    index: FxHashMap<OrderbookState, u32>,
}

impl Layer {
    fn insert(&mut self, state: OrderbookState) {
        if let std::collections::hash_map::Entry::Vacant(slot) = self.index.entry(state) {
            slot.insert(self.states.len() as u32);
            self.states.push(state);
        }
    }

    pub fn states(&self) -> &[OrderbookState] {
        &self.states
    }

    pub fn position(&self, state: &OrderbookState) -> Option<usize> {
        self.index.get(state).map(|&i| i as usize)
    }

    pub fn contains(&self, state: &OrderbookState) -> bool {
        self.index.contains_key(state)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Layers `0..=f` of states reachable from one initial state under any
/// sequence of controls.
#[derive(Debug, Clone)]
pub struct StateSpace {
    initial: OrderbookState,
    layers: Vec<Layer>,
}

impl StateSpace {
    pub fn initial(&self) -> OrderbookState {
        self.initial
    }

    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, n: usize) -> &Layer {
        &self.layers[n]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn total_states(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }
}

/// Builds the layered reachable set. The transition structure does not depend
/// on `alpha`, so the result can be shared between runs that differ only in it.
pub fn reachable(initial: OrderbookState, params: &ModelParams) -> Result<StateSpace> {
    params.validate()?;
    initial.validate(params.q_max)?;
    let mut first = Layer::default();
    first.insert(initial);
    let mut layers = vec![first];
    for n in 0..params.horizon {
        let rows: Vec<Vec<OrderbookState>> = layers[n]
            .states
            .par_iter()
            .map(|s| {
                let mut next = Vec::with_capacity(12);
                for control in Control::BOTH {
                    next.extend(successors(s, control, params)?.into_iter().map(|e| e.next));
                    if !s.is_live() {
                        break;
                    }
                }
                Ok(next)
            })
            .collect::<Result<_>>()?;
        let mut layer = Layer::default();
        for row in rows {
            for s in row {
                layer.insert(s);
            }
        }
        if layer.len() > params.state_budget {
            return Err(Error::StateBudget {
                layer: n + 1,
                count: layer.len(),
                budget: params.state_budget,
            });
        }
        layers.push(layer);
    }
    Ok(StateSpace { initial, layers })
}

/// When the agent is allowed to revise its control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSchedule {
    EveryStep,
    /// Revisions on layers `0, tau, 2 tau, ...`; the control is held between them.
    EveryTau(usize),
}

impl DecisionSchedule {
    pub fn every(tau: usize) -> Self {
        if tau <= 1 {
            DecisionSchedule::EveryStep
        } else {
            DecisionSchedule::EveryTau(tau)
        }
    }

    pub fn tau(self) -> usize {
        match self {
            DecisionSchedule::EveryStep => 1,
            DecisionSchedule::EveryTau(t) => t,
        }
    }

    pub fn is_decision_epoch(self, layer: usize) -> bool {
        layer % self.tau() == 0
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Table {
        space: Arc<StateSpace>,
        /// Chosen control per state; `None` for executed states and for
        /// layers that are not decision epochs.
        controls: Vec<Vec<Option<Control>>>,
    },
    Constant(Control),
}

/// Deterministic Markov policy over the (non-augmented) chain.
#[derive(Debug, Clone)]
pub struct Policy {
    rule: Rule,
    schedule: DecisionSchedule,
}

impl Policy {
    /// The same control at every step and every state.
    pub fn constant(control: Control) -> Self {
        Policy {
            rule: Rule::Constant(control),
            schedule: DecisionSchedule::EveryStep,
        }
    }

    pub fn schedule(&self) -> DecisionSchedule {
        self.schedule
    }

    /// Control chosen in a live `state` at a decision epoch `layer`.
    pub fn control(&self, layer: usize, state: &OrderbookState) -> Option<Control> {
        if !state.is_live() {
            return None;
        }
        match &self.rule {
            Rule::Constant(c) => Some(*c),
            Rule::Table { space, controls } => {
                let i = space.layers.get(layer)?.position(state)?;
                controls[layer][i]
            }
        }
    }
}

/// Per-layer values aligned with a [`StateSpace`].
#[derive(Debug, Clone)]
pub struct ValueTable {
    space: Arc<StateSpace>,
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn get(&self, layer: usize, state: &OrderbookState) -> Option<f64> {
        let i = self.space.layers.get(layer)?.position(state)?;
        Some(self.values[layer][i])
    }

    pub fn layer_values(&self, layer: usize) -> &[f64] {
        &self.values[layer]
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    /// Iterates `(layer, state, value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &OrderbookState, f64)> + '_ {
        self.space.layers.iter().enumerate().flat_map(move |(n, layer)| {
            layer
                .states
                .iter()
                .zip(&self.values[n])
                .map(move |(s, v)| (n, s, *v))
        })
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: Policy,
    /// `G_0` at the initial state, in ticks.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct FixedSolution {
    pub values: ValueTable,
    pub control: Control,
    pub value: f64,
}

#[derive(Clone, Copy)]
enum Mode {
    Optimal(DecisionSchedule),
    Fixed(Control),
}

fn control_slot(c: Control) -> usize {
    match c {
        Control::Stay => 0,
        Control::Cancel => 1,
    }
}

fn q_value(
    row: &[TransitionEdge],
    next_layer: &Layer,
    next_values: &[[f64; 2]],
    held: usize,
    layer: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for e in row {
        let i = next_layer.position(&e.next).ok_or_else(|| {
            Error::Consistency(format!("successor {} missing from layer {}", e.next, layer + 1))
        })?;
        acc += e.prob * (e.reward + next_values[i][held]);
    }
    Ok(acc)
}

struct Backward {
    /// Per layer and state, value indexed by held control (both equal on
    /// decision epochs).
    values: Vec<Vec<[f64; 2]>>,
    controls: Vec<Vec<Option<Control>>>,
}

fn backward(space: &StateSpace, params: &ModelParams, mode: Mode) -> Result<Backward> {
    let f = space.horizon();
    let mut values: Vec<Vec<[f64; 2]>> = vec![Vec::new(); f + 1];
    let mut controls: Vec<Vec<Option<Control>>> = vec![Vec::new(); f + 1];
    values[f] = space.layers[f]
        .states
        .iter()
        .map(|s| terminal_value(s, params.alpha).map(|v| [v, v]))
        .collect::<Result<_>>()?;
    controls[f] = vec![None; space.layers[f].len()];

    for n in (0..f).rev() {
        let next_layer = &space.layers[n + 1];
        let next_values = &values[n + 1];
        let decide = match mode {
            Mode::Optimal(schedule) => schedule.is_decision_epoch(n),
            Mode::Fixed(_) => false,
        };
        let cells: Vec<([f64; 2], Option<Control>)> = space.layers[n]
            .states
            .par_iter()
            .map(|s| {
                if !s.is_live() {
                    // absorbed: the single edge carries no reward into a zero-valued state
                    return Ok(([0.0, 0.0], None));
                }
                let stay_row = successors(s, Control::Stay, params)?;
                let cancel_row = successors(s, Control::Cancel, params)?;
                if decide {
                    let stay = q_value(&stay_row, next_layer, next_values, 0, n)?;
                    let cancel = q_value(&cancel_row, next_layer, next_values, 1, n)?;
                    let (best, c) = if cancel > stay {
                        (cancel, Control::Cancel)
                    } else {
                        (stay, Control::Stay)
                    };
                    Ok(([best, best], Some(c)))
                } else if let Mode::Fixed(c) = mode {
                    let row = if c == Control::Stay { &stay_row } else { &cancel_row };
                    let v = q_value(row, next_layer, next_values, control_slot(c), n)?;
                    Ok(([v, v], None))
                } else {
                    let stay = q_value(&stay_row, next_layer, next_values, 0, n)?;
                    let cancel = q_value(&cancel_row, next_layer, next_values, 1, n)?;
                    Ok(([stay, cancel], None))
                }
            })
            .collect::<Result<_>>()?;
        let (v, c): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
        values[n] = v;
        controls[n] = c;
    }
    Ok(Backward { values, controls })
}

fn check_space(space: &StateSpace, params: &ModelParams) -> Result<()> {
    if space.horizon() != params.horizon {
        return Err(Error::Argument(format!(
            "state space spans {} steps but the horizon is {}",
            space.horizon(),
            params.horizon
        )));
    }
    params.validate()
}

fn scalar_table(space: &Arc<StateSpace>, values: &[Vec<[f64; 2]>]) -> ValueTable {
    ValueTable {
        space: Arc::clone(space),
        values: values
            .iter()
            .map(|layer| layer.iter().map(|v| v[0]).collect())
            .collect(),
    }
}

/// Optimal value and policy on a prebuilt state space.
pub fn solve_on(space: &Arc<StateSpace>, params: &ModelParams) -> Result<Solution> {
    solve_scheduled_on(space, params, DecisionSchedule::EveryStep)
}

fn solve_scheduled_on(
    space: &Arc<StateSpace>,
    params: &ModelParams,
    schedule: DecisionSchedule,
) -> Result<Solution> {
    check_space(space, params)?;
    let result = backward(space, params, Mode::Optimal(schedule))?;
    let value = result.values[0][0][0];
    Ok(Solution {
        values: scalar_table(space, &result.values),
        policy: Policy {
            rule: Rule::Table {
                space: Arc::clone(space),
                controls: result.controls,
            },
            schedule,
        },
        value,
    })
}

/// Builds the reachable set and runs the optimal backward recursion.
pub fn solve(initial: OrderbookState, params: &ModelParams) -> Result<Solution> {
    let space = Arc::new(reachable(initial, params)?);
    solve_on(&space, params)
}

pub fn solve_fixed_on(
    space: &Arc<StateSpace>,
    params: &ModelParams,
    control: Control,
) -> Result<FixedSolution> {
    check_space(space, params)?;
    let result = backward(space, params, Mode::Fixed(control))?;
    Ok(FixedSolution {
        value: result.values[0][0][0],
        values: scalar_table(space, &result.values),
        control,
    })
}

/// Value of applying `control` at every step (`Stay` is the uncontrolled
/// "join the bid" baseline).
pub fn solve_fixed(
    initial: OrderbookState,
    params: &ModelParams,
    control: Control,
) -> Result<FixedSolution> {
    let space = Arc::new(reachable(initial, params)?);
    solve_fixed_on(&space, params, control)
}

/// Optimal value when the control may only change every `tau` steps,
/// together with the decision-epoch policy.
pub fn solve_latency_policy_on(
    space: &Arc<StateSpace>,
    params: &ModelParams,
    tau: usize,
) -> Result<Solution> {
    if tau == 0 || tau > params.horizon {
        return Err(Error::Argument(format!(
            "latency factor {tau} must lie in [1, {}]",
            params.horizon
        )));
    }
    solve_scheduled_on(space, params, DecisionSchedule::every(tau))
}

pub fn solve_latency_on(space: &Arc<StateSpace>, params: &ModelParams, tau: usize) -> Result<f64> {
    Ok(solve_latency_policy_on(space, params, tau)?.value)
}

pub fn solve_latency(initial: OrderbookState, params: &ModelParams, tau: usize) -> Result<f64> {
    if tau == 0 || tau > params.horizon {
        return Err(Error::Argument(format!(
            "latency factor {tau} must lie in [1, {}]",
            params.horizon
        )));
    }
    let space = Arc::new(reachable(initial, params)?);
    solve_latency_on(&space, params, tau)
}

/// Writes `layer,q_before,q_after,q_opp,price_half_ticks,exec,value,control`
/// rows. `control` is empty where no decision is taken.
pub fn write_solution_csv<W: Write>(solution: &Solution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "layer",
        "q_before",
        "q_after",
        "q_opp",
        "price_half_ticks",
        "exec",
        "value",
        "control",
    ])?;
    for (n, s, v) in solution.values.iter() {
        let control = solution.policy.control(n, s).map(Control::as_str).unwrap_or("");
        w.write_record([
            n.to_string(),
            s.q_before.to_string(),
            s.q_after.to_string(),
            s.q_opp.to_string(),
            s.price_half_ticks.to_string(),
            s.exec.code().to_string(),
            format!("{v:.12}"),
            control.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExecFlag;

    fn small(params: ModelParams, f: usize) -> ModelParams {
        params.with_horizon(f)
    }

    #[test]
    fn cemetery_initial_stays_put() {
        let params = small(ModelParams::const_framework(), 5);
        let s = OrderbookState::new(3, 0, 2, 10).with_exec(ExecFlag::Cemetery);
        let space = reachable(s, &params).unwrap();
        for layer in space.layers() {
            assert_eq!(layer.states(), &[s]);
        }
        assert_eq!(solve(s, &params).unwrap().value, 0.0);
    }

    #[test]
    fn one_step_layer_is_union_of_both_rows() {
        let params = small(ModelParams::const_framework(), 1);
        let s = OrderbookState::new(1, 1, 2, 10);
        let space = reachable(s, &params).unwrap();
        let mut expected: Vec<OrderbookState> = Control::BOTH
            .iter()
            .flat_map(|c| successors(&s, *c, &params).unwrap())
            .map(|e| e.next)
            .collect();
        expected.sort();
        expected.dedup();
        let mut got = space.layer(1).states().to_vec();
        got.sort();
        assert_eq!(got, expected);
        // stay: (1,1,3) (1,1,1) (1,2,2) (0,1,2) (1,1,2)
        // cancel: (2,0,3) (2,0,1) (3,0,2) (1,0,2) (2,0,2)
        assert_eq!(got.len(), 10);
    }

    #[test]
    fn terminal_only_when_horizon_elapsed() {
        // one step, but the agent value is bounded by the terminal cross
        let s = OrderbookState::new(1, 1, 2, 10);
        let alpha = 4.0;
        let t = terminal_value(&s, alpha).unwrap();
        assert_eq!(t, -0.5);
        let params = small(ModelParams::const_framework(), 1);
        let sol = solve(s, &params).unwrap();
        assert!(sol.value >= -0.5 - 2.0 - 1e-12);
    }

    #[test]
    fn optimal_dominates_fixed_controls() {
        let params = small(ModelParams::imb_framework(), 8);
        for s in [
            OrderbookState::new(1, 1, 6, 10),
            OrderbookState::new(1, 3, 1, 10),
            OrderbookState::new(2, 0, 2, 10),
        ] {
            let space = Arc::new(reachable(s, &params).unwrap());
            let opt = solve_on(&space, &params).unwrap().value;
            for c in Control::BOTH {
                assert!(opt >= solve_fixed_on(&space, &params, c).unwrap().value - 1e-12);
            }
        }
    }

    #[test]
    fn values_respect_payoff_bound() {
        let params = small(ModelParams::const_framework(), 10);
        let sol = solve(OrderbookState::new(1, 2, 5, 10), &params).unwrap();
        let bound = params.alpha / 2.0 + 1.0;
        for (_, s, v) in sol.values.iter() {
            assert!(v.is_finite() && v.abs() <= bound, "{s}: {v}");
            if s.exec == ExecFlag::Cemetery {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn latency_tau_one_is_bitwise_equal() {
        let params = small(ModelParams::const_framework(), 10);
        let s = OrderbookState::new(1, 2, 1, 10);
        let space = Arc::new(reachable(s, &params).unwrap());
        let v = solve_on(&space, &params).unwrap().value;
        assert_eq!(solve_latency_on(&space, &params, 1).unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn latency_full_hold_equals_best_fixed_control() {
        let params = small(ModelParams::imb_framework(), 6);
        let s = OrderbookState::new(1, 1, 4, 10);
        let space = Arc::new(reachable(s, &params).unwrap());
        let held = solve_latency_on(&space, &params, 6).unwrap();
        let best = Control::BOTH
            .iter()
            .map(|c| solve_fixed_on(&space, &params, *c).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((held - best).abs() < 1e-12);
    }

    #[test]
    fn latency_argument_errors() {
        let params = small(ModelParams::const_framework(), 4);
        let s = OrderbookState::new(1, 1, 1, 0);
        assert!(matches!(solve_latency(s, &params, 5), Err(Error::Argument(_))));
        assert!(matches!(solve_latency(s, &params, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn budget_overflow_names_layer() {
        let mut params = small(ModelParams::const_framework(), 5);
        params.state_budget = 20;
        match reachable(OrderbookState::new(1, 1, 2, 10), &params) {
            Err(Error::StateBudget { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solution_csv_has_header_and_rows() {
        let params = small(ModelParams::const_framework(), 2);
        let sol = solve(OrderbookState::new(1, 1, 2, 10), &params).unwrap();
        let mut buf = Vec::new();
        write_solution_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "layer,q_before,q_after,q_opp,price_half_ticks,exec,value,control"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,1,1,2,20,0,"));
        assert_eq!(text.lines().count(), 1 + sol.values.space().total_states());
    }
}
