//! One-step transition law of the controlled chain.
//!
//! Within a step at most one of the four flows fires. An event of flow `i`
//! has weight `a_i * prod_{j != i} (1 - a_j)` with `a_i = lambda_i * dt`, and
//! "nothing happens" has weight `prod_j (1 - a_j)`. Conjunctions of two or
//! more events are dropped, so a raw row sums to slightly less than one;
//! [`successors`] renormalizes it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{microprice, ExecFlag, ModelParams, OrderbookState};

/// Control applied by the agent over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    /// Keep the order where it is.
    Stay,
    /// Pull the order and re-post it behind the whole bid queue; it cannot be
    /// filled during this step.
    Cancel,
}

impl Control {
    pub const BOTH: [Control; 2] = [Control::Stay, Control::Cancel];

    pub fn as_str(self) -> &'static str {
        match self {
            Control::Stay => "stay",
            Control::Cancel => "cancel",
        }
    }
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Control {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stay" | "c" => Ok(Control::Stay),
            "cancel" | "s" => Ok(Control::Cancel),
            other => Err(Error::Argument(format!("unknown control {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeEvent {
    OppAdd,
    OppCancel,
    SameAdd,
    SameCancel,
    /// The ask queue depleted.
    PriceUp,
    /// The bid queue depleted through the agent's order.
    PriceDownExec,
    /// The bid queue depleted while the order was pulled.
    PriceDownNoExec,
    /// The agent was filled without a price move.
    ExecPlain,
    Nothing,
    Absorbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEdge {
    pub next: OrderbookState,
    pub prob: f64,
    /// Payoff in ticks banked on this edge; only passive fills carry one.
    pub reward: f64,
    pub event: EdgeEvent,
}

/// Where the agent's order sits after applying `control`.
fn reposition(q_before: u32, q_after: u32, control: Control) -> (u32, u32) {
    match control {
        Control::Stay => (q_before, q_after),
        Control::Cancel => (q_before + q_after, 0),
    }
}

/// Pre-normalization row: the product-form weights of every single-event
/// transition plus "nothing happens".
pub fn raw_successors(
    state: &OrderbookState,
    control: Control,
    params: &ModelParams,
) -> Result<Vec<TransitionEdge>> {
    if !state.is_live() {
        return Ok(vec![TransitionEdge {
            next: state.with_exec(ExecFlag::Cemetery),
            prob: 1.0,
            reward: 0.0,
            event: EdgeEvent::Absorbed,
        }]);
    }
    state.validate(params.q_max)?;

    let OrderbookState {
        q_before,
        q_after,
        q_opp,
        price_half_ticks: price,
        ..
    } = *state;
    let q_same = q_before + q_after;
    let q_max = params.q_max;
    let alpha = params.alpha;

    let r = params.rates(q_opp, q_same)?;
    let a_sp = r.same_plus * params.dt;
    let a_sm = r.same_minus * params.dt;
    let a_op = r.opp_plus * params.dt;
    let a_om = r.opp_minus * params.dt;
    let w_opp_add = a_op * (1.0 - a_om) * (1.0 - a_sm) * (1.0 - a_sp);
    let w_opp_cancel = a_om * (1.0 - a_op) * (1.0 - a_sm) * (1.0 - a_sp);
    let w_same_add = a_sp * (1.0 - a_op) * (1.0 - a_om) * (1.0 - a_sm);
    let w_same_cancel = a_sm * (1.0 - a_op) * (1.0 - a_om) * (1.0 - a_sp);
    let mut w_nothing = (1.0 - a_sm) * (1.0 - a_op) * (1.0 - a_om) * (1.0 - a_sp);

    let (stay_before, stay_after) = reposition(q_before, q_after, control);
    let live = |q_before, q_after, q_opp, price_half_ticks| OrderbookState {
        q_before,
        q_after,
        q_opp,
        price_half_ticks,
        exec: ExecFlag::NotExecuted,
    };

    let mut edges = Vec::with_capacity(6);
    let mut push = |next: OrderbookState, prob: f64, reward: f64, event: EdgeEvent| {
        if prob > 0.0 {
            edges.push(TransitionEdge {
                next,
                prob,
                reward,
                event,
            });
        }
    };

    if q_opp < q_max {
        push(
            live(stay_before, stay_after, q_opp + 1, price),
            w_opp_add,
            0.0,
            EdgeEvent::OppAdd,
        );
    } else {
        w_nothing += w_opp_add;
    }

    if q_opp > 1 {
        push(
            live(stay_before, stay_after, q_opp - 1, price),
            w_opp_cancel,
            0.0,
            EdgeEvent::OppCancel,
        );
    } else {
        for (rep, p) in params.replenishment.law(q_same, q_max) {
            push(
                live(rep.q_ins, 0, rep.q_disc, price + 2),
                w_opp_cancel * p,
                0.0,
                EdgeEvent::PriceUp,
            );
        }
    }

    if q_same < q_max {
        let (b, a) = match control {
            Control::Stay => (q_before, q_after + 1),
            Control::Cancel => (q_same + 1, 0),
        };
        push(live(b, a, q_opp, price), w_same_add, 0.0, EdgeEvent::SameAdd);
    } else {
        w_nothing += w_same_add;
    }

    let old_bid = (price - 1) as f64 / 2.0;
    match control {
        Control::Stay if q_before > 1 || (q_before == 1 && q_after >= 1) => push(
            live(q_before - 1, q_after, q_opp, price),
            w_same_cancel,
            0.0,
            EdgeEvent::SameCancel,
        ),
        Control::Stay if q_before == 0 && q_after > 1 => {
            let next = live(0, q_after - 1, q_opp, price).with_exec(ExecFlag::ExecutedNow);
            let reward = microprice(&next, alpha)? - old_bid;
            push(next, w_same_cancel, reward, EdgeEvent::ExecPlain);
        }
        Control::Stay => {
            for (rep, p) in params.replenishment.law(q_opp, q_max) {
                let next = live(rep.q_disc, 0, rep.q_ins, price - 2).with_exec(ExecFlag::ExecutedNow);
                let reward = microprice(&next, alpha)? - old_bid;
                push(next, w_same_cancel * p, reward, EdgeEvent::PriceDownExec);
            }
        }
        Control::Cancel if q_same > 1 => push(
            live(q_same - 1, 0, q_opp, price),
            w_same_cancel,
            0.0,
            EdgeEvent::SameCancel,
        ),
        Control::Cancel => {
            for (rep, p) in params.replenishment.law(q_opp, q_max) {
                push(
                    live(rep.q_disc, 0, rep.q_ins, price - 2),
                    w_same_cancel * p,
                    0.0,
                    EdgeEvent::PriceDownNoExec,
                );
            }
        }
    }

    push(
        live(stay_before, stay_after, q_opp, price),
        w_nothing,
        0.0,
        EdgeEvent::Nothing,
    );
    Ok(edges)
}

/// Rescales a row so its probabilities sum to one.
pub fn normalize(mut edges: Vec<TransitionEdge>) -> Result<Vec<TransitionEdge>> {
    if edges.is_empty() {
        return Err(Error::Kernel("cannot normalize an empty row".into()));
    }
    let total: f64 = edges.iter().map(|e| e.prob).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Kernel(format!("row mass {total} is not positive")));
    }
    if total != 1.0 {
        for e in &mut edges {
            e.prob /= total;
        }
    }
    Ok(edges)
}

/// Normalized transition row of `state` under `control`.
pub fn successors(
    state: &OrderbookState,
    control: Control,
    params: &ModelParams,
) -> Result<Vec<TransitionEdge>> {
    normalize(raw_successors(state, control, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReplenishmentModel;

    fn const_params() -> ModelParams {
        ModelParams::const_framework()
    }

    fn find(edges: &[TransitionEdge], event: EdgeEvent) -> &TransitionEdge {
        edges.iter().find(|e| e.event == event).unwrap()
    }

    #[test]
    fn executed_states_are_absorbed() {
        let p = const_params();
        for exec in [ExecFlag::Cemetery, ExecFlag::ExecutedNow] {
            let s = OrderbookState::new(3, 2, 4, 10).with_exec(exec);
            for c in Control::BOTH {
                let row = successors(&s, c, &p).unwrap();
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].next, s.with_exec(ExecFlag::Cemetery));
                assert_eq!(row[0].prob, 1.0);
                assert_eq!(row[0].reward, 0.0);
            }
        }
    }

    #[test]
    fn const_row_weights() {
        let p = const_params();
        let s = OrderbookState::new(1, 1, 2, 10);
        let raw = raw_successors(&s, Control::Stay, &p).unwrap();
        assert_eq!(raw.len(), 5);
        assert!((find(&raw, EdgeEvent::OppAdd).prob - 0.01410).abs() < 1e-12);
        assert!((find(&raw, EdgeEvent::Nothing).prob - 0.2209).abs() < 1e-12);
        // 2 * 0.0141 + 2 * 0.2209 + 0.2209 = 0.6909 (independently hand summed)
        let total: f64 = raw.iter().map(|e| e.prob).sum();
        assert!((total - 0.6909).abs() < 1e-12);
        let norm = successors(&s, Control::Stay, &p).unwrap();
        for (r, n) in raw.iter().zip(&norm) {
            assert!((n.prob - r.prob / 0.6909).abs() < 1e-14);
        }
    }

    #[test]
    fn cancel_same_side_cancellation_matches_stay_weight() {
        let p = const_params();
        let s = OrderbookState::new(1, 1, 2, 10);
        let stay = raw_successors(&s, Control::Stay, &p).unwrap();
        let cancel = raw_successors(&s, Control::Cancel, &p).unwrap();
        let st = find(&stay, EdgeEvent::SameCancel);
        let ca = find(&cancel, EdgeEvent::SameCancel);
        assert_eq!(ca.next, OrderbookState::new(1, 0, 2, 10));
        assert_eq!(st.next, OrderbookState::new(0, 1, 2, 10));
        assert_eq!(ca.prob, st.prob);
    }

    #[test]
    fn plain_execution_reward() {
        let p = const_params();
        let s = OrderbookState::new(0, 3, 2, 10);
        let row = successors(&s, Control::Stay, &p).unwrap();
        let e = find(&row, EdgeEvent::ExecPlain);
        assert_eq!(e.next, OrderbookState::new(0, 2, 2, 10).with_exec(ExecFlag::ExecutedNow));
        // microprice 10 + 2 * 0 = 10, bid 9.5
        assert!((e.reward - 0.5).abs() < 1e-15);
        let cancel = successors(&s, Control::Cancel, &p).unwrap();
        assert_eq!(find(&cancel, EdgeEvent::SameCancel).next, OrderbookState::new(2, 0, 2, 10));
        assert!(cancel.iter().all(|e| e.reward == 0.0));
    }

    #[test]
    fn depletion_through_the_order() {
        let p = const_params();
        let s = OrderbookState::new(0, 1, 3, 10);
        let row = successors(&s, Control::Stay, &p).unwrap();
        let e = find(&row, EdgeEvent::PriceDownExec);
        assert_eq!(e.next, OrderbookState::new(6, 0, 4, 9).with_exec(ExecFlag::ExecutedNow));
        // microprice 9 + 2 * (2 / 10) = 9.4 against the old bid 9.5
        assert!((e.reward - (-0.1)).abs() < 1e-12);

        let cancel = successors(&s, Control::Cancel, &p).unwrap();
        let e = find(&cancel, EdgeEvent::PriceDownNoExec);
        assert_eq!(e.next, OrderbookState::new(6, 0, 4, 9));
        assert_eq!(e.reward, 0.0);
    }

    #[test]
    fn ask_depletion_moves_price_up_under_both_controls() {
        let p = ModelParams::imb_framework();
        let s = OrderbookState::new(2, 1, 1, 10);
        for c in Control::BOTH {
            let row = successors(&s, c, &p).unwrap();
            let e = find(&row, EdgeEvent::PriceUp);
            // surviving bid queue is 3: ins = ceil(2 + 1.5) = 4, disc = ceil(6 + 9) = 15
            assert_eq!(e.next, OrderbookState::new(4, 0, 15, 11));
        }
    }

    #[test]
    fn cap_folds_insertions_into_nothing() {
        let p = const_params().with_q_max(4);
        let s = OrderbookState::new(2, 2, 4, 0);
        let row = raw_successors(&s, Control::Stay, &p).unwrap();
        assert!(row.iter().all(|e| e.event != EdgeEvent::OppAdd && e.event != EdgeEvent::SameAdd));
        let uncapped = raw_successors(&s, Control::Stay, &const_params()).unwrap();
        let a: f64 = row.iter().map(|e| e.prob).sum();
        let b: f64 = uncapped.iter().map(|e| e.prob).sum();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn discrete_replenishment_splits_depletion_edges() {
        let mut p = const_params();
        p.replenishment = ReplenishmentModel::Discrete {
            outcomes: vec![
                crate::model::ReplenishmentOutcome { q_disc: 2, q_ins: 1, prob: 0.5 },
                crate::model::ReplenishmentOutcome { q_disc: 4, q_ins: 3, prob: 0.5 },
            ],
        };
        let s = OrderbookState::new(1, 0, 1, 0);
        let row = successors(&s, Control::Stay, &p).unwrap();
        assert_eq!(row.iter().filter(|e| e.event == EdgeEvent::PriceUp).count(), 2);
        assert_eq!(row.iter().filter(|e| e.event == EdgeEvent::PriceDownExec).count(), 2);
        let total: f64 = row.iter().map(|e| e.prob).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_live_state_is_rejected() {
        let p = const_params();
        assert!(successors(&OrderbookState::new(1, 1, 0, 0), Control::Stay, &p).is_err());
        assert!(successors(&OrderbookState::new(0, 0, 3, 0), Control::Cancel, &p).is_err());
    }

    #[test]
    fn normalize_examples() {
        let s = OrderbookState::new(1, 1, 1, 0);
        let one = vec![TransitionEdge {
            next: s,
            prob: 0.5,
            reward: 0.0,
            event: EdgeEvent::Nothing,
        }];
        assert_eq!(normalize(one).unwrap()[0].prob, 1.0);
        assert!(normalize(Vec::new()).is_err());
    }

    #[test]
    fn control_parsing() {
        assert_eq!("stay".parse::<Control>().unwrap(), Control::Stay);
        assert_eq!("S".parse::<Control>().unwrap(), Control::Cancel);
        assert!("hold".parse::<Control>().is_err());
    }
}
