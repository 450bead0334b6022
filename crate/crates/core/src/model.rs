//! Orderbook state of the controlled chain, flow intensities, replenishment
//! laws and the scalar formulas (imbalance, microprice) used everywhere else.
//!
//! Prices are kept in half ticks so that the bid `P - 1/2`, the ask `P + 1/2`
//! and one-tick moves are all exact integers. Payoffs are reported in ticks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Execution status of the agent's order (`Exec_n` of the chain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExecFlag {
    /// Absorbing state reached one step after the fill.
    Cemetery,
    NotExecuted,
    /// The order was filled on the transition into this state.
    ExecutedNow,
}

impl ExecFlag {
    pub fn code(self) -> i8 {
        match self {
            ExecFlag::Cemetery => -1,
            ExecFlag::NotExecuted => 0,
            ExecFlag::ExecutedNow => 1,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            -1 => Some(ExecFlag::Cemetery),
            0 => Some(ExecFlag::NotExecuted),
            1 => Some(ExecFlag::ExecutedNow),
            _ => None,
        }
    }
}

/// One state `(Q_before, Q_after, Q_opp, P, Exec)` of the chain.
///
/// The agent's order sits between `q_before` and `q_after` and carries no
/// volume of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderbookState {
    pub q_before: u32,
    pub q_after: u32,
    pub q_opp: u32,
    pub price_half_ticks: i64,
    pub exec: ExecFlag,
}

impl OrderbookState {
    /// Live state with the mid price given in whole ticks.
    pub fn new(q_before: u32, q_after: u32, q_opp: u32, price_ticks: i64) -> Self {
        OrderbookState {
            q_before,
            q_after,
            q_opp,
            price_half_ticks: 2 * price_ticks,
            exec: ExecFlag::NotExecuted,
        }
    }

    pub fn with_exec(mut self, exec: ExecFlag) -> Self {
        self.exec = exec;
        self
    }

    pub fn q_same(&self) -> u32 {
        self.q_before + self.q_after
    }

    pub fn is_live(&self) -> bool {
        self.exec == ExecFlag::NotExecuted
    }

    pub fn price_ticks(&self) -> f64 {
        self.price_half_ticks as f64 / 2.0
    }

    pub fn best_bid_ticks(&self) -> f64 {
        (self.price_half_ticks - 1) as f64 / 2.0
    }

    pub fn best_ask_ticks(&self) -> f64 {
        (self.price_half_ticks + 1) as f64 / 2.0
    }

    pub fn imbalance(&self) -> Result<f64> {
        imbalance(self.q_same(), self.q_opp)
    }

    /// Checks the structural invariants against a queue cap.
    pub fn validate(&self, q_max: u32) -> Result<()> {
        if self.q_same() > q_max || self.q_opp > q_max {
            return Err(Error::Kernel(format!("{self} exceeds queue cap {q_max}")));
        }
        if self.is_live() && (self.q_opp == 0 || self.q_same() == 0) {
            return Err(Error::Kernel(format!("live state {self} has an empty first limit")));
        }
        Ok(())
    }
}

impl fmt::Display for OrderbookState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(before={}, after={}, opp={}, price={}/2, exec={})",
            self.q_before,
            self.q_after,
            self.q_opp,
            self.price_half_ticks,
            self.exec.code()
        )
    }
}

/// `(q_same - q_opp) / (q_same + q_opp)`, seen from the agent's (bid) side.
pub fn imbalance(q_same: u32, q_opp: u32) -> Result<f64> {
    let total = q_same + q_opp;
    if total == 0 {
        return Err(Error::EmptyBook);
    }
    Ok((q_same as f64 - q_opp as f64) / total as f64)
}

/// Long-run expected mid in ticks: `P + alpha/2 * imbalance`.
pub fn microprice(state: &OrderbookState, alpha: f64) -> Result<f64> {
    Ok(state.price_ticks() + 0.5 * alpha * state.imbalance()?)
}

/// Per-unit-time intensities of the four flows at the first limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub same_plus: f64,
    pub same_minus: f64,
    pub opp_plus: f64,
    pub opp_minus: f64,
}

impl Rates {
    pub fn max(&self) -> f64 {
        self.same_plus
            .max(self.same_minus)
            .max(self.opp_plus)
            .max(self.opp_minus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum IntensityModel {
    /// Flat insertion and cancellation rates, identical on both sides.
    Const {
        lambda_plus_0: f64,
        lambda_minus_0: f64,
    },
    /// Rates affine in the share of each queue in the total first-limit depth.
    Imb {
        lambda_plus_0: f64,
        lambda_minus_0: f64,
        beta_plus: f64,
        beta_minus: f64,
    },
}

impl IntensityModel {
    /// Largest rate the model can emit over all queue configurations.
    pub fn sup_rate(&self) -> f64 {
        match *self {
            IntensityModel::Const {
                lambda_plus_0,
                lambda_minus_0,
            } => lambda_plus_0.max(lambda_minus_0),
            IntensityModel::Imb {
                lambda_plus_0,
                lambda_minus_0,
                beta_plus,
                beta_minus,
            } => (lambda_plus_0 + beta_plus).max(lambda_minus_0 + beta_minus),
        }
    }

    fn validate(&self) -> Result<()> {
        let fields: &[f64] = match self {
            IntensityModel::Const {
                lambda_plus_0,
                lambda_minus_0,
            } => &[*lambda_plus_0, *lambda_minus_0],
            IntensityModel::Imb {
                lambda_plus_0,
                lambda_minus_0,
                beta_plus,
                beta_minus,
            } => &[*lambda_plus_0, *lambda_minus_0, *beta_plus, *beta_minus],
        };
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!(
                "intensity parameters must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Evaluates the four intensities at `(q_opp, q_same)`.
///
/// Same-side rates are the opposite-side rates with their arguments swapped,
/// so the book is bid/ask symmetric by construction.
pub fn rates(model: &IntensityModel, q_opp: u32, q_same: u32) -> Result<Rates> {
    let total = q_opp + q_same;
    if total == 0 {
        return Err(Error::EmptyBook);
    }
    match *model {
        IntensityModel::Const {
            lambda_plus_0,
            lambda_minus_0,
        } => Ok(Rates {
            same_plus: lambda_plus_0,
            same_minus: lambda_minus_0,
            opp_plus: lambda_plus_0,
            opp_minus: lambda_minus_0,
        }),
        IntensityModel::Imb {
            lambda_plus_0,
            lambda_minus_0,
            beta_plus,
            beta_minus,
        } => {
            let insert = |own: u32| lambda_plus_0 + beta_plus * own as f64 / total as f64;
            let cancel = |other: u32| lambda_minus_0 + beta_minus * other as f64 / total as f64;
            Ok(Rates {
                same_plus: insert(q_same),
                same_minus: cancel(q_opp),
                opp_plus: insert(q_opp),
                opp_minus: cancel(q_same),
            })
        }
    }
}

/// Quantities revealed and inserted when a first limit depletes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Replenishment {
    pub q_disc: u32,
    pub q_ins: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplenishmentOutcome {
    pub q_disc: u32,
    pub q_ins: u32,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReplenishmentModel {
    Const { q_disc_0: u32, q_ins_0: u32 },
    /// `ceil(q_0 + theta * surviving)` on both quantities.
    Linear {
        q_disc_0: u32,
        q_ins_0: u32,
        theta_disc: f64,
        theta_ins: f64,
    },
    /// Fixed finite joint law over `(q_disc, q_ins)`, independent of the book.
    Discrete { outcomes: Vec<ReplenishmentOutcome> },
}

impl ReplenishmentModel {
    /// Joint law of `(q_disc, q_ins)` after a depletion, with quantities
    /// clamped to `[1, q_max]`.
    pub fn law(&self, surviving_queue: u32, q_max: u32) -> Vec<(Replenishment, f64)> {
        match self {
            ReplenishmentModel::Discrete { outcomes } => outcomes
                .iter()
                .filter(|o| o.prob > 0.0)
                .map(|o| {
                    let r = Replenishment {
                        q_disc: o.q_disc.clamp(1, q_max),
                        q_ins: o.q_ins.clamp(1, q_max),
                    };
                    (r, o.prob)
                })
                .collect(),
            _ => vec![(replenish(self, surviving_queue, q_max), 1.0)],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ReplenishmentModel::Const { .. } => Ok(()),
            ReplenishmentModel::Linear {
                theta_disc,
                theta_ins,
                ..
            } => {
                if !(theta_disc.is_finite() && theta_ins.is_finite())
                    || *theta_disc < 0.0
                    || *theta_ins < 0.0
                {
                    return Err(Error::Config(
                        "replenishment coefficients must be finite and non-negative".into(),
                    ));
                }
                Ok(())
            }
            ReplenishmentModel::Discrete { outcomes } => {
                if outcomes.iter().any(|o| !(o.prob >= 0.0 && o.prob.is_finite())) {
                    return Err(Error::Config("replenishment probabilities must be >= 0".into()));
                }
                let total: f64 = outcomes.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "replenishment probabilities sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Point-mass replenishment for the deterministic laws. `surviving_queue` is
/// the pre-transition size of the queue that did not deplete.
///
/// For [`ReplenishmentModel::Discrete`] this returns the most likely outcome;
/// use [`ReplenishmentModel::law`] for the full distribution.
pub fn replenish(model: &ReplenishmentModel, surviving_queue: u32, q_max: u32) -> Replenishment {
    let clamp = |v: u32| v.clamp(1, q_max.max(1));
    match model {
        ReplenishmentModel::Const { q_disc_0, q_ins_0 } => Replenishment {
            q_disc: clamp(*q_disc_0),
            q_ins: clamp(*q_ins_0),
        },
        ReplenishmentModel::Linear {
            q_disc_0,
            q_ins_0,
            theta_disc,
            theta_ins,
        } => {
            let affine = |base: u32, theta: f64| {
                let v = (base as f64 + theta * surviving_queue as f64).ceil();
                clamp(v.min(u32::MAX as f64) as u32)
            };
            Replenishment {
                q_disc: affine(*q_disc_0, *theta_disc),
                q_ins: affine(*q_ins_0, *theta_ins),
            }
        }
        ReplenishmentModel::Discrete { outcomes } => outcomes
            .iter()
            .max_by(|a, b| a.prob.total_cmp(&b.prob))
            .map(|o| Replenishment {
                q_disc: clamp(o.q_disc),
                q_ins: clamp(o.q_ins),
            })
            .unwrap_or(Replenishment { q_disc: 1, q_ins: 1 }),
    }
}

fn default_dt() -> f64 {
    1.0
}

fn default_lot() -> u32 {
    1
}

fn default_q_max() -> u32 {
    ModelParams::DEFAULT_Q_MAX
}

fn default_state_budget() -> usize {
    ModelParams::DEFAULT_STATE_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub intensity: IntensityModel,
    pub replenishment: ReplenishmentModel,
    /// Sensitivity of the microprice to the imbalance.
    pub alpha: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Number of steps `f` before the forced spread cross.
    pub horizon: usize,
    #[serde(default = "default_lot")]
    pub lot: u32,
    #[serde(default = "default_q_max")]
    pub q_max: u32,
    /// Largest number of states any single layer may hold.
    #[serde(default = "default_state_budget")]
    pub state_budget: usize,
}

impl ModelParams {
    pub const DEFAULT_Q_MAX: u32 = 256;
    pub const DEFAULT_STATE_BUDGET: usize = 5_000_000;

    /// Constant intensities and constant replenishment with the published
    /// values: `lambda+ = 0.06`, `lambda- = 0.5`, `alpha = 4`, `Q_disc = 6`,
    /// `Q_ins = 4`, `f = 20`.
    pub fn const_framework() -> Self {
        ModelParams {
            intensity: IntensityModel::Const {
                lambda_plus_0: 0.06,
                lambda_minus_0: 0.5,
            },
            replenishment: ReplenishmentModel::Const {
                q_disc_0: 6,
                q_ins_0: 4,
            },
            alpha: 4.0,
            dt: 1.0,
            horizon: 20,
            lot: 1,
            q_max: Self::DEFAULT_Q_MAX,
            state_budget: Self::DEFAULT_STATE_BUDGET,
        }
    }

    /// Imbalance-driven intensities and linear replenishment with the
    /// published values.
    pub fn imb_framework() -> Self {
        ModelParams {
            intensity: IntensityModel::Imb {
                lambda_plus_0: 0.06,
                lambda_minus_0: 0.5,
                beta_plus: 0.075,
                beta_minus: 0.25,
            },
            replenishment: ReplenishmentModel::Linear {
                q_disc_0: 6,
                q_ins_0: 2,
                theta_disc: 3.0,
                theta_ins: 0.5,
            },
            ..Self::const_framework()
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_q_max(mut self, q_max: u32) -> Self {
        self.q_max = q_max;
        self
    }

    pub fn rates(&self, q_opp: u32, q_same: u32) -> Result<Rates> {
        rates(&self.intensity, q_opp, q_same)
    }

    pub fn validate(&self) -> Result<()> {
        self.intensity.validate()?;
        self.replenishment.validate()?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if self.lot != 1 {
            return Err(Error::Config(format!("only unit lots are supported, got {}", self.lot)));
        }
        if self.q_max == 0 {
            return Err(Error::Config("q_max must be at least 1".into()));
        }
        if self.intensity.sup_rate() * self.dt >= 1.0 {
            return Err(Error::Config(format!(
                "per-step event probability {} is not below 1",
                self.intensity.sup_rate() * self.dt
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance(2, 2).unwrap(), 0.0);
        assert_eq!(imbalance(3, 1).unwrap(), 0.5);
        assert!(matches!(imbalance(0, 0), Err(Error::EmptyBook)));
    }

    #[test]
    fn microprice_examples() {
        let flat = OrderbookState::new(1, 1, 2, 10);
        assert_eq!(microprice(&flat, 4.0).unwrap(), 10.0);
        let bid_heavy = OrderbookState::new(1, 2, 1, 10);
        assert_eq!(microprice(&bid_heavy, 4.0).unwrap(), 11.0);
        let ask_heavy = OrderbookState::new(1, 0, 11, 10);
        assert!((microprice(&ask_heavy, 4.0).unwrap() - (10.0 - 5.0 / 3.0)).abs() < 1e-12);
        let empty = OrderbookState::new(0, 0, 0, 10).with_exec(ExecFlag::Cemetery);
        assert!(microprice(&empty, 4.0).is_err());
    }

    #[test]
    fn const_rates_are_flat() {
        let model = ModelParams::const_framework().intensity;
        for (a, b) in [(1, 1), (2, 9), (12, 3)] {
            let r = rates(&model, a, b).unwrap();
            assert_eq!(
                r,
                Rates {
                    same_plus: 0.06,
                    same_minus: 0.5,
                    opp_plus: 0.06,
                    opp_minus: 0.5
                }
            );
        }
    }

    #[test]
    fn imb_rates_at_zero_imbalance() {
        let model = ModelParams::imb_framework().intensity;
        let r = rates(&model, 4, 4).unwrap();
        assert!((r.opp_plus - 0.0975).abs() < 1e-15);
        assert!((r.opp_minus - 0.625).abs() < 1e-15);
        assert!(rates(&model, 0, 0).is_err());
    }

    #[test]
    fn imb_rates_symmetry_grid() {
        let model = ModelParams::imb_framework().intensity;
        for a in 1..=12 {
            for b in 1..=12 {
                let r = rates(&model, a, b).unwrap();
                let swapped = rates(&model, b, a).unwrap();
                assert_eq!(r.opp_plus, swapped.same_plus);
                assert_eq!(r.opp_minus, swapped.same_minus);
            }
        }
    }

    #[test]
    fn replenish_examples() {
        let c = ReplenishmentModel::Const { q_disc_0: 6, q_ins_0: 4 };
        assert_eq!(replenish(&c, 0, 32), Replenishment { q_disc: 6, q_ins: 4 });
        assert_eq!(replenish(&c, 17, 32), Replenishment { q_disc: 6, q_ins: 4 });
        let l = ModelParams::imb_framework().replenishment;
        assert_eq!(replenish(&l, 2, 32), Replenishment { q_disc: 12, q_ins: 3 });
        assert_eq!(replenish(&l, 0, 32), Replenishment { q_disc: 6, q_ins: 2 });
        // 6 + 3 * 20 = 66 is clamped
        assert_eq!(replenish(&l, 20, 32).q_disc, 32);
    }

    #[test]
    fn discrete_law_filters_zero_mass() {
        let d = ReplenishmentModel::Discrete {
            outcomes: vec![
                ReplenishmentOutcome { q_disc: 3, q_ins: 1, prob: 0.25 },
                ReplenishmentOutcome { q_disc: 5, q_ins: 2, prob: 0.75 },
                ReplenishmentOutcome { q_disc: 9, q_ins: 9, prob: 0.0 },
            ],
        };
        let law = d.law(4, 32);
        assert_eq!(law.len(), 2);
        assert_eq!(replenish(&d, 0, 32), Replenishment { q_disc: 5, q_ins: 2 });
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::const_framework().validate().is_ok());
        assert!(ModelParams::imb_framework().validate().is_ok());
        assert!(ModelParams::const_framework().with_horizon(0).validate().is_err());
        let mut fast = ModelParams::const_framework();
        fast.dt = 2.0;
        assert!(fast.validate().is_err());
    }

    #[test]
    fn params_json_defaults() {
        let json = r#"{
            "intensity": {"kind": "const", "lambda_plus_0": 0.06, "lambda_minus_0": 0.5},
            "replenishment": {"kind": "const", "q_disc_0": 6, "q_ins_0": 4},
            "alpha": 4.0,
            "horizon": 20
        }"#;
        let p: ModelParams = serde_json::from_str(json).unwrap();
        assert_eq!(p, ModelParams::const_framework());
    }

    proptest! {
        #[test]
        fn microprice_within_half_alpha(qb in 0u32..40, qa in 0u32..40, qo in 1u32..40,
                                        price in -50i64..50, alpha in 0.0f64..10.0) {
            let s = OrderbookState::new(qb, qa, qo, price);
            let m = microprice(&s, alpha).unwrap();
            prop_assert!((m - s.price_ticks()).abs() <= alpha / 2.0 + 1e-12);
        }

        #[test]
        fn microprice_monotone_in_queues(qs in 1u32..40, qo in 1u32..40) {
            let alpha = 4.0;
            let base = microprice(&OrderbookState::new(qs, 0, qo, 0), alpha).unwrap();
            let more_same = microprice(&OrderbookState::new(qs + 1, 0, qo, 0), alpha).unwrap();
            let more_opp = microprice(&OrderbookState::new(qs, 0, qo + 1, 0), alpha).unwrap();
            prop_assert!(more_same > base);
            prop_assert!(more_opp < base);
        }

        #[test]
        fn linear_replenish_monotone(s in 0u32..60, theta_d in 0.0f64..4.0, theta_i in 0.0f64..4.0) {
            let m = ReplenishmentModel::Linear { q_disc_0: 2, q_ins_0: 1, theta_disc: theta_d, theta_ins: theta_i };
            let lo = replenish(&m, s, 64);
            let hi = replenish(&m, s + 1, 64);
            prop_assert!(hi.q_disc >= lo.q_disc && hi.q_ins >= lo.q_ins);
            prop_assert!(lo.q_disc >= 1 && lo.q_disc <= 64);
        }
    }
}
