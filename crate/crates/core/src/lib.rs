//! Optimal placement of a single passive buy order on a queue-reactive
//! limit orderbook.
//!
//! The book is summarized by the queue ahead of the order, the queue behind
//! it, the opposite best queue and the mid price. Flows at the first limits
//! are Poisson with intensities that may depend on the imbalance; when a
//! queue depletes the price moves one tick and fresh liquidity appears. At
//! every step the agent either keeps the order in place or pulls it and
//! re-posts it behind the whole queue. At the horizon an unfilled order
//! crosses the spread. The payoff of a fill is the microprice after the fill
//! minus the price paid.
//!
//! - [`model`]: state, intensities, replenishment, imbalance and microprice.
//! - [`kernel`]: one-step transition rows under each control.
//! - [`solver`]: reachable layers and the backward recursion, including the
//!   latency-constrained variant.
//! - [`evaluator`]: exact forward metrics of a policy and Monte Carlo.
//! - [`latency`]: latency-cost curves.
//! - [`empirics`]: imbalance estimators on trade and quote tapes.
//! - [`scenario`]: JSON scenario files and the sweep drivers behind the CLI.
//!
//! Runnable examples, one per capability (`cargo run --release --example NAME`):
//!
//! - `kernel_row`: a transition row before and after normalization.
//! - `solve_state`: optimal value against both fixed controls, cancel share per layer.
//! - `imbalance_sweep`: a scenario file's grid of initial books.
//! - `horizon_effect`: value and stay share as the horizon grows.
//! - `latency_cost`: the price of revising the order only every `tau` steps.
//! - `monte_carlo`: exact forward metrics next to a seeded replay.
//! - `empirics_on_model_data`: the tape estimators on data simulated from the chain.

pub mod empirics;
pub mod error;
pub mod evaluator;
pub mod kernel;
pub mod latency;
pub mod model;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{successors, Control, TransitionEdge};
pub use model::{ExecFlag, IntensityModel, ModelParams, OrderbookState, ReplenishmentModel};
pub use solver::{reachable, solve, solve_fixed, solve_latency, Policy, Solution};
