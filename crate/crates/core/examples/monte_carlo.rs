//! Exact forward evaluation of the optimal policy next to a seeded Monte
//! Carlo replay of it.
//!
//!     cargo run --release --example monte_carlo -- 100000 42

use lob_placement::evaluator::{evaluate, simulate_paths, summarize};
use lob_placement::{solve, Control, ModelParams, OrderbookState, Policy};

fn main() -> lob_placement::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(20_000, |a| a.parse().expect("path count"));
    let seed: u64 = args.next().map_or(42, |a| a.parse().expect("seed"));
    let params = ModelParams::imb_framework();
    let state = OrderbookState::new(1, 6, 7, 10);

    let opt = solve(state, &params)?;
    for (name, policy) in [("optimal", opt.policy.clone()), ("always stay", Policy::constant(Control::Stay))] {
        let exact = evaluate(state, &params, &policy)?;
        let paths = simulate_paths(state, &params, &policy, n, seed)?;
        let mc = summarize(&paths);
        println!("{name}");
        println!("  gain      exact {:+.5}  sampled {:+.5} +- {:.5}", exact.expected_gain, mc.mean_gain, mc.se_gain);
        println!("  duration  exact {:8.4}  sampled {:8.4} +- {:.4}", exact.expected_duration, mc.mean_duration, mc.se_duration);
        println!("  stay      exact {:8.4}  sampled {:8.4}", exact.stay_ratio, mc.stay_ratio);
        println!("  passive   exact {:8.4}  sampled {:8.4}", exact.exec_before_horizon_prob, mc.exec_before_horizon_prob);
    }
    Ok(())
}
