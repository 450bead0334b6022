//! Optimal stay/cancel policy for one initial book, compared with holding
//! either control throughout.
//!
//!     cargo run --release --example solve_state -- 1 2 1 20

use std::sync::Arc;

use lob_placement::solver::{reachable, solve_fixed_on, solve_on};
use lob_placement::{Control, ModelParams, OrderbookState};

fn main() -> lob_placement::Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let [b, a, o, f] = match args.as_slice() {
        [b, a, o, f] => [*b, *a, *o, *f],
        _ => [1, 2, 1, 20],
    };
    let state = OrderbookState::new(b, a, o, 10);

    for params in [ModelParams::const_framework(), ModelParams::imb_framework()] {
        let params = params.with_horizon(f as usize);
        let space = Arc::new(reachable(state, &params)?);
        let opt = solve_on(&space, &params)?;
        let stay = solve_fixed_on(&space, &params, Control::Stay)?;
        let cancel = solve_fixed_on(&space, &params, Control::Cancel)?;
        println!(
            "{}: {} states, V={:+.5}  always stay {:+.5}  always cancel {:+.5}  first move {}",
            lob_placement::latency::framework_name(&params),
            space.total_states(),
            opt.value,
            stay.value,
            cancel.value,
            opt.policy.control(0, &state).unwrap_or(Control::Stay),
        );

        // share of live states that cancel, layer by layer
        let shares: Vec<String> = (0..params.horizon)
            .map(|n| {
                let live: Vec<_> = space.layer(n).states().iter().filter(|s| s.is_live()).collect();
                let cancels = live.iter().filter(|s| opt.policy.control(n, s) == Some(Control::Cancel)).count();
                format!("{:.2}", cancels as f64 / live.len() as f64)
            })
            .collect();
        println!("  cancel share of live states per layer: {}", shares.join(" "));
    }
    Ok(())
}
