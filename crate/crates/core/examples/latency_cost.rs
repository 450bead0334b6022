//! Cost of only being able to revise the order every `tau` steps.
//!
//!     cargo run --release --example latency_cost

use lob_placement::latency::{latency_sweep, write_latency_csv};
use lob_placement::{ModelParams, OrderbookState};

fn main() -> lob_placement::Result<()> {
    let state = OrderbookState::new(1, 2, 1, 10);
    let taus = [1, 2, 3, 4, 5, 6, 8, 10];
    let mut curves = Vec::new();
    for params in [ModelParams::const_framework(), ModelParams::imb_framework()] {
        curves.extend(latency_sweep("latency", state, &params, &taus, &[1.0, 2.0, 4.0])?);
    }
    for c in &curves {
        let costs: Vec<String> = c.points.iter().map(|p| format!("{:.4}", p.latency_cost)).collect();
        println!("{:<5} alpha={} V={:+.4}  cost by tau: {}", c.framework, c.alpha, c.value, costs.join(" "));
    }
    write_latency_csv(&curves, std::io::stdout().lock())?;
    Ok(())
}
