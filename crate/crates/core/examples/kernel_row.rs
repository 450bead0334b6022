//! Prints one transition row under both controls, before and after
//! normalization.
//!
//!     cargo run --example kernel_row

use lob_placement::kernel::raw_successors;
use lob_placement::{successors, Control, ModelParams, OrderbookState};

fn main() -> lob_placement::Result<()> {
    let params = ModelParams::const_framework();
    let state = OrderbookState::new(1, 1, 2, 10);
    println!("{state}");
    for control in Control::BOTH {
        let raw = raw_successors(&state, control, &params)?;
        let mass: f64 = raw.iter().map(|e| e.prob).sum();
        println!("\n{control}: raw mass {mass:.4}");
        for e in successors(&state, control, &params)? {
            println!("  {:<16} p={:.5} reward={:+.3}  -> {}", format!("{:?}", e.event), e.prob, e.reward, e.next);
        }
    }
    Ok(())
}
