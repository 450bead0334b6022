//! Optimal against always-stay over a scenario's grid of initial books.
//!
//!     cargo run --release --example imbalance_sweep -- crates/core/fixtures/imb_fig4.json

use std::path::PathBuf;

use lob_placement::scenario::{sweep_imbalance, write_rows, ScenarioConfig};

fn main() -> lob_placement::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/const_fig4.json")
    });
    let config = ScenarioConfig::load(&path)?;
    let mut rows = sweep_imbalance(&config)?;
    rows.sort_by(|a, b| a.imbalance.total_cmp(&b.imbalance));

    println!("{:>8} {:>9} {:>9} {:>8} {:>6} {:>6} first", "imb", "V opt", "V stay", "gain", "T opt", "stay%");
    for r in rows.iter().step_by(10) {
        println!(
            "{:>8.3} {:>9.4} {:>9.4} {:>8.4} {:>6.2} {:>6.1} {}",
            r.imbalance, r.v_opt, r.v_nc, r.improvement, r.duration_opt, 100.0 * r.stay_ratio_opt, r.first_control
        );
    }
    let out = std::env::temp_dir().join(format!("{}.csv", config.name));
    write_rows(&rows, std::fs::File::create(&out)?)?;
    println!("all {} rows in {}", rows.len(), out.display());
    Ok(())
}
