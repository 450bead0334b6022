//! Runs the imbalance estimators on a tape generated by the IMB chain: the
//! model should reproduce predictive imbalance and adverse selection of
//! passive fills.
//!
//!     cargo run --release --example empirics_on_model_data [-- OUT_DIR]
//!
//! With `OUT_DIR` the tape is also written as `quotes.csv` and `trades.csv`
//! for the `empirics` subcommand.

use lob_placement::empirics::{
    bin_rank_correlation, neutralized_imbalance, predictive_power, price_profile, synthetic_tape,
    ProfileConfig, SYNTHETIC_STEP_NS,
};
use lob_placement::empirics::write_records;
use lob_placement::ModelParams;

fn main() -> lob_placement::Result<()> {
    let tape = synthetic_tape(&ModelParams::imb_framework(), 5, 5, 1000, 100_000, 7, &["maker", "taker"])?;
    println!("{} quotes, {} trades", tape.quotes.len(), tape.trades.len());
    if let Some(dir) = std::env::args().nth(1).map(std::path::PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        write_records(&tape.quotes, std::fs::File::create(dir.join("quotes.csv"))?)?;
        write_records(&tape.trades, std::fs::File::create(dir.join("trades.csv"))?)?;
    }

    let config = ProfileConfig {
        offsets: [-50, -10, 0, 1, 10, 50].iter().map(|k| k * SYNTHETIC_STEP_NS).collect(),
        ..ProfileConfig::default()
    };
    let power = predictive_power(&tape.trades, &tape.quotes, &config)?;
    println!("\nmid move over the next {} trades by imbalance just before", config.trade_horizon);
    for b in &power.raw {
        let mean = b.mean_move.map_or("-".into(), |m| format!("{m:+.3}"));
        println!("  [{:+.1}, {:+.1})  n={:<6} {mean}", b.lo, b.hi, b.count);
    }
    println!("  rank correlation {:.3}", bin_rank_correlation(&power.raw).unwrap_or(f64::NAN));

    for agent in ["maker", "taker"] {
        let r = neutralized_imbalance(&tape.trades, &tape.quotes, agent)?;
        let p = price_profile(&tape.trades, &tape.quotes, Some(agent), &config)?;
        let curve: Vec<String> = p.points.iter().map(|x| format!("{:+.3}", x.value)).collect();
        println!("\n{agent}: R' {:+.3} (buy {:+.3}, sell {:+.3})", r.r_prime, r.buy_mean, r.sell_mean);
        println!("  signed mid move in spreads at offsets {:?}: {}", config.offsets, curve.join(" "));
    }
    Ok(())
}
