//! Value of the optimal policy as the horizon grows, and how often it cancels
//! as expiry approaches.
//!
//!     cargo run --release --example horizon_effect

use lob_placement::scenario::{sweep_horizon, GridSpec, ScenarioConfig, SweepKind};
use lob_placement::ModelParams;

fn main() -> lob_placement::Result<()> {
    for params in [ModelParams::const_framework(), ModelParams::imb_framework()] {
        let config = ScenarioConfig {
            name: "horizon".into(),
            params,
            // imbalance 0.5
            grid: GridSpec::single(1, 2, 1, 10),
            sweep: SweepKind::Horizon,
            output: None,
            seed: 0,
            n_paths: 0,
            horizons: Some(vec![1, 2, 5, 10, 15, 20]),
            taus: None,
            alphas: None,
        };
        println!("{}", config.framework());
        for r in sweep_horizon(&config)? {
            let stay = r.stay_share.map_or("-".into(), |s| format!("{:.3}", s));
            println!("  {:>2} steps left  V={:+.4}  V stay={:+.4}  stay share {stay}", r.remaining, r.v_opt, r.v_nc);
        }
    }
    Ok(())
}
