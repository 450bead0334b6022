//! Latency cost `V - V_tau` of an agent that can only revise its control every
//! `tau` steps.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IntensityModel, ModelParams, OrderbookState};
use crate::solver::{reachable, solve_latency_on, solve_on};

/// Latency factors used when none are given.
pub const DEFAULT_TAUS: [usize; 8] = [1, 2, 3, 4, 5, 6, 8, 10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub tau: usize,
    pub v_tau: f64,
    pub latency_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyCurve {
    pub scenario: String,
    pub framework: String,
    pub alpha: f64,
    /// Unconstrained optimal value `V`.
    pub value: f64,
    pub points: Vec<LatencyPoint>,
}

impl LatencyCurve {
    pub fn cost(&self, tau: usize) -> Option<f64> {
        self.points.iter().find(|p| p.tau == tau).map(|p| p.latency_cost)
    }
}

pub fn framework_name(params: &ModelParams) -> &'static str {
    match params.intensity {
        IntensityModel::Const { .. } => "CONST",
        IntensityModel::Imb { .. } => "IMB",
    }
}

/// One curve per `alpha`; the reachable set is built once and shared.
pub fn latency_sweep(
    scenario: &str,
    initial: OrderbookState,
    params: &ModelParams,
    taus: &[usize],
    alphas: &[f64],
) -> Result<Vec<LatencyCurve>> {
    if alphas.is_empty() {
        return Err(Error::Argument("at least one alpha is required".into()));
    }
    if let Some(bad) = taus.iter().find(|&&t| t == 0 || t > params.horizon) {
        return Err(Error::Argument(format!(
            "latency factor {bad} must lie in [1, {}]",
            params.horizon
        )));
    }
    let space = Arc::new(reachable(initial, params)?);
    alphas
        .par_iter()
        .map(|&alpha| {
            let p = params.clone().with_alpha(alpha);
            let value = solve_on(&space, &p)?.value;
            let points = taus
                .par_iter()
                .map(|&tau| {
                    let v_tau = if tau == 1 { value } else { solve_latency_on(&space, &p, tau)? };
                    Ok(LatencyPoint {
                        tau,
                        v_tau,
                        latency_cost: value - v_tau,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LatencyCurve {
                scenario: scenario.to_string(),
                framework: framework_name(params).to_string(),
                alpha,
                value,
                points,
            })
        })
        .collect()
}

/// `scenario,framework,alpha,tau,v,v_tau,latency_cost`, one row per point.
pub fn write_latency_csv<W: Write>(curves: &[LatencyCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "framework", "alpha", "tau", "v", "v_tau", "latency_cost"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.scenario.clone(),
                c.framework.clone(),
                c.alpha.to_string(),
                p.tau.to_string(),
                format!("{:.12}", c.value),
                format!("{:.12}", p.v_tau),
                format!("{:.12}", p.latency_cost),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_one_costs_nothing() {
        let params = ModelParams::const_framework().with_horizon(8);
        let s = OrderbookState::new(1, 2, 1, 10);
        let curves = latency_sweep("t", s, &params, &[1, 2, 4, 8], &[2.0, 4.0]).unwrap();
        assert_eq!(curves.len(), 2);
        for c in &curves {
            assert_eq!(c.cost(1), Some(0.0));
            let costs: Vec<f64> = c.points.iter().map(|p| p.latency_cost).collect();
            for w in costs.windows(2) {
                assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let params = ModelParams::const_framework().with_horizon(4);
        let s = OrderbookState::new(1, 1, 1, 10);
        assert!(latency_sweep("t", s, &params, &[1, 5], &[4.0]).is_err());
        assert!(latency_sweep("t", s, &params, &[1], &[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let params = ModelParams::const_framework().with_horizon(4);
        let s = OrderbookState::new(1, 1, 1, 10);
        let curves = latency_sweep("tau-grid", s, &params, &[1, 2], &[4.0]).unwrap();
        let mut buf = Vec::new();
        write_latency_csv(&curves, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scenario,framework,alpha,tau,v,v_tau,latency_cost");
        assert!(lines[1].starts_with("tau-grid,CONST,4,1,"));
        assert_eq!(lines.len(), 3);
    }
}
