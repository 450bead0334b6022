//! Reference model transcribed by hand from the event table of the chain, sharing
//! no code with the library beyond the parameter structs. Prices are kept in
//! plain ticks as `f64` (moves are whole ticks, so arithmetic stays exact), and
//! values come from an unmemoized expectimax over the full event tree.

#![allow(dead_code)]

use lob_placement::{IntensityModel, ModelParams, ReplenishmentModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Book {
    pub bef: u32,
    pub aft: u32,
    pub opp: u32,
    pub p: f64,
    /// 0 live, 1 filled on the incoming step, -1 frozen.
    pub e: i8,
}

impl Book {
    pub fn new(bef: u32, aft: u32, opp: u32, p: f64) -> Self {
        Book { bef, aft, opp, p, e: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ctl {
    C,
    S,
}

/// `(same+, same-, opp+, opp-)` per step.
fn lambdas(m: &ModelParams, opp: u32, same: u32) -> [f64; 4] {
    let tot = (opp + same) as f64;
    match m.intensity {
        IntensityModel::Const { lambda_plus_0, lambda_minus_0 } => {
            [lambda_plus_0, lambda_minus_0, lambda_plus_0, lambda_minus_0]
        }
        IntensityModel::Imb { lambda_plus_0, lambda_minus_0, beta_plus, beta_minus } => [
            lambda_plus_0 + beta_plus * same as f64 / tot,
            lambda_minus_0 + beta_minus * opp as f64 / tot,
            lambda_plus_0 + beta_plus * opp as f64 / tot,
            lambda_minus_0 + beta_minus * same as f64 / tot,
        ],
    }
}

/// `(q_disc, q_ins)` after a depletion, given the queue that survived it.
fn refill(m: &ModelParams, survivor: u32) -> (u32, u32) {
    match &m.replenishment {
        ReplenishmentModel::Const { q_disc_0, q_ins_0 } => (*q_disc_0, *q_ins_0),
        ReplenishmentModel::Linear { q_disc_0, q_ins_0, theta_disc, theta_ins } => (
            (*q_disc_0 as f64 + theta_disc * survivor as f64).ceil() as u32,
            (*q_ins_0 as f64 + theta_ins * survivor as f64).ceil() as u32,
        ),
        other => panic!("oracle covers point-mass refills only, got {other:?}"),
    }
}

pub fn micro(b: &Book, alpha: f64) -> f64 {
    let same = (b.bef + b.aft) as f64;
    let opp = b.opp as f64;
    b.p + alpha / 2.0 * (same - opp) / (same + opp)
}

/// Successors `(next, probability, reward)` of one step, normalized.
pub fn step(b: &Book, ctl: Ctl, m: &ModelParams) -> Vec<(Book, f64, f64)> {
    if b.e != 0 {
        return vec![(Book { e: -1, ..*b }, 1.0, 0.0)];
    }
    let dt = m.dt;
    let [sp, sm, op, om] = lambdas(m, b.opp, b.bef + b.aft);
    let (sp, sm, op, om) = (sp * dt, sm * dt, op * dt, om * dt);
    let none = (1.0 - sp) * (1.0 - sm) * (1.0 - op) * (1.0 - om);
    let only = |x: f64| x / (1.0 - x) * none;
    // cancel merges the order behind the whole bid queue
    let merged = |bef: u32, aft: u32| match ctl {
        Ctl::C => (bef, aft),
        Ctl::S => (bef + aft, 0),
    };
    let mut out: Vec<(Book, f64, f64)> = Vec::new();

    let (bf, af) = merged(b.bef, b.aft);
    out.push((Book { bef: bf, aft: af, opp: b.opp + 1, ..*b }, only(op), 0.0));

    if b.opp > 1 {
        out.push((Book { bef: bf, aft: af, opp: b.opp - 1, ..*b }, only(om), 0.0));
    } else {
        let (disc, ins) = refill(m, b.bef + b.aft);
        out.push((Book { bef: ins, aft: 0, opp: disc, p: b.p + 1.0, e: 0 }, only(om), 0.0));
    }

    let grown = match ctl {
        Ctl::C => (b.bef, b.aft + 1),
        Ctl::S => (b.bef + b.aft + 1, 0),
    };
    out.push((Book { bef: grown.0, aft: grown.1, ..*b }, only(sp), 0.0));

    let w = only(sm);
    let total = b.bef + b.aft;
    if total == 1 {
        let (disc, ins) = refill(m, b.opp);
        let next = Book { bef: disc, aft: 0, opp: ins, p: b.p - 1.0, e: 0 };
        match ctl {
            // filled at the old bid, just before the price drops
            Ctl::C => {
                let filled = Book { e: 1, ..next };
                out.push((filled, w, micro(&filled, m.alpha) - (b.p - 0.5)));
            }
            Ctl::S => out.push((next, w, 0.0)),
        }
    } else if b.bef == 0 {
        match ctl {
            Ctl::C => {
                let filled = Book { aft: b.aft - 1, e: 1, ..*b };
                out.push((filled, w, micro(&filled, m.alpha) - (b.p - 0.5)));
            }
            Ctl::S => out.push((Book { bef: b.aft - 1, aft: 0, ..*b }, w, 0.0)),
        }
    } else {
        let (bf, af) = match ctl {
            Ctl::C => (b.bef - 1, b.aft),
            Ctl::S => (total - 1, 0),
        };
        out.push((Book { bef: bf, aft: af, ..*b }, w, 0.0));
    }

    out.push((Book { bef: bf, aft: af, ..*b }, none, 0.0));

    let sum: f64 = out.iter().map(|x| x.1).sum();
    for x in &mut out {
        x.1 /= sum;
    }
    out
}

fn terminal(b: &Book, alpha: f64) -> f64 {
    if b.e != 0 {
        0.0
    } else {
        micro(b, alpha) - (b.p + 0.5)
    }
}

fn q_value(b: &Book, ctl: Ctl, left: usize, m: &ModelParams, policy: &dyn Fn(&Book, usize) -> f64) -> f64 {
    step(b, ctl, m)
        .iter()
        .map(|(n, pr, r)| pr * (r + policy(n, left - 1)))
        .sum()
}

/// Optimal value with `left` steps to go.
pub fn best(b: &Book, left: usize, m: &ModelParams) -> f64 {
    if b.e != 0 {
        return 0.0;
    }
    if left == 0 {
        return terminal(b, m.alpha);
    }
    let f = |n: &Book, l: usize| best(n, l, m);
    q_value(b, Ctl::C, left, m, &f).max(q_value(b, Ctl::S, left, m, &f))
}

/// Value of holding one control at every step.
pub fn fixed(b: &Book, ctl: Ctl, left: usize, m: &ModelParams) -> f64 {
    if b.e != 0 {
        return 0.0;
    }
    if left == 0 {
        return terminal(b, m.alpha);
    }
    q_value(b, ctl, left, m, &|n: &Book, l: usize| fixed(n, ctl, l, m))
}

/// Optimal value when the control may only change at steps `0, tau, 2 tau, ..`
/// of a horizon `f`; `held` is the control in force between those steps.
pub fn latent(b: &Book, held: Ctl, n: usize, f: usize, tau: usize, m: &ModelParams) -> f64 {
    if b.e != 0 {
        return 0.0;
    }
    if n == f {
        return terminal(b, m.alpha);
    }
    let cont = |ctl: Ctl| -> f64 {
        step(b, ctl, m)
            .iter()
            .map(|(x, pr, r)| pr * (r + latent(x, ctl, n + 1, f, tau, m)))
            .sum()
    };
    if n % tau == 0 {
        cont(Ctl::C).max(cont(Ctl::S))
    } else {
        cont(held)
    }
}
