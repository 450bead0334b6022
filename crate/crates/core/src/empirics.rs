//! Estimators on trade and quote records: imbalance series, predictive power
//! of the imbalance, neutralized imbalance at passive fills and signed price
//! profiles around fills.
//!
//! The book state "just before" a trade is the last quote whose timestamp is
//! strictly earlier than the trade's. Quote streams must be sorted by
//! timestamp.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{successors, Control, EdgeEvent};
use crate::model::{ModelParams, OrderbookState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteRecord {
    /// Nanoseconds.
    pub timestamp: i64,
    pub best_bid_qty: u64,
    pub best_ask_qty: u64,
    /// Ticks.
    pub best_bid_price: i64,
    pub best_ask_price: i64,
}

impl QuoteRecord {
    pub fn mid(&self) -> f64 {
        (self.best_bid_price + self.best_ask_price) as f64 / 2.0
    }

    pub fn spread(&self) -> i64 {
        self.best_ask_price - self.best_bid_price
    }

    /// Bid-minus-ask share of the first-limit depth; `None` for an empty book.
    pub fn imbalance(&self) -> Option<f64> {
        let total = self.best_bid_qty + self.best_ask_qty;
        (total > 0).then(|| (self.best_bid_qty as f64 - self.best_ask_qty as f64) / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub timestamp: i64,
    pub price: i64,
    pub size: u64,
    pub passive_agent_id: String,
    /// +1 when the passive order was a buy, -1 when it was a sell.
    pub sign: i8,
}

fn check_quotes(quotes: &[QuoteRecord]) -> Result<()> {
    for (i, q) in quotes.iter().enumerate() {
        if q.best_bid_price >= q.best_ask_price {
            return Err(Error::Data(format!("quote {i}: bid {} is not below ask {}", q.best_bid_price, q.best_ask_price)));
        }
        if i > 0 && quotes[i - 1].timestamp > q.timestamp {
            return Err(Error::Data(format!("quote {i}: timestamps are not sorted")));
        }
    }
    Ok(())
}

fn check_trades(trades: &[TradeRecord]) -> Result<()> {
    for (i, t) in trades.iter().enumerate() {
        if t.size == 0 {
            return Err(Error::Data(format!("trade {i}: size must be positive")));
        }
        if t.sign != 1 && t.sign != -1 {
            return Err(Error::Data(format!("trade {i}: sign must be +1 or -1, got {}", t.sign)));
        }
        if i > 0 && trades[i - 1].timestamp > t.timestamp {
            return Err(Error::Data(format!("trade {i}: timestamps are not sorted")));
        }
    }
    Ok(())
}

/// Last quote strictly before `t`.
fn quote_before(quotes: &[QuoteRecord], t: i64) -> Option<&QuoteRecord> {
    let i = quotes.partition_point(|q| q.timestamp < t);
    i.checked_sub(1).map(|i| &quotes[i])
}

/// Missing fields in a JSON document take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Offsets (ns) at which the price profile is sampled.
    pub offsets: Vec<i64>,
    /// Number of trades over which the future mid move is measured.
    pub trade_horizon: usize,
    /// Imbalance bin edges, sorted and covering `[-1, 1]`.
    pub bin_edges: Vec<f64>,
    /// Inclusive timestamp window for the average spread; all quotes if unset.
    pub spread_window: Option<(i64, i64)>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        const SECOND: i64 = 1_000_000_000;
        ProfileConfig {
            offsets: (-10..=10).map(|k| k * 30 * SECOND).collect(),
            trade_horizon: 50,
            bin_edges: (0..=10).map(|k| -1.0 + 0.2 * k as f64).collect(),
            spread_window: None,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("profile offsets must be strictly increasing".into()));
        }
        if self.bin_edges.len() < 2 || self.bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("bin edges must be strictly increasing".into()));
        }
        if self.bin_edges[0] > -1.0 || *self.bin_edges.last().unwrap() < 1.0 {
            return Err(Error::Config("bin edges must cover [-1, 1]".into()));
        }
        Ok(())
    }

    fn bin_of(&self, x: f64) -> usize {
        let last = self.bin_edges.len() - 2;
        self.bin_edges[1..]
            .iter()
            .position(|&hi| x < hi)
            .unwrap_or(last)
            .min(last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalancePoint {
    pub timestamp: i64,
    pub imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSeries {
    pub points: Vec<ImbalancePoint>,
    /// Records skipped because both queues were empty.
    pub skipped: usize,
}

pub fn imbalance_series(quotes: &[QuoteRecord]) -> ImbalanceSeries {
    let mut skipped = 0;
    let points = quotes
        .iter()
        .filter_map(|q| match q.imbalance() {
            Some(imbalance) => Some(ImbalancePoint {
                timestamp: q.timestamp,
                imbalance,
            }),
            None => {
                skipped += 1;
                None
            }
        })
        .collect();
    ImbalanceSeries { points, skipped }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_imbalance: Option<f64>,
    pub mean_move: Option<f64>,
    pub se_move: Option<f64>,
}

impl PowerBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Binned conditional mean of the mid move over the next trades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictivePower {
    /// Imbalance seen from the bid against the raw mid move.
    pub raw: Vec<PowerBin>,
    /// Imbalance seen from the passive side against the side-signed move.
    pub side_signed: Vec<PowerBin>,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    x: f64,
    y: f64,
    yy: f64,
}

fn finish_bins(config: &ProfileConfig, acc: &[Moments]) -> Vec<PowerBin> {
    acc.iter()
        .enumerate()
        .map(|(i, m)| {
            let n = m.n as f64;
            let mean_move = (m.n > 0).then(|| m.y / n);
            let se_move = (m.n > 1).then(|| {
                let mean = m.y / n;
                let var = ((m.yy - n * mean * mean) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            });
            PowerBin {
                lo: config.bin_edges[i],
                hi: config.bin_edges[i + 1],
                count: m.n,
                mean_imbalance: (m.n > 0).then(|| m.x / n),
                mean_move,
                se_move,
            }
        })
        .collect()
}

/// For each trade `i`, the imbalance just before it against the mid move
/// from just before trade `i` to just before trade `i + trade_horizon`.
/// Trades without enough successors are skipped.
pub fn predictive_power(
    trades: &[TradeRecord],
    quotes: &[QuoteRecord],
    config: &ProfileConfig,
) -> Result<PredictivePower> {
    config.validate()?;
    check_quotes(quotes)?;
    check_trades(trades)?;
    let bins = config.bin_edges.len() - 1;
    let mut raw = vec![Moments::default(); bins];
    let mut signed = vec![Moments::default(); bins];
    for (i, trade) in trades.iter().enumerate() {
        let Some(later) = trades.get(i + config.trade_horizon) else {
            break;
        };
        let (Some(q0), Some(q1)) = (quote_before(quotes, trade.timestamp), quote_before(quotes, later.timestamp)) else {
            continue;
        };
        let Some(imb) = q0.imbalance() else {
            continue;
        };
        let mv = q1.mid() - q0.mid();
        let sign = trade.sign as f64;
        for (acc, x, y) in [(&mut raw, imb, mv), (&mut signed, sign * imb, sign * mv)] {
            let m = &mut acc[config.bin_of(x)];
            m.n += 1;
            m.x += x;
            m.y += y;
            m.yy += y * y;
        }
    }
    Ok(PredictivePower {
        raw: finish_bins(config, &raw),
        side_signed: finish_bins(config, &signed),
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (average ranks on ties); `None` when either
/// side is constant or fewer than two points are given.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman correlation between bin centers and mean moves over populated bins.
pub fn bin_rank_correlation(bins: &[PowerBin]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = bins
        .iter()
        .filter_map(|b| b.mean_move.map(|m| (b.center(), m)))
        .unzip();
    spearman(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralizedImbalance {
    pub agent: String,
    /// Mean of the buy-side and sell-side averages of `rho`.
    pub r_prime: f64,
    /// Sum of the two side averages, as the estimator is sometimes written.
    pub r_prime_sum: f64,
    pub buy_mean: f64,
    pub sell_mean: f64,
    pub n_buy: usize,
    pub n_sell: usize,
    /// Plain average of `rho` over all fills.
    pub r: f64,
    /// Average of `(Q_same - Q_opp) / (2 Q_opp)`; `None` if some `Q_opp` is 0.
    pub r_literal: Option<f64>,
}

/// `rho = (Q_same - Q_opp) / (Q_same + Q_opp)` measured just before each
/// passive fill of `agent`, averaged per side.
pub fn neutralized_imbalance(
    trades: &[TradeRecord],
    quotes: &[QuoteRecord],
    agent: &str,
) -> Result<NeutralizedImbalance> {
    check_quotes(quotes)?;
    check_trades(trades)?;
    let (mut buy, mut sell) = (Vec::new(), Vec::new());
    let mut literal = Some(0.0);
    for t in trades.iter().filter(|t| t.passive_agent_id == agent) {
        let Some(q) = quote_before(quotes, t.timestamp) else {
            continue;
        };
        let (same, opp) = if t.sign > 0 {
            (q.best_bid_qty, q.best_ask_qty)
        } else {
            (q.best_ask_qty, q.best_bid_qty)
        };
        if same + opp == 0 {
            continue;
        }
        let rho = (same as f64 - opp as f64) / (same + opp) as f64;
        literal = match (literal, opp) {
            (Some(acc), o) if o > 0 => Some(acc + (same as f64 - o as f64) / (2 * o) as f64),
            _ => None,
        };
        if t.sign > 0 {
            buy.push(rho);
        } else {
            sell.push(rho);
        }
    }
    if buy.is_empty() || sell.is_empty() {
        return Err(Error::Data(format!(
            "agent {agent:?} needs passive fills on both sides (buy: {}, sell: {})",
            buy.len(),
            sell.len()
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let buy_mean = mean(&buy);
    let sell_mean = mean(&sell);
    let n = (buy.len() + sell.len()) as f64;
    Ok(NeutralizedImbalance {
        agent: agent.to_string(),
        r_prime: 0.5 * (buy_mean + sell_mean),
        r_prime_sum: buy_mean + sell_mean,
        buy_mean,
        sell_mean,
        n_buy: buy.len(),
        n_sell: sell.len(),
        r: (buy.iter().sum::<f64>() + sell.iter().sum::<f64>()) / n,
        r_literal: literal.map(|s| s / n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub offset: i64,
    /// Signed mid move in units of the average spread.
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub agent: Option<String>,
    pub average_spread: f64,
    pub points: Vec<ProfilePoint>,
}

/// Average spread in ticks over the configured window.
pub fn average_spread(quotes: &[QuoteRecord], window: Option<(i64, i64)>) -> Result<f64> {
    let spreads: Vec<i64> = quotes
        .iter()
        .filter(|q| window.is_none_or(|(a, b)| q.timestamp >= a && q.timestamp <= b))
        .map(QuoteRecord::spread)
        .collect();
    if spreads.is_empty() {
        return Err(Error::Data("no quotes inside the spread window".into()));
    }
    Ok(spreads.iter().sum::<i64>() as f64 / spreads.len() as f64)
}

/// Average of `(mid(t + dt) - mid(t)) / spread * sign` over the fills of
/// `agent` (all fills when `None`), for each configured offset.
pub fn price_profile(
    trades: &[TradeRecord],
    quotes: &[QuoteRecord],
    agent: Option<&str>,
    config: &ProfileConfig,
) -> Result<PriceProfile> {
    config.validate()?;
    check_quotes(quotes)?;
    check_trades(trades)?;
    let psi = average_spread(quotes, config.spread_window)?;
    let mut sums = vec![(0.0, 0usize); config.offsets.len()];
    for t in trades
        .iter()
        .filter(|t| agent.is_none_or(|a| t.passive_agent_id == a))
    {
        let Some(reference) = quote_before(quotes, t.timestamp) else {
            continue;
        };
        for (slot, &dt) in sums.iter_mut().zip(&config.offsets) {
            if let Some(q) = quote_before(quotes, t.timestamp + dt) {
                slot.0 += (q.mid() - reference.mid()) / psi * t.sign as f64;
                slot.1 += 1;
            }
        }
    }
    Ok(PriceProfile {
        agent: agent.map(str::to_string),
        average_spread: psi,
        points: config
            .offsets
            .iter()
            .zip(sums)
            .map(|(&offset, (s, count))| ProfilePoint {
                offset,
                value: if count > 0 { s / count as f64 } else { 0.0 },
                count,
            })
            .collect(),
    })
}

/// Quote and trade tape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketTape {
    pub quotes: Vec<QuoteRecord>,
    pub trades: Vec<TradeRecord>,
}

/// Nanoseconds between two steps of a synthetic tape.
pub const SYNTHETIC_STEP_NS: i64 = 1_000;

/// Runs the orderbook chain with no resting agent for `steps` steps.
///
/// A quote is recorded at the start of every step. Every decrement of a first
/// limit is recorded as a trade halfway through the step, passive on the side
/// that lost a unit, labelled with one of `labels` drawn uniformly. The chain's
/// mid sits on whole ticks with a half-tick spread around it, so quote prices
/// are shifted down by half a tick to keep them integral.
pub fn synthetic_tape(
    params: &ModelParams,
    q_bid: u32,
    q_ask: u32,
    price_ticks: i64,
    steps: usize,
    seed: u64,
    labels: &[&str],
) -> Result<MarketTape> {
    params.validate()?;
    if labels.is_empty() {
        return Err(Error::Argument("at least one agent label is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the book alone: every unit is queued ahead of a pulled order
    let mut state = OrderbookState::new(q_bid, 0, q_ask, price_ticks);
    state.validate(params.q_max)?;
    let mut tape = MarketTape::default();
    let quote_of = |s: &OrderbookState, timestamp: i64| {
        let mid = s.price_half_ticks / 2;
        QuoteRecord {
            timestamp,
            best_bid_qty: s.q_same() as u64,
            best_ask_qty: s.q_opp as u64,
            best_bid_price: mid - 1,
            best_ask_price: mid,
        }
    };
    for n in 0..steps {
        let t = n as i64 * SYNTHETIC_STEP_NS;
        let quote = quote_of(&state, t);
        let row = successors(&state, Control::Cancel, params)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut edge = row.last().expect("non-empty row");
        for e in &row {
            acc += e.prob;
            if u < acc {
                edge = e;
                break;
            }
        }
        let side = match edge.event {
            EdgeEvent::SameCancel | EdgeEvent::PriceDownNoExec => Some(1),
            EdgeEvent::OppCancel | EdgeEvent::PriceUp => Some(-1),
            _ => None,
        };
        if let Some(sign) = side {
            let label = labels[rng.gen_range(0..labels.len())];
            tape.trades.push(TradeRecord {
                timestamp: t + SYNTHETIC_STEP_NS / 2,
                price: if sign > 0 { quote.best_bid_price } else { quote.best_ask_price },
                size: 1,
                passive_agent_id: label.to_string(),
                sign,
            });
        }
        tape.quotes.push(quote);
        state = edge.next;
    }
    tape.quotes.push(quote_of(&state, steps as i64 * SYNTHETIC_STEP_NS));
    Ok(tape)
}

pub fn read_quotes<R: Read>(input: R) -> Result<Vec<QuoteRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let quotes = r.deserialize().collect::<std::result::Result<Vec<QuoteRecord>, _>>()?;
    check_quotes(&quotes)?;
    Ok(quotes)
}

pub fn read_trades<R: Read>(input: R) -> Result<Vec<TradeRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let trades = r.deserialize().collect::<std::result::Result<Vec<TradeRecord>, _>>()?;
    check_trades(&trades)?;
    Ok(trades)
}

pub fn write_records<W: Write, T: Serialize>(records: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12}")).unwrap_or_default()
}

/// `variant,lo,hi,count,mean_imbalance,mean_move,se_move`.
pub fn write_predictive_csv<W: Write>(power: &PredictivePower, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variant", "lo", "hi", "count", "mean_imbalance", "mean_move", "se_move"])?;
    for (variant, bins) in [("raw", &power.raw), ("side_signed", &power.side_signed)] {
        for b in bins {
            w.write_record([
                variant.to_string(),
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                opt(b.mean_imbalance),
                opt(b.mean_move),
                opt(b.se_move),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `agent,average_spread,offset,value,count`.
pub fn write_profile_csv<W: Write>(profile: &PriceProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent", "average_spread", "offset", "value", "count"])?;
    write_profile_rows(profile, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_profile_rows<W: Write>(profile: &PriceProfile, w: &mut csv::Writer<W>) -> Result<()> {
    let agent = profile.agent.clone().unwrap_or_else(|| "*".into());
    for p in &profile.points {
        w.write_record([
            agent.clone(),
            format!("{:.12}", profile.average_spread),
            p.offset.to_string(),
            format!("{:.12}", p.value),
            p.count.to_string(),
        ])?;
    }
    Ok(())
}

/// Full diagnostic report written into `dir`: `imbalance.csv`,
/// `predictive_power.csv`, `profile.csv` (all fills, then one block per agent)
/// and `neutralized.csv` when agents are given.
pub fn run_report(
    quotes_path: &Path,
    trades_path: &Path,
    dir: &Path,
    config: &ProfileConfig,
    agents: &[String],
) -> Result<()> {
    config.validate()?;
    let quotes = read_quotes(File::open(quotes_path)?)?;
    let trades = read_trades(File::open(trades_path)?)?;
    std::fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };

    write_records(&imbalance_series(&quotes).points, create("imbalance.csv")?)?;
    write_predictive_csv(&predictive_power(&trades, &quotes, config)?, create("predictive_power.csv")?)?;

    let mut profiles = vec![price_profile(&trades, &quotes, None, config)?];
    for a in agents {
        profiles.push(price_profile(&trades, &quotes, Some(a), config)?);
    }
    let mut w = csv::Writer::from_writer(create("profile.csv")?);
    w.write_record(["agent", "average_spread", "offset", "value", "count"])?;
    for profile in &profiles {
        write_profile_rows(profile, &mut w)?;
    }
    w.flush()?;

    if !agents.is_empty() {
        let rows = agents
            .iter()
            .map(|a| neutralized_imbalance(&trades, &quotes, a))
            .collect::<Result<Vec<_>>>()?;
        write_records(&rows, create("neutralized.csv")?)?;
    }
    Ok(())
}
