//! Vanilla interest rate swaps priced off a single discount curve.
//!
//! A swap is valued as `w·N·(PV_float - PV_fixed)`. Float periods that have
//! not reset use the forward implied by discount ratios; the period in
//! flight uses the fixing captured when it reset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::termstructure::YieldCurve;

/// Times closer than this are treated as the same date.
pub const TIME_EPS: f64 = 1e-9;

pub const DEFAULT_NOTIONAL: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    dates: Vec<f64>,
    accruals: Vec<f64>,
}

impl Schedule {
    /// Schedule from explicit dates `T_0 < T_1 < ... < T_n`.
    pub fn from_dates(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::domain("a schedule needs at least two dates"));
        }
        if dates.iter().any(|d| !d.is_finite()) || dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain(
                "schedule dates must be finite and strictly increasing",
            ));
        }
        let accruals = dates.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { dates, accruals })
    }

    /// Regular schedule with `frequency` payments per year.
    pub fn regular(start: f64, end: f64, frequency: u32) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::domain("payment frequency must be positive"));
        }
        let periods = (end - start) * frequency as f64;
        let n = periods.round();
        if n < 1.0 || (periods - n).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "[{start}, {end}] is not a whole number of periods at frequency {frequency}"
            )));
        }
        let n = n as usize;
        let step = 1.0 / frequency as f64;
        let mut dates: Vec<f64> = (0..=n).map(|k| start + k as f64 * step).collect();
        dates[n] = end;
        Self::from_dates(dates)
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// Payment dates `T_1..T_n`.
    pub fn payment_times(&self) -> &[f64] {
        &self.dates[1..]
    }

    pub fn accruals(&self) -> &[f64] {
        &self.accruals
    }

    pub fn start(&self) -> f64 {
        self.dates[0]
    }

    pub fn end(&self) -> f64 {
        *self.dates.last().expect("non-empty")
    }

    /// Index (1-based, as in `T_k`) of the first payment strictly after `t`.
    fn first_live(&self, t: f64) -> usize {
        self.dates.partition_point(|&d| d <= t + TIME_EPS).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Payer,
    Receiver,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Payer => 1.0,
            Direction::Receiver => -1.0,
        }
    }

    pub fn from_sign(w: i32) -> Result<Self> {
        match w {
            1 => Ok(Direction::Payer),
            -1 => Ok(Direction::Receiver),
            other => Err(Error::config(format!("w must be +1 or -1, got {other}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Payer => Direction::Receiver,
            Direction::Receiver => Direction::Payer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapSpec {
    pub notional: f64,
    pub fixed_rate: f64,
    pub direction: Direction,
    fixed: Schedule,
    float: Schedule,
}

impl SwapSpec {
    pub fn new(
        notional: f64,
        fixed_rate: f64,
        direction: Direction,
        fixed: Schedule,
        float: Schedule,
    ) -> Result<Self> {
        if (fixed.start() - float.start()).abs() > TIME_EPS
            || (fixed.end() - float.end()).abs() > TIME_EPS
        {
            return Err(Error::domain(
                "fixed and float schedules must share first and last dates",
            ));
        }
        if !notional.is_finite() || !fixed_rate.is_finite() {
            return Err(Error::domain("notional and fixed rate must be finite"));
        }
        Ok(Self {
            notional,
            fixed_rate,
            direction,
            fixed,
            float,
        })
    }

    pub fn fixed_schedule(&self) -> &Schedule {
        &self.fixed
    }

    pub fn float_schedule(&self) -> &Schedule {
        &self.float
    }

    pub fn maturity(&self) -> f64 {
        self.fixed.end()
    }

    pub fn with_fixed_rate(&self, fixed_rate: f64) -> Self {
        Self {
            fixed_rate,
            ..self.clone()
        }
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self {
            direction,
            ..self.clone()
        }
    }

    pub fn with_notional(&self, notional: f64) -> Self {
        Self {
            notional,
            ..self.clone()
        }
    }
}

fn time_key(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// Float-rate fixings observed along a path, keyed by accrual period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixingStore {
    fixings: BTreeMap<(i64, i64), f64>,
}

impl FixingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, reset: f64, end: f64, rate: f64) {
        self.fixings.insert((time_key(reset), time_key(end)), rate);
    }

    pub fn get(&self, reset: f64, end: f64) -> Option<f64> {
        self.fixings.get(&(time_key(reset), time_key(end))).copied()
    }

    pub fn len(&self) -> usize {
        self.fixings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixings.is_empty()
    }

    pub fn clear(&mut self) {
        self.fixings.clear();
    }
}

/// Simple forward rate over `[start, end]` seen from the curve's anchor `t`.
#[inline]
pub fn forward_rate(curve: &YieldCurve, t: f64, start: f64, end: f64) -> f64 {
    let p0 = curve.discount_factor(start - t);
    let p1 = curve.discount_factor(end - t);
    (p0 / p1 - 1.0) / (end - start)
}

/// Present value of one unit of fixed rate on the remaining fixed periods.
pub fn annuity(curve: &YieldCurve, fixed: &Schedule, t: f64) -> f64 {
    let first = fixed.first_live(t);
    (first..fixed.dates.len())
        .map(|k| fixed.accruals[k - 1] * curve.discount_factor(fixed.dates[k] - t))
        .sum()
}

fn float_leg_unit(
    curve: &YieldCurve,
    float: &Schedule,
    t: f64,
    fixings: &FixingStore,
) -> Result<f64> {
    let dates = &float.dates;
    let first = float.first_live(t);
    if first >= dates.len() {
        return Ok(0.0);
    }
    let mut pv = 0.0;
    let mut df_prev = curve.discount_factor(dates[first - 1] - t);
    for k in first..dates.len() {
        let reset = dates[k - 1];
        let end = dates[k];
        let accrual = float.accruals[k - 1];
        let df = curve.discount_factor(end - t);
        let rate = if reset < t - TIME_EPS {
            fixings
                .get(reset, end)
                .ok_or(Error::MissingFixing { reset, end })?
        } else {
            (df_prev / df - 1.0) / accrual
        };
        pv += accrual * df * rate;
        df_prev = df;
    }
    Ok(pv)
}

/// Par fixed rate at `t` for periods not yet paid; in-flight float periods
/// take their fixing from `fixings`.
pub fn swap_rate_with_fixings(
    curve: &YieldCurve,
    spec: &SwapSpec,
    t: f64,
    fixings: &FixingStore,
) -> Result<f64> {
    let a = annuity(curve, &spec.fixed, t);
    if !(a > 0.0) {
        return Err(Error::Expired(t));
    }
    Ok(float_leg_unit(curve, &spec.float, t, fixings)? / a)
}

pub fn swap_rate(curve: &YieldCurve, spec: &SwapSpec, t: f64) -> Result<f64> {
    swap_rate_with_fixings(curve, spec, t, &FixingStore::default())
}

/// Swap value at `t` from a curve anchored at `t`. Expired swaps are worth 0.
pub fn price_swap(
    curve: &YieldCurve,
    spec: &SwapSpec,
    t: f64,
    fixings: &FixingStore,
) -> Result<f64> {
    if t >= spec.maturity() - TIME_EPS {
        return Ok(0.0);
    }
    let float = float_leg_unit(curve, &spec.float, t, fixings)?;
    let fixed = annuity(curve, &spec.fixed, t) * spec.fixed_rate;
    Ok(spec.direction.sign() * spec.notional * (float - fixed))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Portfolio {
    pub swaps: Vec<SwapSpec>,
}

impl Portfolio {
    pub fn new(swaps: Vec<SwapSpec>) -> Self {
        Self { swaps }
    }

    pub fn is_empty(&self) -> bool {
        self.swaps.is_empty()
    }

    pub fn maturity(&self) -> f64 {
        self.swaps
            .iter()
            .map(SwapSpec::maturity)
            .fold(0.0, f64::max)
    }

    /// Distinct float accrual periods `(reset, end)`, sorted by reset time.
    pub fn reset_events(&self) -> Vec<(f64, f64)> {
        let mut events: Vec<(f64, f64)> = self
            .swaps
            .iter()
            .flat_map(|s| s.float.dates.windows(2).map(|w| (w[0], w[1])))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        events.dedup_by(|a, b| (a.0 - b.0).abs() < TIME_EPS && (a.1 - b.1).abs() < TIME_EPS);
        events
    }
}

pub fn price_portfolio(
    curve: &YieldCurve,
    portfolio: &Portfolio,
    t: f64,
    fixings: &FixingStore,
) -> Result<f64> {
    portfolio
        .swaps
        .iter()
        .try_fold(0.0, |acc, s| Ok(acc + price_swap(curve, s, t, fixings)?))
}

/// Strike of a swap in a portfolio file: a number, `"ATM"` or `"ATM+spread"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strike {
    Fixed(f64),
    AtmPlus(f64),
}

impl Serialize for Strike {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Strike::Fixed(k) => s.serialize_f64(k),
            Strike::AtmPlus(d) if d == 0.0 => s.serialize_str("ATM"),
            Strike::AtmPlus(d) => s.serialize_str(&format!("ATM{d:+}")),
        }
    }
}

impl<'de> Deserialize<'de> for Strike {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(Strike::Fixed(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Strike {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let Some(rest) = s.strip_prefix("ATM") else {
            return s
                .parse::<f64>()
                .map(Strike::Fixed)
                .map_err(|_| format!("bad strike `{s}`"));
        };
        let rest = rest.trim();
        if rest.is_empty() {
            return Ok(Strike::AtmPlus(0.0));
        }
        rest.replace(' ', "")
            .parse::<f64>()
            .map(Strike::AtmPlus)
            .map_err(|_| format!("bad ATM spread in `{s}`"))
    }
}

/// One swap line of a portfolio definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTemplate {
    pub notional: f64,
    pub w: i32,
    pub fixed_leg_freq: u32,
    pub float_leg_freq: u32,
    pub start: f64,
    pub maturity: f64,
    pub strike: Strike,
}

impl SwapTemplate {
    /// Resolves the strike against the t0 curve. `extra_spread` is the
    /// moneyness spread of a sampled market state and shifts ATM strikes only.
    pub fn resolve(&self, t0_curve: &YieldCurve, extra_spread: f64) -> Result<SwapSpec> {
        let direction = Direction::from_sign(self.w)?;
        let fixed = Schedule::regular(self.start, self.maturity, self.fixed_leg_freq)?;
        let float = Schedule::regular(self.start, self.maturity, self.float_leg_freq)?;
        let spec = SwapSpec::new(self.notional, 0.0, direction, fixed, float)?;
        let rate = match self.strike {
            Strike::Fixed(k) => k,
            Strike::AtmPlus(d) => {
                swap_rate(t0_curve, &spec, t0_curve.anchor_time())? + d + extra_spread
            }
        };
        Ok(spec.with_fixed_rate(rate))
    }
}

/// Portfolio definition before strikes are resolved against a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioTemplate {
    pub swaps: Vec<SwapTemplate>,
}

impl PortfolioTemplate {
    /// 1Y-forward 5Y payer swap, quarterly float vs semi-annual fixed, ATM.
    pub fn single_forward_swap() -> Self {
        Self {
            swaps: vec![SwapTemplate {
                notional: DEFAULT_NOTIONAL,
                w: 1,
                fixed_leg_freq: 2,
                float_leg_freq: 4,
                start: 1.0,
                maturity: 6.0,
                strike: Strike::AtmPlus(0.0),
            }],
        }
    }

    /// Six spot-starting ATM swaps maturing in 5..=10 years; even positions
    /// pay fixed; the first three are quarterly float vs semi-annual fixed,
    /// the rest semi-annual float vs annual fixed.
    pub fn six_swap_book() -> Self {
        let swaps = (0..6)
            .map(|phi| SwapTemplate {
                notional: DEFAULT_NOTIONAL,
                w: if phi % 2 == 0 { 1 } else { -1 },
                fixed_leg_freq: if phi < 3 { 2 } else { 1 },
                float_leg_freq: if phi < 3 { 4 } else { 2 },
                start: 0.0,
                maturity: 5.0 + phi as f64,
                strike: Strike::AtmPlus(0.0),
            })
            .collect();
        Self { swaps }
    }

    pub fn resolve(&self, t0_curve: &YieldCurve, extra_spread: f64) -> Result<Portfolio> {
        self.swaps
            .iter()
            .map(|s| s.resolve(t0_curve, extra_spread))
            .collect::<Result<Vec<_>>>()
            .map(Portfolio::new)
    }

    pub fn maturity(&self) -> f64 {
        self.swaps.iter().map(|s| s.maturity).fold(0.0, f64::max)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tpl: Self = serde_json::from_str(&text)?;
        if tpl.swaps.is_empty() {
            return Err(Error::config(format!("{} lists no swaps", path.display())));
        }
        Ok(tpl)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("template serializes");
        hex::encode(Sha256::digest(json))
    }
}
