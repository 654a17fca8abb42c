//! Zero-rate curves on the ISDA SIMM tenor spine, Nelson-Siegel curves and
//! discount factors.
//!
//! Times are ACT/365-fixed year fractions on a continuous grid. A
//! [`YieldCurve`] stores continuously compounded zero rates at the 12 tenors,
//! measured from its `anchor_time`; everything between nodes is linear in
//! yield and everything outside is flat.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One basis point in decimal rate units.
pub const BASIS_POINT: f64 = 1e-4;

/// Number of SIMM interest-rate tenors.
pub const NUM_TENORS: usize = 12;

/// Year fractions for 2W, 1M, 3M, 6M, 1Y, 2Y, 3Y, 5Y, 10Y, 15Y, 20Y, 30Y.
pub const ISDA_TENORS: [f64; NUM_TENORS] = [
    14.0 / 365.0,
    1.0 / 12.0,
    0.25,
    0.5,
    1.0,
    2.0,
    3.0,
    5.0,
    10.0,
    15.0,
    20.0,
    30.0,
];

pub const ISDA_TENOR_LABELS: [&str; NUM_TENORS] = [
    "2W", "1M", "3M", "6M", "1Y", "2Y", "3Y", "5Y", "10Y", "15Y", "20Y", "30Y",
];

/// Time scale of the Nelson-Siegel decay term, in years.
pub const DEFAULT_NS_LAMBDA: f64 = 1.37;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TenorGrid {
    tenors: [f64; NUM_TENORS],
}

impl TenorGrid {
    pub fn new(tenors: [f64; NUM_TENORS]) -> Result<Self> {
        if tenors.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::domain("tenors must be finite and positive"));
        }
        if tenors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("tenors must be strictly increasing"));
        }
        Ok(Self { tenors })
    }

    pub fn isda() -> Self {
        Self {
            tenors: ISDA_TENORS,
        }
    }

    pub fn tenors(&self) -> &[f64; NUM_TENORS] {
        &self.tenors
    }

    /// Locates `tau` on the grid: the left node index and the weight of the
    /// right node. Outside the grid the weight pins to the boundary node.
    #[inline]
    pub fn locate(&self, tau: f64) -> (usize, f64) {
        let t = &self.tenors;
        if tau <= t[0] {
            return (0, 0.0);
        }
        if tau >= t[NUM_TENORS - 1] {
            return (NUM_TENORS - 2, 1.0);
        }
        let right = t.partition_point(|&x| x <= tau);
        let left = right - 1;
        (left, (tau - t[left]) / (t[right] - t[left]))
    }
}

impl Default for TenorGrid {
    fn default() -> Self {
        Self::isda()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldCurve {
    grid: TenorGrid,
    yields: [f64; NUM_TENORS],
    anchor_time: f64,
}

impl YieldCurve {
    pub fn new(grid: TenorGrid, yields: [f64; NUM_TENORS], anchor_time: f64) -> Result<Self> {
        if yields.iter().any(|y| !y.is_finite()) {
            return Err(Error::domain("yields must be finite"));
        }
        Ok(Self {
            grid,
            yields,
            anchor_time,
        })
    }

    pub fn flat(rate: f64, anchor_time: f64) -> Self {
        Self {
            grid: TenorGrid::isda(),
            yields: [rate; NUM_TENORS],
            anchor_time,
        }
    }

    /// Curve observed at t=0 sampled from a Nelson-Siegel parameterization.
    pub fn from_nelson_siegel(params: &NelsonSiegelParams, grid: TenorGrid) -> Self {
        let mut yields = [0.0; NUM_TENORS];
        for (y, &tau) in yields.iter_mut().zip(grid.tenors()) {
            *y = params.yield_unchecked(tau);
        }
        Self {
            grid,
            yields,
            anchor_time: 0.0,
        }
    }

    pub fn grid(&self) -> &TenorGrid {
        &self.grid
    }

    pub fn yields(&self) -> &[f64; NUM_TENORS] {
        &self.yields
    }

    pub fn anchor_time(&self) -> f64 {
        self.anchor_time
    }

    /// Copy of the curve with `amount` added to the yield at node `k`.
    pub fn bumped(&self, k: usize, amount: f64) -> Self {
        let mut out = *self;
        out.yields[k] += amount;
        out
    }

    /// Linear interpolation in yield, flat beyond the first and last tenor.
    #[inline]
    pub fn interp_yield(&self, tau: f64) -> f64 {
        let (left, w) = self.grid.locate(tau);
        let y0 = self.yields[left];
        let y1 = self.yields[left + 1];
        if w == 0.0 {
            y0
        } else if w == 1.0 {
            y1
        } else {
            y0 + w * (y1 - y0)
        }
    }

    /// exp(-Y(tau)·tau); exactly 1 at tau = 0.
    #[inline]
    pub fn discount_factor(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        (-self.interp_yield(tau) * tau).exp()
    }

    /// Discount factor from the anchor to an absolute time `t`.
    #[inline]
    pub fn discount_to(&self, t: f64) -> f64 {
        self.discount_factor(t - self.anchor_time)
    }

    /// Writes the curve as `tenor_yf,yield` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tenor_yf", "yield"])?;
        for (tau, y) in self.grid.tenors().iter().zip(&self.yields) {
            w.write_record([format!("{tau:.16e}"), format!("{y:.16e}")])?;
        }
        w.flush().map_err(|e| Error::io("<curve csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, anchor_time: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["tenor_yf", "yield"] {
            return Err(Error::config("curve csv header must be `tenor_yf,yield`"));
        }
        let mut tenors = Vec::with_capacity(NUM_TENORS);
        let mut yields = Vec::with_capacity(NUM_TENORS);
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("bad number `{s}`: {e}")))
            };
            tenors.push(parse(&rec[0])?);
            yields.push(parse(&rec[1])?);
        }
        let tenors: [f64; NUM_TENORS] = tenors
            .try_into()
            .map_err(|_| Error::config("curve csv must hold exactly 12 rows"))?;
        let yields: [f64; NUM_TENORS] = yields.try_into().expect("same length as tenors");
        Self::new(TenorGrid::new(tenors)?, yields, anchor_time)
    }
}

/// Diebold-Li form of the Nelson-Siegel curve with decay `exp(-tau/lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelsonSiegelParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    lambda: f64,
}

impl NelsonSiegelParams {
    pub fn new(beta0: f64, beta1: f64, beta2: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!(
                "Nelson-Siegel lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            beta0,
            beta1,
            beta2,
            lambda,
        })
    }

    /// Parameters with the default time scale of 1.37 years.
    pub fn with_default_lambda(beta0: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            beta0,
            beta1,
            beta2,
            lambda: DEFAULT_NS_LAMBDA,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    fn yield_unchecked(&self, tau: f64) -> f64 {
        let x = tau / self.lambda;
        let decay = (-x).exp();
        // (1 - e^{-x}) / x without cancellation near zero
        let loading = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
        self.beta0 + self.beta1 * loading + self.beta2 * (loading - decay)
    }

    /// Zero rate to maturity `tau` in years.
    pub fn zero_rate(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::domain(format!(
                "Nelson-Siegel yield needs tau > 0, got {tau}"
            )));
        }
        Ok(self.yield_unchecked(tau))
    }

    /// Instantaneous forward f(0,t) = d/dt [t·Y(t)].
    #[inline]
    pub fn instantaneous_forward(&self, t: f64) -> f64 {
        let x = t / self.lambda;
        let decay = (-x).exp();
        self.beta0 + self.beta1 * decay + self.beta2 * x * decay
    }

    /// Market discount factor P(0, t); 1 at t = 0.
    #[inline]
    pub fn discount(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-self.yield_unchecked(t) * t).exp()
    }
}

/// Free-function form of [`NelsonSiegelParams::zero_rate`].
pub fn ns_yield(params: &NelsonSiegelParams, tau: f64) -> Result<f64> {
    params.zero_rate(tau)
}

/// Free-function form of [`NelsonSiegelParams::instantaneous_forward`].
pub fn ns_instantaneous_forward(params: &NelsonSiegelParams, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::domain(format!("forward needs t >= 0, got {t}")));
    }
    Ok(params.instantaneous_forward(t))
}

pub fn interp_yield(curve: &YieldCurve, tau: f64) -> f64 {
    curve.interp_yield(tau)
}

pub fn discount_factor(curve: &YieldCurve, tau: f64) -> f64 {
    curve.discount_factor(tau)
}
