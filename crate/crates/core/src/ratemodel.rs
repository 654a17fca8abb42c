//! One-factor Gaussian short-rate models.
//!
//! Both models share the Ornstein-Uhlenbeck state `dx = -a x dt + σ dW` and
//! differ only in the deterministic shift: a constant `θ` for Vasicek, and
//! for Hull-White the shift that reproduces a Nelson-Siegel curve at t = 0
//! (with `x(0) = 0`). Transitions are exact, so the time step introduces no
//! discretization error in the state.

use crate::error::{Error, Result};
use crate::termstructure::{NelsonSiegelParams, TenorGrid, YieldCurve, NUM_TENORS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VasicekParams {
    pub a: f64,
    pub sigma: f64,
    pub theta: f64,
    pub r0: f64,
}

impl VasicekParams {
    pub fn new(a: f64, sigma: f64, theta: f64, r0: f64) -> Result<Self> {
        check_ou(a, sigma)?;
        Ok(Self {
            a,
            sigma,
            theta,
            r0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullWhiteParams {
    pub a: f64,
    pub sigma: f64,
    pub ns: NelsonSiegelParams,
}

impl HullWhiteParams {
    pub fn new(a: f64, sigma: f64, ns: NelsonSiegelParams) -> Result<Self> {
        check_ou(a, sigma)?;
        Ok(Self { a, sigma, ns })
    }
}

fn check_ou(a: f64, sigma: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!(
            "mean reversion must be positive, got {a}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!(
            "volatility must be non-negative, got {sigma}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShortRateModel {
    Vasicek(VasicekParams),
    HullWhite(HullWhiteParams),
}

/// Model state at time `t`; `r = x + shift(t)` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortRateState {
    pub t: f64,
    pub x: f64,
    pub r: f64,
}

/// (1 - e^{-a·tau}) / a
#[inline]
fn loading(a: f64, tau: f64) -> f64 {
    -(-a * tau).exp_m1() / a
}

impl ShortRateModel {
    pub fn mean_reversion(&self) -> f64 {
        match self {
            ShortRateModel::Vasicek(p) => p.a,
            ShortRateModel::HullWhite(p) => p.a,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            ShortRateModel::Vasicek(p) => p.sigma,
            ShortRateModel::HullWhite(p) => p.sigma,
        }
    }

    /// Deterministic part of the short rate at time `t`.
    #[inline]
    pub fn shift(&self, t: f64) -> f64 {
        match self {
            ShortRateModel::Vasicek(p) => p.theta,
            ShortRateModel::HullWhite(p) => {
                let g = p.sigma / p.a * (-(-p.a * t).exp_m1());
                p.ns.instantaneous_forward(t) + 0.5 * g * g
            }
        }
    }

    pub fn state_at(&self, t: f64, x: f64) -> ShortRateState {
        ShortRateState {
            t,
            x,
            r: x + self.shift(t),
        }
    }

    pub fn initial_state(&self) -> ShortRateState {
        match self {
            ShortRateModel::Vasicek(p) => self.state_at(0.0, p.r0 - p.theta),
            ShortRateModel::HullWhite(_) => self.state_at(0.0, 0.0),
        }
    }

    /// Exact OU transition over `h` driven by the standard normal draw `z`.
    pub fn evolve(&self, state: &ShortRateState, h: f64, z: f64) -> Result<ShortRateState> {
        if !(h > 0.0) {
            return Err(Error::domain(format!(
                "time step must be positive, got {h}"
            )));
        }
        if !z.is_finite() {
            return Err(Error::domain("normal draw must be finite"));
        }
        let a = self.mean_reversion();
        let sigma = self.sigma();
        let decay = (-a * h).exp();
        let sd = sigma * (-(-2.0 * a * h).exp_m1() / (2.0 * a)).sqrt();
        let x = state.x * decay + sd * z;
        Ok(self.state_at(state.t + h, x))
    }

    /// Zero-coupon bond price P(t, maturity) in the given state.
    pub fn zcb_price(&self, state: &ShortRateState, maturity: f64) -> Result<f64> {
        if maturity < state.t {
            return Err(Error::domain(format!(
                "bond maturity {maturity} precedes valuation time {}",
                state.t
            )));
        }
        Ok(self.zcb_unchecked(state, maturity))
    }

    #[inline]
    fn zcb_unchecked(&self, state: &ShortRateState, maturity: f64) -> f64 {
        let tau = maturity - state.t;
        if tau == 0.0 {
            return 1.0;
        }
        match self {
            ShortRateModel::Vasicek(p) => {
                let c = loading(p.a, tau);
                let s2 = p.sigma * p.sigma;
                let log_b =
                    (p.theta - s2 / (2.0 * p.a * p.a)) * (c - tau) - s2 * c * c / (4.0 * p.a);
                (log_b - c * state.r).exp()
            }
            ShortRateModel::HullWhite(p) => {
                let t = state.t;
                let c = loading(p.a, tau);
                let ratio = p.ns.discount(maturity) / p.ns.discount(t);
                let var = p.sigma * p.sigma / (4.0 * p.a) * c * c * (-(-2.0 * p.a * t).exp_m1());
                ratio * (c * p.ns.instantaneous_forward(t) - var - c * state.r).exp()
            }
        }
    }

    /// Zero rates at the grid tenors seen from the state's time.
    pub fn model_yields(&self, state: &ShortRateState, grid: &TenorGrid) -> YieldCurve {
        let mut yields = [0.0; NUM_TENORS];
        for (y, &tau) in yields.iter_mut().zip(grid.tenors()) {
            *y = -self.zcb_unchecked(state, state.t + tau).ln() / tau;
        }
        YieldCurve::new(*grid, yields, state.t).expect("affine bond prices are finite")
    }

    /// Curve at t = 0 implied by the model.
    pub fn initial_curve(&self, grid: &TenorGrid) -> YieldCurve {
        self.model_yields(&self.initial_state(), grid)
    }
}

pub fn evolve(
    model: &ShortRateModel,
    state: &ShortRateState,
    h: f64,
    z: f64,
) -> Result<ShortRateState> {
    model.evolve(state, h, z)
}

pub fn zcb_price(model: &ShortRateModel, state: &ShortRateState, maturity: f64) -> Result<f64> {
    model.zcb_price(state, maturity)
}

pub fn model_yields(
    model: &ShortRateModel,
    state: &ShortRateState,
    grid: &TenorGrid,
) -> YieldCurve {
    model.model_yields(state, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn vasicek(a: f64, sigma: f64, theta: f64, r0: f64) -> ShortRateModel {
        ShortRateModel::Vasicek(VasicekParams::new(a, sigma, theta, r0).unwrap())
    }

    fn hull_white() -> ShortRateModel {
        let ns = NelsonSiegelParams::with_default_lambda(0.03, 0.01, 0.005);
        ShortRateModel::HullWhite(HullWhiteParams::new(0.025, 0.0075, ns).unwrap())
    }

    #[test]
    fn parameter_validation() {
        assert!(VasicekParams::new(0.0, 0.01, 0.03, 0.01).is_err());
        assert!(VasicekParams::new(0.05, -0.01, 0.03, 0.01).is_err());
        let ns = NelsonSiegelParams::with_default_lambda(0.03, 0.0, 0.0);
        assert!(HullWhiteParams::new(-1.0, 0.01, ns).is_err());
    }

    #[test]
    fn deterministic_decay() {
        let m = vasicek(0.05, 0.0, 0.03, 0.04);
        let s = m.state_at(0.0, 0.01);
        let next = m.evolve(&s, 1.0, 1.7).unwrap();
        assert_relative_eq!(next.x, 0.01 * (-0.05f64).exp(), epsilon = 1e-18);
        assert_eq!(next.t, 1.0);
        assert_relative_eq!(next.r, next.x + 0.03, epsilon = 1e-18);

        let m = vasicek(0.05, 0.02, 0.03, 0.04);
        let next = m.evolve(&s, 0.5, 0.0).unwrap();
        assert_eq!(next.x, 0.01 * (-0.025f64).exp());
        assert!(m.evolve(&s, 0.0, 0.0).is_err());
        assert!(m.evolve(&s, 0.1, f64::NAN).is_err());
    }

    #[test]
    fn transition_moments() {
        let (a, sigma, h, x0) = (0.05, 0.01, 0.25, 0.02);
        let m = vasicek(a, sigma, 0.0, x0);
        let s = m.state_at(0.0, x0);
        let mut r = rng::seeded(42);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| m.evolve(&s, h, StandardNormal.sample(&mut r)).unwrap().x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want_mean = (-a * h).exp() * x0;
        let want_var = sigma * sigma * (1.0 - (-2.0 * a * h).exp()) / (2.0 * a);
        assert!((mean - want_mean).abs() < 4.0 * (want_var / n as f64).sqrt());
        // var of the sample variance for a Gaussian: 2σ⁴/(n-1)
        assert!((var - want_var).abs() < 4.0 * want_var * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn bond_at_maturity_is_one() {
        for m in [vasicek(0.05, 0.01, 0.03, 0.02), hull_white()] {
            let s = m.state_at(1.3, 0.004);
            assert_eq!(m.zcb_price(&s, 1.3).unwrap(), 1.0);
            assert!(m.zcb_price(&s, 1.2).is_err());
        }
    }

    #[test]
    fn vasicek_zero_vol_matches_quadrature() {
        let (a, theta) = (0.2, 0.035);
        let m = vasicek(a, 0.0, theta, 0.01);
        let s = m.state_at(0.5, 0.01 - theta);
        let maturity = 7.5;
        // composite Simpson over the deterministic mean path
        let n = 20_000;
        let h = (maturity - s.t) / n as f64;
        let rate = |u: f64| theta + (s.r - theta) * (-a * (u - s.t)).exp();
        let mut acc = rate(s.t) + rate(maturity);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * rate(s.t + i as f64 * h);
        }
        let integral = acc * h / 3.0;
        assert_relative_eq!(
            m.zcb_price(&s, maturity).unwrap(),
            (-integral).exp(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn hull_white_fits_initial_curve() {
        let m = hull_white();
        let ShortRateModel::HullWhite(p) = m else {
            unreachable!()
        };
        let s0 = m.initial_state();
        assert_eq!(s0.x, 0.0);
        for &t in &[1.0, 5.0, 30.0] {
            let want = (-p.ns.zero_rate(t).unwrap() * t).exp();
            assert!((m.zcb_price(&s0, t).unwrap() - want).abs() < 1e-12);
        }
        let curve = m.initial_curve(&TenorGrid::isda());
        for (y, &tau) in curve.yields().iter().zip(TenorGrid::isda().tenors()) {
            assert_relative_eq!(*y, p.ns.zero_rate(tau).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_stationary_vasicek_yields() {
        let m = vasicek(25.0, 0.0, 0.03, 0.03);
        let c = m.initial_curve(&TenorGrid::isda());
        for y in c.yields() {
            assert_relative_eq!(*y, 0.03, epsilon = 1e-14);
        }
    }

    #[test]
    fn hull_white_small_vol_is_close_to_level() {
        let ns = NelsonSiegelParams::with_default_lambda(0.025, 0.0, 0.0);
        let m = ShortRateModel::HullWhite(HullWhiteParams::new(0.03, 1e-4, ns).unwrap());
        // a step into the future: the curve stays at beta0 up to the
        // convexity term, which is O(sigma^2 tau^2)
        let s = m.evolve(&m.initial_state(), 1.0, 0.0).unwrap();
        let c = m.model_yields(&s, &TenorGrid::isda());
        for (y, tau) in c.yields().iter().zip(TenorGrid::isda().tenors()) {
            assert!((y - 0.025).abs() < 1e-8 * (1.0 + tau * tau));
        }
    }

    #[test]
    fn yields_round_trip_to_bond_prices() {
        for m in [vasicek(0.05, 0.01, 0.03, 0.02), hull_white()] {
            let s = m.state_at(2.25, -0.003);
            let grid = TenorGrid::isda();
            let c = m.model_yields(&s, &grid);
            assert_eq!(c.anchor_time(), 2.25);
            for (y, &tau) in c.yields().iter().zip(grid.tenors()) {
                let p = m.zcb_price(&s, s.t + tau).unwrap();
                assert!(((-y * tau).exp() - p).abs() < 1e-14);
            }
        }
    }
}
