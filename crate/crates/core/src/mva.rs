//! Margin valuation adjustment from a DIM profile.
//!
//! With constant default intensities the funding spread is
//! `f(s) = ((1 - R_B)·λ_B - s_I)·exp(-(λ_B + λ_C)(s - t0))`, and MVA is the
//! right-endpoint sum `Σ_{i=1..N} f(t_i)·DIM_i·h`.

use serde::{Deserialize, Serialize};

use crate::dimengine::{DimTrajectory, SimulationGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundingParams {
    pub recovery: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub im_spread: f64,
    #[serde(default)]
    pub t0: f64,
}

impl FundingParams {
    pub fn new(
        recovery: f64,
        lambda_b: f64,
        lambda_c: f64,
        im_spread: f64,
        t0: f64,
    ) -> Result<Self> {
        let p = Self {
            recovery,
            lambda_b,
            lambda_c,
            im_spread,
            t0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recovery) {
            return Err(Error::config(format!(
                "recovery {} outside [0, 1]",
                self.recovery
            )));
        }
        if !(self.lambda_b >= 0.0 && self.lambda_c >= 0.0) {
            return Err(Error::config("default intensities must be non-negative"));
        }
        Ok(())
    }

    /// R_B = 0.4, λ_B = 1.67%, λ_C = 0, s_I = 0.
    pub fn reference() -> Self {
        Self {
            recovery: 0.4,
            lambda_b: 1.67e-2,
            lambda_c: 0.0,
            im_spread: 0.0,
            t0: 0.0,
        }
    }

    pub fn spread_at(&self, s: f64) -> Result<f64> {
        if !(s > self.t0) {
            return Err(Error::domain(format!(
                "funding spread needs s > t0 = {}, got {s}",
                self.t0
            )));
        }
        let carry = (1.0 - self.recovery) * self.lambda_b - self.im_spread;
        Ok(carry * (-(self.lambda_b + self.lambda_c) * (s - self.t0)).exp())
    }
}

impl Default for FundingParams {
    fn default() -> Self {
        Self::reference()
    }
}

pub fn funding_spread(p: &FundingParams, s: f64) -> Result<f64> {
    p.spread_at(s)
}

/// MVA from DIM values on the grid's monitoring times.
pub fn mva_from_values(values: &[f64], grid: &SimulationGrid, p: &FundingParams) -> Result<f64> {
    if values.len() != grid.n_times() {
        return Err(Error::Dimension {
            expected: grid.n_times(),
            got: values.len(),
        });
    }
    let h = grid.step();
    grid.times()
        .zip(values)
        .try_fold(0.0, |acc, (t, dim)| Ok(acc + p.spread_at(t)? * dim * h))
}

pub fn mva_quadrature(
    dim: &DimTrajectory,
    grid: &SimulationGrid,
    p: &FundingParams,
) -> Result<f64> {
    mva_from_values(&dim.values, grid, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spread_cases() {
        let zero = FundingParams::new(0.4, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(funding_spread(&zero, 3.0).unwrap(), 0.0);
        let p = FundingParams::reference();
        // 0.6·0.0167·e^{-0.0167}, mpmath
        assert_relative_eq!(
            funding_spread(&p, 1.0).unwrap(),
            9.854_055_493_301_628e-3,
            max_relative = 1e-14
        );
        let full_recovery = FundingParams::new(1.0, 0.02, 0.01, 0.0, 0.0).unwrap();
        assert_eq!(funding_spread(&full_recovery, 2.0).unwrap(), 0.0);
        assert!(funding_spread(&p, 0.0).is_err());
        assert!(FundingParams::new(1.2, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(FundingParams::new(0.4, -0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_dim_zero_mva() {
        let g = SimulationGrid::new(40, 6.0).unwrap();
        let dim = DimTrajectory::zeros(40);
        assert_eq!(
            mva_quadrature(&dim, &g, &FundingParams::reference()).unwrap(),
            0.0
        );
        assert!(mva_from_values(&[1.0; 39], &g, &FundingParams::reference()).is_err());
    }

    #[test]
    fn unit_dim_matches_integral_to_first_order() {
        let p = FundingParams::new(0.4, 0.05, 0.0, 0.0, 0.0).unwrap();
        let t_end: f64 = 6.0;
        let k = 0.6 * 0.05;
        let exact = k * (1.0 - (-0.05 * t_end).exp()) / 0.05;
        for n in [40usize, 160] {
            let g = SimulationGrid::new(n, t_end).unwrap();
            let m = mva_from_values(&vec![1.0; n], &g, &p).unwrap();
            let h = g.step();
            // right-endpoint sum of a decreasing function sits below the integral by ~h/2·(f(0) - f(T))
            let bias = 0.5 * h * (k - p.spread_at(t_end).unwrap());
            assert!((m - exact).abs() < 1.1 * bias);
        }
    }

    #[test]
    fn linear_and_first_order() {
        let p = FundingParams::reference();
        let t_end: f64 = 6.0;
        let dim_fn = |t: f64| 2.0 - 0.25 * t + 0.1 * (0.5 * t).sin();
        let g = SimulationGrid::new(50, t_end).unwrap();
        let vals: Vec<f64> = g.times().map(dim_fn).collect();
        let m = mva_from_values(&vals, &g, &p).unwrap();
        let scaled: Vec<f64> = vals.iter().map(|v| 3.5 * v).collect();
        assert_relative_eq!(
            mva_from_values(&scaled, &g, &p).unwrap(),
            3.5 * m,
            max_relative = 1e-14
        );

        // reference integral by composite Simpson on a very fine grid
        let n = 200_000;
        let h = t_end / n as f64;
        let integrand = |t: f64| {
            let f = (1.0 - p.recovery) * p.lambda_b * (-p.lambda_b * t).exp();
            f * dim_fn(t)
        };
        let mut acc = integrand(0.0) + integrand(t_end);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(i as f64 * h);
        }
        let exact = acc * h / 3.0;
        let errs: Vec<f64> = [40usize, 80, 160, 320]
            .iter()
            .map(|&n| {
                let g = SimulationGrid::new(n, t_end).unwrap();
                let v: Vec<f64> = g.times().map(dim_fn).collect();
                (mva_from_values(&v, &g, &p).unwrap() - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn nonnegative_for_nonnegative_dim() {
        let p = FundingParams::new(0.3, 0.02, 0.01, 0.005, 0.0).unwrap();
        let g = SimulationGrid::new(10, 5.0).unwrap();
        assert!(mva_from_values(&[0.5; 10], &g, &p).unwrap() >= 0.0);
    }
}
