//! Nested Monte Carlo simulation of dynamic initial margin.
//!
//! Each path evolves the short rate across the monitoring grid, rebuilds the
//! model curve at every monitoring time, bumps each of its 12 nodes to get
//! PV01s, runs them through the SIMM delta formula and discounts the margin
//! back to t0 with the left-endpoint sum `exp(-Σ_{l<i} r_l·h)`.
//!
//! Float fixings are captured at their exact reset times: when a reset falls
//! inside a step, the path is first evolved to the reset, the fixing is read
//! off that curve, and the step is completed from there.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instruments::{forward_rate, price_portfolio, FixingStore, Portfolio, TIME_EPS};
use crate::ratemodel::{ShortRateModel, ShortRateState};
use crate::rng;
use crate::simm::{delta_margin, pv01_sensitivities, SimmConfig};
use crate::termstructure::{TenorGrid, YieldCurve};

/// Paths per work unit; fixed so the reduction order never depends on the
/// number of worker threads.
const PATH_CHUNK: usize = 256;

/// Monitoring times `t_i = i·T/N`, `i = 1..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    n_times: usize,
    t_final: f64,
}

impl SimulationGrid {
    pub fn new(n_times: usize, t_final: f64) -> Result<Self> {
        if n_times < 1 {
            return Err(Error::domain("grid needs at least one monitoring time"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::domain(format!(
                "grid horizon must be positive, got {t_final}"
            )));
        }
        Ok(Self { n_times, t_final })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn step(&self) -> f64 {
        self.t_final / self.n_times as f64
    }

    /// Monitoring time `t_i` for `i` in `1..=N`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.t_final / self.n_times as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n_times).map(|i| self.time(i))
    }

    /// Index (0-based into the output vector) of the monitoring time nearest `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = (t / self.step()).round().clamp(1.0, self.n_times as f64) as usize;
        i - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImPathResult {
    pub discounted_im: Vec<f64>,
    /// Short rate at each monitoring time, kept when requested.
    pub short_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimTrajectory {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub paths: usize,
}

impl DimTrajectory {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            stderr: vec![0.0; n],
            paths: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, grid: &SimulationGrid, writer: W) -> Result<()> {
        if grid.n_times() != self.len() {
            return Err(Error::Dimension {
                expected: grid.n_times(),
                got: self.len(),
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "dim", "stderr"])?;
        for (i, (v, e)) in self.values.iter().zip(&self.stderr).enumerate() {
            w.write_record([
                format!("{:.16e}", grid.time(i + 1)),
                format!("{v:.16e}"),
                format!("{e:.16e}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<dim csv>", e))?;
        Ok(())
    }

    /// Reads a `t,dim,stderr` file; returns the times alongside the trajectory.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Self)> {
        let mut r = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut stderr = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::config("dim csv row is short"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("bad number in dim csv: {e}")))
            };
            times.push(field(0)?);
            values.push(field(1)?);
            stderr.push(if rec.len() > 2 { field(2)? } else { 0.0 });
        }
        Ok((
            times,
            Self {
                values,
                stderr,
                paths: 0,
            },
        ))
    }
}

/// Running per-time mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, xs: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(xs) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    fn into_trajectory(self) -> DimTrajectory {
        let m = self.count;
        let stderr = if m > 1 {
            self.m2
                .iter()
                .map(|s| (s.max(0.0) / (m - 1) as f64).sqrt() / (m as f64).sqrt())
                .collect()
        } else {
            vec![0.0; self.mean.len()]
        };
        DimTrajectory {
            values: self.mean,
            stderr,
            paths: m,
        }
    }
}

/// Everything needed to simulate IM paths for one market state.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    model: ShortRateModel,
    portfolio: &'a Portfolio,
    grid: SimulationGrid,
    simm: &'a SimmConfig,
    tenors: TenorGrid,
    resets: Vec<(f64, f64)>,
    maturity: f64,
    keep_rates: bool,
}

impl<'a> PathSimulator<'a> {
    pub fn new(
        model: ShortRateModel,
        portfolio: &'a Portfolio,
        grid: SimulationGrid,
        simm: &'a SimmConfig,
    ) -> Self {
        Self {
            model,
            portfolio,
            grid,
            simm,
            tenors: TenorGrid::isda(),
            resets: portfolio.reset_events(),
            maturity: portfolio.maturity(),
            keep_rates: false,
        }
    }

    pub fn keep_short_rates(mut self, keep: bool) -> Self {
        self.keep_rates = keep;
        self
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    fn record_fixings(
        &self,
        curve: &YieldCurve,
        t: f64,
        from: &mut usize,
        fixings: &mut FixingStore,
    ) {
        while *from < self.resets.len() && self.resets[*from].0 <= t + TIME_EPS {
            let (reset, end) = self.resets[*from];
            fixings.record(reset, end, forward_rate(curve, t, reset, end));
            *from += 1;
        }
    }

    /// Margin at time `t` for the given model curve.
    fn margin(&self, curve: &YieldCurve, t: f64, fixings: &FixingStore) -> Result<f64> {
        if t >= self.maturity - TIME_EPS {
            return Ok(0.0);
        }
        let sens = pv01_sensitivities(|c| price_portfolio(c, self.portfolio, t, fixings), curve)?;
        Ok(delta_margin(&sens, self.simm))
    }

    /// Margin at t0 from the initial model curve; no simulation.
    pub fn inception_margin(&self) -> Result<f64> {
        let s0 = self.model.initial_state();
        let curve = self.model.model_yields(&s0, &self.tenors);
        self.margin(&curve, s0.t, &FixingStore::new())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ImPathResult> {
        let n = self.grid.n_times();
        let h = self.grid.step();
        let mut out = vec![0.0; n];
        let mut rates = self.keep_rates.then(|| Vec::with_capacity(n));
        if self.portfolio.is_empty() {
            if let Some(r) = rates.as_mut() {
                r.resize(n, 0.0);
            }
            return Ok(ImPathResult {
                discounted_im: out,
                short_rates: rates,
            });
        }

        let mut state = self.model.initial_state();
        let mut fixings = FixingStore::new();
        let mut next_reset = 0;
        let curve0 = self.model.model_yields(&state, &self.tenors);
        self.record_fixings(&curve0, state.t, &mut next_reset, &mut fixings);

        let mut log_discount = 0.0;
        for i in 1..=n {
            let t_i = self.grid.time(i);
            if t_i >= self.maturity - TIME_EPS && !self.keep_rates {
                break;
            }
            let r_left = state.r;
            let step = |s: &ShortRateState, dt: f64, rng: &mut R| -> Result<ShortRateState> {
                let z: f64 = rng.sample(StandardNormal);
                self.model.evolve(s, dt, z)
            };
            let wrap = |e: Error| Error::PathStep {
                step: i,
                source: Box::new(e),
            };
            while next_reset < self.resets.len() && self.resets[next_reset].0 < t_i - TIME_EPS {
                let reset = self.resets[next_reset].0;
                state = step(&state, reset - state.t, rng).map_err(wrap)?;
                let curve = self.model.model_yields(&state, &self.tenors);
                self.record_fixings(&curve, reset, &mut next_reset, &mut fixings);
            }
            state = step(&state, t_i - state.t, rng).map_err(wrap)?;
            // pin the clock to the grid so sub-steps do not accumulate drift
            state = self.model.state_at(t_i, state.x);
            log_discount += r_left * h;

            let curve = self.model.model_yields(&state, &self.tenors);
            self.record_fixings(&curve, t_i, &mut next_reset, &mut fixings);
            let im = self.margin(&curve, t_i, &fixings).map_err(wrap)?;
            out[i - 1] = im * (-log_discount).exp();
            if let Some(r) = rates.as_mut() {
                r.push(state.r);
            }
        }
        Ok(ImPathResult {
            discounted_im: out,
            short_rates: rates,
        })
    }

    /// Discounted IM path number `path` of market state `state_index`.
    pub fn simulate_path(&self, seed: u64, state_index: u32, path: u32) -> Result<ImPathResult> {
        self.simulate(&mut rng::path_rng(seed, state_index, path))
    }

    /// Monte Carlo DIM estimate over `paths` paths with its standard error.
    pub fn mc_dim(&self, paths: usize, seed: u64, state_index: u32) -> Result<DimTrajectory> {
        if paths < 1 {
            return Err(Error::domain("need at least one Monte Carlo path"));
        }
        if paths > u32::MAX as usize {
            return Err(Error::domain("too many paths for one state"));
        }
        let n = self.grid.n_times();
        let chunks: Vec<(usize, usize)> = (0..paths)
            .step_by(PATH_CHUNK)
            .map(|lo| (lo, (lo + PATH_CHUNK).min(paths)))
            .collect();
        let partial: Vec<Moments> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = Moments::new(n);
                for j in lo..hi {
                    let p = self.simulate_path(seed, state_index, j as u32)?;
                    acc.push(&p.discounted_im);
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut total = Moments::new(n);
        for m in &partial {
            total.merge(m);
        }
        Ok(total.into_trajectory())
    }
}

/// One discounted IM path driven by `rng`.
pub fn simulate_im_path<R: Rng + ?Sized>(
    model: &ShortRateModel,
    portfolio: &Portfolio,
    grid: &SimulationGrid,
    simm: &SimmConfig,
    rng: &mut R,
) -> Result<ImPathResult> {
    PathSimulator::new(*model, portfolio, *grid, simm).simulate(rng)
}

pub fn mc_dim(
    model: &ShortRateModel,
    portfolio: &Portfolio,
    grid: &SimulationGrid,
    simm: &SimmConfig,
    paths: usize,
    seed: u64,
) -> Result<DimTrajectory> {
    PathSimulator::new(*model, portfolio, *grid, simm).mc_dim(paths, seed, 0)
}

/// Deterministic margin at t0.
pub fn dim_at_inception(
    model: &ShortRateModel,
    portfolio: &Portfolio,
    simm: &SimmConfig,
) -> Result<f64> {
    let grid = SimulationGrid::new(1, 1.0)?;
    PathSimulator::new(*model, portfolio, grid, simm).inception_margin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::PortfolioTemplate;
    use crate::ratemodel::{HullWhiteParams, VasicekParams};
    use crate::simm::SensitivityVector;
    use crate::termstructure::NelsonSiegelParams;

    fn vasicek(sigma: f64) -> ShortRateModel {
        ShortRateModel::Vasicek(VasicekParams::new(0.05, sigma, 0.03, 0.01).unwrap())
    }

    fn single_swap(model: &ShortRateModel) -> Portfolio {
        let curve = model.initial_curve(&TenorGrid::isda());
        PortfolioTemplate::single_forward_swap()
            .resolve(&curve, 0.0)
            .unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = SimulationGrid::new(160, 6.0).unwrap();
        assert_eq!(g.step(), 6.0 / 160.0);
        assert_eq!(g.times().count(), 160);
        assert_eq!(g.time(160), 6.0);
        assert_eq!(g.nearest_index(1.75), 46);
        assert!(SimulationGrid::new(0, 6.0).is_err());
        assert!(SimulationGrid::new(10, 0.0).is_err());
    }

    #[test]
    fn empty_portfolio_is_all_zero() {
        let m = vasicek(0.01);
        let simm = SimmConfig::default();
        let grid = SimulationGrid::new(12, 6.0).unwrap();
        let empty = Portfolio::default();
        let d = mc_dim(&m, &empty, &grid, &simm, 8, 1).unwrap();
        assert!(d.values.iter().chain(&d.stderr).all(|&v| v == 0.0));
        assert_eq!(dim_at_inception(&m, &empty, &simm).unwrap(), 0.0);
    }

    #[test]
    fn zero_notional_gives_exact_zero() {
        let m = vasicek(0.01);
        let simm = SimmConfig::default();
        let grid = SimulationGrid::new(12, 6.0).unwrap();
        let mut book = single_swap(&m);
        book.swaps[0] = book.swaps[0].with_notional(0.0);
        let d = mc_dim(&m, &book, &grid, &simm, 4, 3).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_volatility_paths_are_identical() {
        for m in [
            vasicek(0.0),
            ShortRateModel::HullWhite(
                HullWhiteParams::new(
                    0.03,
                    0.0,
                    NelsonSiegelParams::with_default_lambda(0.02, 0.01, 0.0),
                )
                .unwrap(),
            ),
        ] {
            let book = single_swap(&m);
            let simm = SimmConfig::default();
            let grid = SimulationGrid::new(24, 6.0).unwrap();
            let sim = PathSimulator::new(m, &book, grid, &simm);
            let a = sim.simulate_path(1, 0, 0).unwrap();
            let b = sim.simulate_path(99, 5, 17).unwrap();
            assert_eq!(a, b);
            let one = sim.mc_dim(1, 7, 0).unwrap();
            let many = sim.mc_dim(300, 7, 0).unwrap();
            assert_eq!(one.values, many.values);
            assert_eq!(one.values, a.discounted_im);
        }
    }

    #[test]
    fn paths_are_nonnegative_and_vanish_after_maturity() {
        let m = vasicek(0.02);
        let book = single_swap(&m);
        let simm = SimmConfig::default();
        let grid = SimulationGrid::new(40, 7.0).unwrap();
        let sim = PathSimulator::new(m, &book, grid, &simm).keep_short_rates(true);
        for j in 0..20 {
            let p = sim.simulate_path(11, 0, j).unwrap();
            assert!(p.discounted_im.iter().all(|&v| v >= 0.0));
            for (i, t) in grid.times().enumerate() {
                if t >= 6.0 - 1e-12 {
                    assert_eq!(p.discounted_im[i], 0.0);
                } else {
                    assert!(p.discounted_im[i] > 0.0);
                }
            }
            assert_eq!(p.short_rates.as_ref().unwrap().len(), 40);
        }
    }

    #[test]
    fn single_label_equals_path() {
        let m = vasicek(0.01);
        let book = single_swap(&m);
        let simm = SimmConfig::default();
        let grid = SimulationGrid::new(20, 6.0).unwrap();
        let sim = PathSimulator::new(m, &book, grid, &simm);
        let label = sim.mc_dim(1, 5, 3).unwrap();
        assert_eq!(
            label.values,
            sim.simulate_path(5, 3, 0).unwrap().discounted_im
        );
        assert!(label.stderr.iter().all(|&e| e == 0.0));
        assert!(sim.mc_dim(0, 5, 3).is_err());
    }

    #[test]
    fn chunked_moments_match_two_pass() {
        let m = vasicek(0.015);
        let book = single_swap(&m);
        let simm = SimmConfig::default();
        let grid = SimulationGrid::new(10, 6.0).unwrap();
        let sim = PathSimulator::new(m, &book, grid, &simm);
        let paths = 600;
        let d = sim.mc_dim(paths, 21, 2).unwrap();
        let all: Vec<Vec<f64>> = (0..paths as u32)
            .map(|j| sim.simulate_path(21, 2, j).unwrap().discounted_im)
            .collect();
        for i in 0..10 {
            let mean = all.iter().map(|p| p[i]).sum::<f64>() / paths as f64;
            let var = all.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
            assert!((d.values[i] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            assert!(
                (d.stderr[i] - (var / paths as f64).sqrt()).abs()
                    <= 1e-10 * d.stderr[i].max(1e-300)
            );
        }
    }

    #[test]
    fn inception_margin_is_delta_margin_of_t0_curve() {
        let m = vasicek(0.01);
        let book = single_swap(&m);
        let simm = SimmConfig::default();
        let curve = m.initial_curve(&TenorGrid::isda());
        let f = FixingStore::new();
        let sens: SensitivityVector =
            pv01_sensitivities(|c| price_portfolio(c, &book, 0.0, &f), &curve).unwrap();
        let want = delta_margin(&sens, &simm);
        assert!(want > 0.0);
        assert_eq!(dim_at_inception(&m, &book, &simm).unwrap(), want);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let grid = SimulationGrid::new(3, 1.5).unwrap();
        let d = DimTrajectory {
            values: vec![0.1, 0.2, 1.0 / 3.0],
            stderr: vec![0.0, 1e-3, 2.5e-4],
            paths: 10,
        };
        let mut buf = Vec::new();
        d.write_csv(&grid, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,dim,stderr\n"));
        let (times, back) = DimTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(times, vec![0.5, 1.0, 1.5]);
        assert_eq!(back.values, d.values);
        assert_eq!(back.stderr, d.stderr);
    }
}
