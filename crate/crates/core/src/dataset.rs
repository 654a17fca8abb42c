//! Market-state sampling and DIM datasets.
//!
//! A dataset row pairs an initial market state (model parameters, curve
//! parameters and optionally the moneyness spread δ) with a discounted IM
//! trajectory. Training rows carry a single-path label (`M = 1`), validation
//! rows a converged Monte Carlo estimate plus its standard error.
//!
//! # File layout
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "DIMSET\0\0"
//! version      u32       1
//! model        u32       0 = Vasicek, 1 = Hull-White
//! flags        u32       bit 0: δ input present, bit 1: stderr block present
//! d            u32       input dimension
//! n            u32       monitoring times
//! k            u64       rows
//! t_final      f64
//! seed         u64
//! paths        u64       Monte Carlo paths per row
//! skipped      u64       rows dropped because simulation failed
//! bounds       d × (f64 lower, f64 upper)
//! simm digest  32 bytes
//! book digest  32 bytes
//! row ids      k × u32   LHS sample index of each row
//! states       k × d f64
//! labels       k × n f64
//! stderr       k × n f64 (if flagged)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimengine::{PathSimulator, SimulationGrid};
use crate::error::{Error, Result};
use crate::instruments::PortfolioTemplate;
use crate::ratemodel::{HullWhiteParams, ShortRateModel, VasicekParams};
use crate::rng::{self, derive_seed, Domain};
use crate::simm::SimmConfig;
use crate::termstructure::{NelsonSiegelParams, TenorGrid};

const MAGIC: &[u8; 8] = b"DIMSET\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Vasicek,
    HullWhite,
}

/// Which model the inputs parameterize and whether δ is one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting {
    pub model: ModelKind,
    pub moneyness_spread: bool,
}

impl Setting {
    pub const fn vasicek() -> Self {
        Self {
            model: ModelKind::Vasicek,
            moneyness_spread: true,
        }
    }

    pub const fn hull_white() -> Self {
        Self {
            model: ModelKind::HullWhite,
            moneyness_spread: true,
        }
    }

    pub const fn without_spread(self) -> Self {
        Self {
            moneyness_spread: false,
            ..self
        }
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names = match self.model {
            ModelKind::Vasicek => vec!["a", "sigma", "theta", "r0"],
            ModelKind::HullWhite => vec!["a", "sigma", "beta0", "beta1", "beta2"],
        };
        if self.moneyness_spread {
            names.push("delta");
        }
        names
    }

    /// Bounds of the experiment tables. Vasicek θ's lower bound is read as
    /// 0.1% (the column is in percent and tops out at 5%).
    pub fn default_bounds(&self) -> StateBounds {
        let mut b: Vec<(f64, f64)> = match self.model {
            ModelKind::Vasicek => vec![(0.01, 0.10), (0.005, 0.025), (0.001, 0.05), (-0.05, 0.05)],
            ModelKind::HullWhite => vec![
                (0.01, 0.05),
                (0.0005, 0.015),
                (-0.005, 0.05),
                (0.0, 0.01),
                (0.0, 0.01),
            ],
        };
        if self.moneyness_spread {
            b.push((-0.001, 0.001));
        }
        StateBounds::new(b).expect("table bounds are ordered")
    }

    pub fn tag(&self) -> u32 {
        match self.model {
            ModelKind::Vasicek => 0,
            ModelKind::HullWhite => 1,
        }
    }
}

/// An initial market state: the network input vector with its meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub setting: Setting,
    pub values: Vec<f64>,
}

impl MarketState {
    pub fn new(setting: Setting, values: Vec<f64>) -> Result<Self> {
        if values.len() != setting.dim() {
            return Err(Error::Dimension {
                expected: setting.dim(),
                got: values.len(),
            });
        }
        Ok(Self { setting, values })
    }

    pub fn vasicek(a: f64, sigma: f64, theta: f64, r0: f64, delta: f64) -> Self {
        Self {
            setting: Setting::vasicek(),
            values: vec![a, sigma, theta, r0, delta],
        }
    }

    pub fn hull_white(a: f64, sigma: f64, beta0: f64, beta1: f64, beta2: f64, delta: f64) -> Self {
        Self {
            setting: Setting::hull_white(),
            values: vec![a, sigma, beta0, beta1, beta2, delta],
        }
    }

    pub fn model(&self) -> Result<ShortRateModel> {
        let v = &self.values;
        Ok(match self.setting.model {
            ModelKind::Vasicek => {
                ShortRateModel::Vasicek(VasicekParams::new(v[0], v[1], v[2], v[3])?)
            }
            ModelKind::HullWhite => ShortRateModel::HullWhite(HullWhiteParams::new(
                v[0],
                v[1],
                NelsonSiegelParams::with_default_lambda(v[2], v[3], v[4]),
            )?),
        })
    }

    /// Moneyness spread δ added to ATM strikes; 0 when not an input.
    pub fn spread(&self) -> f64 {
        if self.setting.moneyness_spread {
            *self.values.last().expect("non-empty state")
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub bounds: Vec<(f64, f64)>,
}

impl StateBounds {
    /// Per-dimension `(min, max)`; `min == max` pins a dimension.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!(
                    "bounds for dimension {j} are invalid: ({lo}, {hi})"
                )));
            }
        }
        if bounds.is_empty() {
            return Err(Error::config("bounds need at least one dimension"));
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.1).collect()
    }

    pub fn pin(mut self, dim: usize, value: f64) -> Self {
        self.bounds[dim] = (value, value);
        self
    }
}

/// Latin hypercube sample: in every dimension the `k` points occupy each of
/// the `k` equal strata exactly once, jittered uniformly inside the stratum.
pub fn lhs_sample(bounds: &StateBounds, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k < 1 {
        return Err(Error::domain("need at least one sample"));
    }
    let d = bounds.dim();
    let mut rng = rng::seeded(seed);
    let mut out = vec![vec![0.0; d]; k];
    let mut strata: Vec<usize> = (0..k).collect();
    for (j, &(lo, hi)) in bounds.bounds.iter().enumerate() {
        strata.shuffle(&mut rng);
        for (row, &s) in out.iter_mut().zip(&strata) {
            let u: f64 = rng.gen();
            let x = lo + (s as f64 + u) / k as f64 * (hi - lo);
            row[j] = x.clamp(lo, hi);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub setting: Setting,
    pub n_times: usize,
    pub t_final: f64,
    pub seed: u64,
    pub paths: usize,
    pub bounds: StateBounds,
    pub simm_digest: String,
    pub portfolio_digest: String,
    pub skipped: usize,
}

impl DatasetMeta {
    pub fn grid(&self) -> SimulationGrid {
        SimulationGrid::new(self.n_times, self.t_final).expect("stored grid is valid")
    }
}

/// Input states with DIM labels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub meta: DatasetMeta,
    pub row_ids: Vec<u32>,
    pub states: Vec<f64>,
    pub labels: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.setting.dim()
    }

    pub fn n_times(&self) -> usize {
        self.meta.n_times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.states[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.labels[i * n..(i + 1) * n]
    }

    pub fn row_stderr(&self, i: usize) -> Option<&[f64]> {
        let n = self.n_times();
        self.stderr.as_ref().map(|s| &s[i * n..(i + 1) * n])
    }

    pub fn market_state(&self, i: usize) -> MarketState {
        MarketState {
            setting: self.meta.setting,
            values: self.state(i).to_vec(),
        }
    }

    /// Largest stored standard error; the set's accuracy tolerance.
    pub fn max_stderr(&self) -> f64 {
        self.stderr
            .as_ref()
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = Self {
            meta: self.meta.clone(),
            row_ids: Vec::with_capacity(rows.len()),
            states: Vec::with_capacity(rows.len() * self.dim()),
            labels: Vec::with_capacity(rows.len() * self.n_times()),
            stderr: self
                .stderr
                .as_ref()
                .map(|_| Vec::with_capacity(rows.len() * self.n_times())),
        };
        for &i in rows {
            out.row_ids.push(self.row_ids[i]);
            out.states.extend_from_slice(self.state(i));
            out.labels.extend_from_slice(self.label(i));
            if let (Some(dst), Some(src)) = (out.stderr.as_mut(), self.row_stderr(i)) {
                dst.extend_from_slice(src);
            }
        }
        out
    }

    /// Prefixes of one seeded shuffle, so smaller subsets nest in larger ones.
    pub fn shuffled_subsets(&self, sizes: &[usize], seed: u64) -> Result<Vec<Self>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::seeded(derive_seed(seed, Domain::Shuffle)));
        sizes
            .iter()
            .map(|&s| {
                if s > self.len() {
                    Err(Error::config(format!(
                        "subset of {s} rows exceeds dataset of {}",
                        self.len()
                    )))
                } else {
                    Ok(self.select(&order[..s]))
                }
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let d = self.dim();
        let n = self.n_times();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.meta.setting.tag().to_le_bytes())?;
        let flags =
            u32::from(self.meta.setting.moneyness_spread) | (u32::from(self.stderr.is_some()) << 1);
        w.write_all(&flags.to_le_bytes())?;
        w.write_all(&(d as u32).to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.meta.t_final.to_le_bytes())?;
        w.write_all(&self.meta.seed.to_le_bytes())?;
        w.write_all(&(self.meta.paths as u64).to_le_bytes())?;
        w.write_all(&(self.meta.skipped as u64).to_le_bytes())?;
        for &(lo, hi) in &self.meta.bounds.bounds {
            w.write_all(&lo.to_le_bytes())?;
            w.write_all(&hi.to_le_bytes())?;
        }
        for digest in [&self.meta.simm_digest, &self.meta.portfolio_digest] {
            let mut raw = [0u8; 32];
            if let Ok(bytes) = hex::decode(digest) {
                let m = bytes.len().min(32);
                raw[..m].copy_from_slice(&bytes[..m]);
            }
            w.write_all(&raw)?;
        }
        for id in &self.row_ids {
            w.write_all(&id.to_le_bytes())?;
        }
        for block in [Some(&self.states), Some(&self.labels), self.stderr.as_ref()]
            .into_iter()
            .flatten()
        {
            for v in block {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        fn take<const L: usize, R: Read>(r: &mut R) -> std::result::Result<[u8; L], String> {
            let mut buf = [0u8; L];
            r.read_exact(&mut buf)
                .map_err(|e| format!("truncated file: {e}"))?;
            Ok(buf)
        }
        let u32_ = |r: &mut R| take::<4, R>(r).map(u32::from_le_bytes);
        let u64_ = |r: &mut R| take::<8, R>(r).map(u64::from_le_bytes);
        let f64_ = |r: &mut R| take::<8, R>(r).map(f64::from_le_bytes);

        if &take::<8, R>(r)? != MAGIC {
            return Err("not a DIM dataset (bad magic)".into());
        }
        let version = u32_(r)?;
        if version != VERSION {
            return Err(format!("unsupported dataset version {version}"));
        }
        let model = match u32_(r)? {
            0 => ModelKind::Vasicek,
            1 => ModelKind::HullWhite,
            t => return Err(format!("unknown model tag {t}")),
        };
        let flags = u32_(r)?;
        let setting = Setting {
            model,
            moneyness_spread: flags & 1 == 1,
        };
        let d = u32_(r)? as usize;
        if d != setting.dim() {
            return Err(format!("input dimension {d} does not match setting"));
        }
        let n = u32_(r)? as usize;
        let k = u64_(r)? as usize;
        let t_final = f64_(r)?;
        let seed = u64_(r)?;
        let paths = u64_(r)? as usize;
        let skipped = u64_(r)? as usize;
        let mut bounds = Vec::with_capacity(d);
        for _ in 0..d {
            bounds.push((f64_(r)?, f64_(r)?));
        }
        let simm_digest = hex::encode(take::<32, R>(r)?);
        let portfolio_digest = hex::encode(take::<32, R>(r)?);
        let mut row_ids = Vec::with_capacity(k);
        for _ in 0..k {
            row_ids.push(u32_(r)?);
        }
        let mut floats = |count: usize| -> std::result::Result<Vec<f64>, String> {
            let mut bytes = vec![0u8; count * 8];
            r.read_exact(&mut bytes)
                .map_err(|e| format!("truncated data block: {e}"))?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let states = floats(k * d)?;
        let labels = floats(k * n)?;
        let stderr = if flags & 2 == 2 {
            Some(floats(k * n)?)
        } else {
            None
        };
        Ok(Self {
            meta: DatasetMeta {
                setting,
                n_times: n,
                t_final,
                seed,
                paths,
                bounds: StateBounds { bounds },
                simm_digest,
                portfolio_digest,
                skipped,
            },
            row_ids,
            states,
            labels,
            stderr,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file)).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Inspection export: one row per state, inputs then labels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = vec!["row_id".into()];
        header.extend(self.meta.setting.names().iter().map(|s| s.to_string()));
        header.extend((1..=self.n_times()).map(|i| format!("dim_{i}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.row_ids[i].to_string()];
            rec.extend(self.state(i).iter().map(|v| format!("{v:.16e}")));
            rec.extend(self.label(i).iter().map(|v| format!("{v:.16e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
        Ok(())
    }
}

/// Inputs shared by dataset generators.
#[derive(Debug, Clone)]
pub struct DatasetSpec<'a> {
    pub setting: Setting,
    pub bounds: StateBounds,
    pub portfolio: &'a PortfolioTemplate,
    pub grid: SimulationGrid,
    pub simm: &'a SimmConfig,
}

impl DatasetSpec<'_> {
    fn check(&self) -> Result<()> {
        if self.bounds.dim() != self.setting.dim() {
            return Err(Error::Dimension {
                expected: self.setting.dim(),
                got: self.bounds.dim(),
            });
        }
        Ok(())
    }

    /// Discounted IM estimate for one state: build the model, resolve the
    /// strikes on its t0 curve (ATM swap rate plus δ), then simulate.
    pub fn simulate_state(
        &self,
        state: &MarketState,
        paths: usize,
        path_seed: u64,
        row: u32,
    ) -> Result<crate::dimengine::DimTrajectory> {
        let model = state.model()?;
        let curve = model.initial_curve(&TenorGrid::isda());
        let book = self.portfolio.resolve(&curve, state.spread())?;
        PathSimulator::new(model, &book, self.grid, self.simm).mc_dim(paths, path_seed, row)
    }

    /// Labels the given states with `paths` Monte Carlo paths each. Failed
    /// rows are dropped and counted, never resampled.
    pub fn label_states(
        &self,
        states: &[Vec<f64>],
        paths: usize,
        seed: u64,
    ) -> Result<TrainingSet> {
        self.check()?;
        let d = self.setting.dim();
        if let Some(bad) = states.iter().find(|s| s.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        if states.len() > u32::MAX as usize {
            return Err(Error::config("too many rows"));
        }
        let path_seed = derive_seed(seed, Domain::Paths);
        let rows: Vec<Option<crate::dimengine::DimTrajectory>> = states
            .par_iter()
            .enumerate()
            .map(|(i, values)| {
                let state = MarketState {
                    setting: self.setting,
                    values: values.clone(),
                };
                self.simulate_state(&state, paths, path_seed, i as u32).ok()
            })
            .collect();

        let n = self.grid.n_times();
        let mut set = TrainingSet {
            meta: DatasetMeta {
                setting: self.setting,
                n_times: n,
                t_final: self.grid.t_final(),
                seed,
                paths,
                bounds: self.bounds.clone(),
                simm_digest: self.simm.digest(),
                portfolio_digest: self.portfolio.digest(),
                skipped: 0,
            },
            row_ids: Vec::with_capacity(states.len()),
            states: Vec::with_capacity(states.len() * d),
            labels: Vec::with_capacity(states.len() * n),
            stderr: (paths > 1).then(|| Vec::with_capacity(states.len() * n)),
        };
        for (i, (values, row)) in states.iter().zip(rows).enumerate() {
            match row {
                Some(traj) => {
                    set.row_ids.push(i as u32);
                    set.states.extend_from_slice(values);
                    set.labels.extend_from_slice(&traj.values);
                    if let Some(se) = set.stderr.as_mut() {
                        se.extend_from_slice(&traj.stderr);
                    }
                }
                None => set.meta.skipped += 1,
            }
        }
        Ok(set)
    }

    /// `k` LHS states labelled with `paths` paths each.
    pub fn generate(&self, k: usize, paths: usize, seed: u64) -> Result<TrainingSet> {
        self.check()?;
        let states = lhs_sample(&self.bounds, k, derive_seed(seed, Domain::Sampling))?;
        self.label_states(&states, paths, seed)
    }
}

/// Noisy training set: one Monte Carlo path per sampled state.
pub fn generate_training(spec: &DatasetSpec<'_>, k_train: usize, seed: u64) -> Result<TrainingSet> {
    spec.generate(k_train, 1, seed)
}

/// Reference set: `m_valid` paths per sampled state, with standard errors.
pub fn generate_validation(
    spec: &DatasetSpec<'_>,
    k_valid: usize,
    m_valid: usize,
    seed: u64,
) -> Result<TrainingSet> {
    spec.generate(k_valid, m_valid, seed)
}
