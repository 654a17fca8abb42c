//! Experiment orchestration behind the command-line front end.
//!
//! A run directory holds everything needed to repeat an experiment: the
//! resolved config, the portfolio and SIMM parameters it used, the datasets,
//! trained models and every CSV the reports are computed from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{
    generate_training, generate_validation, DatasetMeta, DatasetSpec, MarketState, Setting,
    StateBounds, TrainingSet,
};
use crate::dimengine::{DimTrajectory, SimulationGrid};
use crate::error::{Error, Result};
use crate::instruments::PortfolioTemplate;
use crate::mva::{mva_from_values, FundingParams};
use crate::neuralnet::{train, MlpModel, TrainConfig, TrainReport};
use crate::rng::{derive_seed, Domain};
use crate::simm::SimmConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.bin";
pub const VALID_FILE: &str = "valid.bin";
const PORTFOLIO_FILE: &str = "portfolio.json";
const SIMM_FILE: &str = "simm.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioSource {
    SingleSwap,
    SixSwapBook,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_times: usize,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub validation: u64,
    pub training: u64,
}

/// Reduced training schedule for single-machine runs: `epochs` passes but at
/// least `min_steps` optimizer steps, with the plateau and stopping
/// patiences scaled to the epoch count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeskBudget {
    pub epochs: usize,
    pub min_steps: usize,
    pub plateau_divisor: usize,
    pub stop_divisor: usize,
}

impl Default for DeskBudget {
    fn default() -> Self {
        Self {
            epochs: 32,
            min_steps: 2048,
            plateau_divisor: 10,
            stop_divisor: 3,
        }
    }
}

impl DeskBudget {
    pub fn config_for(&self, base: &TrainConfig, rows: usize) -> TrainConfig {
        let rows = rows.max(1);
        let epochs = (self.min_steps * base.batch_size)
            .div_ceil(rows)
            .max(self.epochs);
        let mut cfg = base.clone();
        cfg.max_epochs = epochs;
        cfg.plateau_patience = (epochs / self.plateau_divisor.max(1)).max(2);
        cfg.early_stop.patience = (epochs / self.stop_divisor.max(1)).max(5);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressAxis {
    pub variable: String,
    pub values: Vec<f64>,
}

/// Two-way grid of states around `base`, varying two input variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressGrid {
    pub base: Vec<f64>,
    pub rows: StressAxis,
    pub cols: StressAxis,
    #[serde(default)]
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub portfolio: PortfolioSource,
    pub grid: GridSpec,
    pub k_train: usize,
    pub k_valid: usize,
    pub m_valid: usize,
    pub trials: usize,
    pub ladder: Option<Vec<usize>>,
    pub train: TrainConfig,
    pub budget: Option<DeskBudget>,
    pub simm: Option<PathBuf>,
    pub funding: FundingParams,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    pub t_gamma: Option<f64>,
    pub stress: Option<StressGrid>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setting: Setting::vasicek(),
            bounds: None,
            portfolio: PortfolioSource::SingleSwap,
            grid: GridSpec {
                n_times: 160,
                t_final: 6.0,
            },
            k_train: 1 << 22,
            k_valid: 1 << 9,
            m_valid: 1 << 20,
            trials: 1,
            ladder: None,
            train: TrainConfig::default(),
            budget: None,
            simm: None,
            funding: FundingParams::reference(),
            seeds: Seeds {
                data: 1,
                validation: 2,
                training: 3,
            },
            output_dir: PathBuf::from("run"),
            t_gamma: None,
            stress: None,
        }
    }
}

fn resolve_against(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it are taken relative to the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = resolve_against(base, &cfg.output_dir);
        if let Some(s) = &cfg.simm {
            cfg.simm = Some(resolve_against(base, s));
        }
        if let PortfolioSource::File(p) = &cfg.portfolio {
            cfg.portfolio = PortfolioSource::File(resolve_against(base, p));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_train < 1 || self.k_valid < 1 || self.m_valid < 1 || self.trials < 1 {
            return Err(Error::config(
                "dataset sizes and trial count must be at least 1",
            ));
        }
        if self.k_train > u32::MAX as usize || self.k_valid > u32::MAX as usize {
            return Err(Error::config("dataset sizes exceed the row-index range"));
        }
        self.grid()?;
        self.state_bounds()?;
        self.train.validate()?;
        self.funding.validate()?;
        for k in self.ladder_sizes() {
            if k < 1 || k > self.k_train {
                return Err(Error::config(format!(
                    "ladder size {k} outside 1..={}",
                    self.k_train
                )));
            }
        }
        if let Some(p) = &self.simm {
            if !p.exists() {
                return Err(Error::config(format!(
                    "SIMM config {} does not exist",
                    p.display()
                )));
            }
        }
        if let PortfolioSource::File(p) = &self.portfolio {
            if !p.exists() {
                return Err(Error::config(format!(
                    "portfolio file {} does not exist",
                    p.display()
                )));
            }
        }
        if let Some(s) = &self.stress {
            if s.base.len() != self.setting.dim() {
                return Err(Error::config("stress base state has the wrong dimension"));
            }
            self.variable_index(&s.rows.variable)?;
            self.variable_index(&s.cols.variable)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SimulationGrid> {
        SimulationGrid::new(self.grid.n_times, self.grid.t_final)
            .map_err(|e| Error::config(e.to_string()))
    }

    pub fn state_bounds(&self) -> Result<StateBounds> {
        match &self.bounds {
            None => Ok(self.setting.default_bounds()),
            Some(b) => {
                if b.len() != self.setting.dim() {
                    return Err(Error::config(format!(
                        "bounds list {} dimensions, setting needs {}",
                        b.len(),
                        self.setting.dim()
                    )));
                }
                StateBounds::new(b.clone())
            }
        }
    }

    pub fn portfolio_template(&self) -> Result<PortfolioTemplate> {
        match &self.portfolio {
            PortfolioSource::SingleSwap => Ok(PortfolioTemplate::single_forward_swap()),
            PortfolioSource::SixSwapBook => Ok(PortfolioTemplate::six_swap_book()),
            PortfolioSource::File(p) => PortfolioTemplate::load(p),
        }
    }

    pub fn simm_config(&self) -> Result<SimmConfig> {
        match &self.simm {
            None => Ok(SimmConfig::default()),
            Some(p) => SimmConfig::load(p),
        }
    }

    /// Training subset sizes: the configured ladder, else powers of two from
    /// 2^9 up to `k_train` (which is always included).
    pub fn ladder_sizes(&self) -> Vec<usize> {
        if let Some(l) = &self.ladder {
            return l.clone();
        }
        let mut sizes: Vec<usize> = (9..usize::BITS)
            .map(|p| 1usize << p)
            .take_while(|&s| s < self.k_train)
            .collect();
        sizes.push(self.k_train);
        sizes
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.setting
            .names()
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::config(format!("unknown state variable `{name}`")))
    }

    pub fn train_config_for(&self, rows: usize, seed: u64) -> TrainConfig {
        let mut cfg = match &self.budget {
            Some(b) => b.config_for(&self.train, rows),
            None => self.train.clone(),
        };
        cfg.seed = seed;
        cfg
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Borrowed inputs shared by generation, reporting and one-off runs.
pub struct Resolved {
    pub template: PortfolioTemplate,
    pub simm: SimmConfig,
    pub grid: SimulationGrid,
    pub bounds: StateBounds,
}

impl Resolved {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            template: cfg.portfolio_template()?,
            simm: cfg.simm_config()?,
            grid: cfg.grid()?,
            bounds: cfg.state_bounds()?,
        })
    }

    pub fn spec(&self, setting: Setting) -> DatasetSpec<'_> {
        DatasetSpec {
            setting,
            bounds: self.bounds.clone(),
            portfolio: &self.template,
            grid: self.grid,
            simm: &self.simm,
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub files: BTreeMap<String, String>,
    pub train: DatasetMeta,
    pub train_rows: usize,
    pub valid: DatasetMeta,
    pub valid_rows: usize,
    pub valid_tolerance: f64,
}

/// Generates the training and validation sets into the run directory.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Manifest> {
    let res = Resolved::new(cfg)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;

    res.template.save(&dir.join(PORTFOLIO_FILE))?;
    write_text(&dir.join(SIMM_FILE), &res.simm.to_json())?;
    let mut stored = cfg.clone();
    stored.portfolio = PortfolioSource::File(PORTFOLIO_FILE.into());
    stored.simm = Some(SIMM_FILE.into());
    stored.output_dir = PathBuf::from(".");
    write_text(&dir.join(CONFIG_FILE), &stored.to_json())?;

    let spec = res.spec(cfg.setting);
    let train_set = generate_training(&spec, cfg.k_train, cfg.seeds.data)?;
    train_set.save(&dir.join(TRAIN_FILE))?;
    let valid_set = generate_validation(&spec, cfg.k_valid, cfg.m_valid, cfg.seeds.validation)?;
    valid_set.save(&dir.join(VALID_FILE))?;
    let csv_path = dir.join("valid.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    valid_set.write_csv(file)?;

    let mut files = BTreeMap::new();
    for name in [
        CONFIG_FILE,
        PORTFOLIO_FILE,
        SIMM_FILE,
        TRAIN_FILE,
        VALID_FILE,
        "valid.csv",
    ] {
        files.insert(name.to_string(), sha256_file(&dir.join(name))?);
    }
    let manifest = Manifest {
        config_sha256: files[CONFIG_FILE].clone(),
        files,
        train_rows: train_set.len(),
        train: train_set.meta,
        valid_rows: valid_set.len(),
        valid_tolerance: valid_set.max_stderr(),
        valid: valid_set.meta,
    };
    write_text(
        &dir.join(MANIFEST_FILE),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub rows: usize,
    pub trial: usize,
    pub seed: u64,
    pub val_rmse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub model_file: String,
    pub model_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub rows: usize,
    pub trials: usize,
    pub mean_rmse: f64,
    /// 95% half-width with a Student-t multiplier; absent for one trial.
    pub ci95_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub trials: Vec<TrialResult>,
    pub ladder: Vec<LadderPoint>,
}

/// Sample mean and 95% confidence half-width with `n - 1` degrees of freedom.
pub fn mean_confidence(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, Some(t * (var / n as f64).sqrt()))
}

/// Least-squares slope of `log2(rmse)` against `log2(rows)`.
pub fn log2_slope(points: &[LadderPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.rows as f64).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_rmse.log2()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn model_file_name(rows: usize, trial: usize) -> String {
    format!("models/k{rows}_trial{trial}.mlp")
}

/// Trains `trials` networks on every ladder subset of the stored training set.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    let train_set = TrainingSet::load(&dir.join(TRAIN_FILE))?;
    let valid_set = TrainingSet::load(&dir.join(VALID_FILE))?;
    let sizes = cfg.ladder_sizes();
    if let Some(&k) = sizes.iter().find(|&&k| k > train_set.len()) {
        return Err(Error::Incompatible(format!(
            "ladder size {k} exceeds the {} stored training rows",
            train_set.len()
        )));
    }
    create_dir(&dir.join("models"))?;
    create_dir(&dir.join("reports"))?;

    let mut trials = Vec::new();
    for trial in 0..cfg.trials {
        let seed = cfg.seeds.training.wrapping_add(trial as u64);
        for subset in train_set.shuffled_subsets(&sizes, seed)? {
            let (result, _) = run_trial(cfg, dir, &subset, &valid_set, trial, seed)?;
            trials.push(result);
        }
    }
    let ladder = sizes
        .iter()
        .map(|&rows| {
            let rmses: Vec<f64> = trials
                .iter()
                .filter(|t| t.rows == rows)
                .map(|t| t.val_rmse)
                .collect();
            let (mean_rmse, ci95_half_width) = mean_confidence(&rmses);
            LadderPoint {
                rows,
                trials: rmses.len(),
                mean_rmse,
                ci95_half_width,
            }
        })
        .collect();
    let outcome = TrainOutcome { trials, ladder };
    write_train_tables(dir, &outcome)?;
    Ok(outcome)
}

fn run_trial(
    cfg: &ExperimentConfig,
    dir: &Path,
    subset: &TrainingSet,
    valid_set: &TrainingSet,
    trial: usize,
    seed: u64,
) -> Result<(TrialResult, TrainReport)> {
    let rows = subset.len();
    let tcfg = cfg.train_config_for(rows, seed);
    let (model, report) = train(subset, valid_set, &tcfg)?;
    let model_file = model_file_name(rows, trial);
    model.save(&dir.join(&model_file))?;
    let report_path = dir.join(format!("reports/k{rows}_trial{trial}.csv"));
    let f = fs::File::create(&report_path).map_err(|e| Error::io(&report_path, e))?;
    report.write_csv(f)?;
    Ok((
        TrialResult {
            rows,
            trial,
            seed,
            val_rmse: report.best_val_rmse(),
            best_epoch: report.best_epoch,
            epochs_run: report.epochs.len(),
            model_sha256: model.digest(),
            model_file,
        },
        report,
    ))
}

fn write_train_tables(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    let path = dir.join("train_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for t in &outcome.trials {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = dir.join("ladder.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["rows", "trials", "mean_rmse", "ci95_half_width"])?;
    for p in &outcome.ladder {
        w.write_record([
            p.rows.to_string(),
            p.trials.to_string(),
            format!("{:.16e}", p.mean_rmse),
            p.ci95_half_width
                .map(|h| format!("{h:.16e}"))
                .unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_text(
        &dir.join("train_summary.json"),
        &serde_json::to_string_pretty(outcome)?,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvaRow {
    pub row_id: u32,
    pub mva_truth: f64,
    pub mva_pred: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressCell {
    pub row_value: f64,
    pub col_value: f64,
    pub truth_t_gamma: f64,
    pub pred_t_gamma: f64,
    pub rel_err_t_gamma: f64,
    pub truth_2t_gamma: Option<f64>,
    pub pred_2t_gamma: Option<f64>,
    pub rel_err_2t_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rmse: f64,
    pub t_gamma: f64,
    pub t_gamma_index: usize,
    pub two_t_gamma_index: Option<usize>,
    /// Prediction minus truth at `t_γ` (and `2t_γ`) per validation state.
    pub errors_t_gamma: Vec<f64>,
    pub errors_2t_gamma: Option<Vec<f64>>,
    pub mva: Vec<MvaRow>,
    pub mva_rel_err_median: f64,
    pub mva_rel_err_max: f64,
}

/// Index of the monitoring time with the largest sample variance of `labels`
/// (`rows × n`, row-major).
pub fn max_variance_index(labels: &[f64], n: usize) -> usize {
    let k = labels.len() / n;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let col = (0..k).map(|r| labels[r * n + i]);
        let mean = col.clone().sum::<f64>() / k as f64;
        let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>();
        if var > best.1 {
            best = (i, var);
        }
    }
    best.0
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative error, with `0/0` read as no error.
pub fn relative_error(pred: f64, truth: f64) -> f64 {
    if pred == truth {
        0.0
    } else {
        (pred - truth).abs() / truth.abs()
    }
}

/// Error statistics of `predictions` (`rows × n`) against a validation set.
pub fn evaluate_predictions(
    valid: &TrainingSet,
    predictions: &[f64],
    funding: &FundingParams,
    t_gamma: Option<f64>,
) -> Result<ValidationReport> {
    let n = valid.n_times();
    if predictions.len() != valid.labels.len() {
        return Err(Error::Dimension {
            expected: valid.labels.len(),
            got: predictions.len(),
        });
    }
    let grid = valid.meta.grid();
    let pred = Array2::from_shape_vec((valid.len(), n), predictions.to_vec()).expect("shape");
    let truth = Array2::from_shape_vec((valid.len(), n), valid.labels.clone()).expect("shape");
    let rmse = crate::neuralnet::batch_mse(pred.view(), truth.view()).sqrt();

    let tg_idx = match t_gamma {
        Some(t) => grid.nearest_index(t),
        None => max_variance_index(&valid.labels, n),
    };
    let t_gamma = grid.time(tg_idx + 1);
    let two_idx =
        (2.0 * t_gamma <= grid.t_final() + 1e-12).then(|| grid.nearest_index(2.0 * t_gamma));
    let diff = &pred - &truth;
    let errors_t_gamma = diff.index_axis(Axis(1), tg_idx).to_vec();
    let errors_2t_gamma = two_idx.map(|i| diff.index_axis(Axis(1), i).to_vec());

    let mut mva = Vec::with_capacity(valid.len());
    for (r, (p, t)) in pred.outer_iter().zip(truth.outer_iter()).enumerate() {
        let mva_pred = mva_from_values(p.as_slice().expect("contiguous"), &grid, funding)?;
        let mva_truth = mva_from_values(t.as_slice().expect("contiguous"), &grid, funding)?;
        mva.push(MvaRow {
            row_id: valid.row_ids[r],
            mva_truth,
            mva_pred,
            rel_err: relative_error(mva_pred, mva_truth),
        });
    }
    let rel: Vec<f64> = mva.iter().map(|m| m.rel_err).collect();
    Ok(ValidationReport {
        rmse,
        t_gamma,
        t_gamma_index: tg_idx,
        two_t_gamma_index: two_idx,
        errors_t_gamma,
        errors_2t_gamma,
        mva_rel_err_median: median(&rel),
        mva_rel_err_max: rel.iter().copied().fold(0.0, f64::max),
        mva,
    })
}

pub fn predict_set(model: &MlpModel, set: &TrainingSet) -> Result<Vec<f64>> {
    if model.input_dim() != set.dim() || model.output_dim() != set.n_times() {
        return Err(Error::Incompatible(format!(
            "model maps {} inputs to {} outputs, dataset has {} inputs and {} times",
            model.input_dim(),
            model.output_dim(),
            set.dim(),
            set.n_times()
        )));
    }
    let x = Array2::from_shape_vec((set.len(), set.dim()), set.states.clone()).expect("shape");
    Ok(model.predict_batch(x.view())?.into_raw_vec_and_offset().0)
}

/// Evaluates the stress grid: each cell's truth is a fresh Monte Carlo run.
pub fn stress_grid(
    cfg: &ExperimentConfig,
    res: &Resolved,
    model: &MlpModel,
    stress: &StressGrid,
    tg_idx: usize,
    two_idx: Option<usize>,
) -> Result<Vec<StressCell>> {
    let ri = cfg.variable_index(&stress.rows.variable)?;
    let ci = cfg.variable_index(&stress.cols.variable)?;
    let spec = res.spec(cfg.setting);
    let paths = stress.paths.unwrap_or(cfg.m_valid);
    let seed = derive_seed(cfg.seeds.validation, Domain::Validation);
    let mut cells = Vec::new();
    let mut cell = 0u32;
    for &rv in &stress.rows.values {
        for &cv in &stress.cols.values {
            let mut x = stress.base.clone();
            x[ri] = rv;
            x[ci] = cv;
            let state = MarketState::new(cfg.setting, x)?;
            let truth = spec.simulate_state(&state, paths, seed, cell)?;
            let pred = model.forward(&state.values)?;
            let at = |i: usize| {
                (
                    truth.values[i],
                    pred[i],
                    relative_error(pred[i], truth.values[i]),
                )
            };
            let (t1, p1, e1) = at(tg_idx);
            let second = two_idx.map(at);
            cells.push(StressCell {
                row_value: rv,
                col_value: cv,
                truth_t_gamma: t1,
                pred_t_gamma: p1,
                rel_err_t_gamma: e1,
                truth_2t_gamma: second.map(|s| s.0),
                pred_2t_gamma: second.map(|s| s.1),
                rel_err_2t_gamma: second.map(|s| s.2),
            });
            cell += 1;
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub model_file: PathBuf,
    pub validation: ValidationReport,
    pub stress: Option<Vec<StressCell>>,
}

fn write_rows_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Error report of a trained model on the stored validation set.
pub fn cmd_report(cfg: &ExperimentConfig, model_path: Option<&Path>) -> Result<ReportOutcome> {
    let res = Resolved::new(cfg)?;
    let dir = &cfg.output_dir;
    let model_file = match model_path {
        Some(p) => p.to_path_buf(),
        None => dir.join(model_file_name(
            *cfg.ladder_sizes().iter().max().expect("non-empty ladder"),
            0,
        )),
    };
    let model = MlpModel::load(&model_file)?;
    let valid = TrainingSet::load(&dir.join(VALID_FILE))?;
    let pred = predict_set(&model, &valid)?;
    let report = evaluate_predictions(&valid, &pred, &cfg.funding, cfg.t_gamma)?;

    let out = dir.join("report");
    create_dir(&out)?;
    let n = valid.n_times();
    let header: Vec<String> = std::iter::once("row_id".to_string())
        .chain((1..=n).map(|i| format!("dim_{i}")))
        .collect();
    for (name, data) in [("dim_truth.csv", &valid.labels), ("dim_pred.csv", &pred)] {
        write_rows_csv(
            &out.join(name),
            &header,
            (0..valid.len()).map(|r| {
                std::iter::once(valid.row_ids[r].to_string())
                    .chain(data[r * n..(r + 1) * n].iter().map(|v| format!("{v:.17e}")))
                    .collect()
            }),
        )?;
    }
    let mut sheader: Vec<String> = vec!["row_id".into()];
    sheader.extend(valid.meta.setting.names().iter().map(|s| s.to_string()));
    sheader.push("err_t_gamma".into());
    sheader.push("err_2t_gamma".into());
    write_rows_csv(
        &out.join("scatter.csv"),
        &sheader,
        (0..valid.len()).map(|r| {
            let mut row = vec![valid.row_ids[r].to_string()];
            row.extend(valid.state(r).iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", report.errors_t_gamma[r]));
            row.push(
                report
                    .errors_2t_gamma
                    .as_ref()
                    .map(|e| format!("{:.17e}", e[r]))
                    .unwrap_or_default(),
            );
            row
        }),
    )?;
    let mut w = csv::Writer::from_path(out.join("mva.csv"))?;
    for m in &report.mva {
        w.serialize(m)?;
    }
    w.flush().map_err(|e| Error::io(out.join("mva.csv"), e))?;

    let stress = match &cfg.stress {
        Some(s) => {
            let cells = stress_grid(
                cfg,
                &res,
                &model,
                s,
                report.t_gamma_index,
                report.two_t_gamma_index,
            )?;
            let mut w = csv::Writer::from_path(out.join("stress.csv"))?;
            for c in &cells {
                w.serialize(c)?;
            }
            w.flush()
                .map_err(|e| Error::io(out.join("stress.csv"), e))?;
            Some(cells)
        }
        None => None,
    };
    let outcome = ReportOutcome {
        model_file,
        validation: report,
        stress,
    };
    write_text(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&outcome)?,
    )?;
    Ok(outcome)
}

/// One-off Monte Carlo DIM for an explicit state.
pub fn cmd_dim(
    cfg: &ExperimentConfig,
    state: &[f64],
    paths: usize,
    seed: u64,
) -> Result<DimTrajectory> {
    if paths < 1 {
        return Err(Error::config("need at least one path"));
    }
    let res = Resolved::new(cfg)?;
    let state =
        MarketState::new(cfg.setting, state.to_vec()).map_err(|e| Error::config(e.to_string()))?;
    state.model().map_err(|e| Error::config(e.to_string()))?;
    res.spec(cfg.setting)
        .simulate_state(&state, paths, derive_seed(seed, Domain::Paths), 0)
}

/// MVA of a `t,dim[,stderr]` file on a uniform grid `t_i = i·T/N`.
pub fn cmd_mva(dim_csv: &Path, funding: &FundingParams) -> Result<f64> {
    funding.validate()?;
    let file = fs::File::open(dim_csv).map_err(|e| Error::io(dim_csv, e))?;
    let (times, traj) = DimTrajectory::read_csv(file)?;
    let n = times.len();
    let t_final = *times
        .last()
        .ok_or_else(|| Error::config("empty DIM file"))?;
    let grid = SimulationGrid::new(n, t_final).map_err(|e| Error::config(e.to_string()))?;
    for (i, &t) in times.iter().enumerate() {
        if (t - grid.time(i + 1)).abs() > 1e-9 * t_final.max(1.0) {
            return Err(Error::Incompatible(format!(
                "time {t} at row {i} is off the uniform grid of {n} steps to {t_final}"
            )));
        }
    }
    mva_from_values(&traj.values, &grid, funding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            grid: GridSpec {
                n_times: 6,
                t_final: 6.0,
            },
            k_train: 8,
            k_valid: 2,
            m_valid: 4,
            ladder: Some(vec![4, 8]),
            trials: 3,
            train: TrainConfig {
                hidden: vec![8, 8],
                batch_size: 4,
                max_epochs: 3,
                ..TrainConfig::default()
            },
            output_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_mirror_reference_sizes() {
        let c = ExperimentConfig::default();
        assert_eq!(
            (c.k_train, c.grid.n_times, c.grid.t_final),
            (1 << 22, 160, 6.0)
        );
        assert_eq!((c.k_valid, c.m_valid), (512, 1 << 20));
        assert!(c.validate().is_ok());
        let l = c.ladder_sizes();
        assert_eq!(l.first(), Some(&512));
        assert_eq!(l.last(), Some(&(1 << 22)));
        assert!(l.windows(2).all(|w| w[1] == 2 * w[0]));
        let json = c.to_json();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_errors() {
        let c = ExperimentConfig {
            k_train: 0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().unwrap_err().is_config_error());
        let c = ExperimentConfig {
            simm: Some("/nonexistent/simm.json".into()),
            ..ExperimentConfig::default()
        };
        assert!(c.validate().unwrap_err().is_config_error());
        let c = ExperimentConfig {
            bounds: Some(vec![(0.0, 1.0)]),
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            ladder: Some(vec![1 << 23]),
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn desk_budget_scales_patience() {
        let base = TrainConfig {
            batch_size: 512,
            ..TrainConfig::default()
        };
        let b = DeskBudget::default();
        let small = b.config_for(&base, 1 << 12);
        assert_eq!(small.max_epochs, 256);
        assert_eq!(small.plateau_patience, 25);
        let big = b.config_for(&base, 1 << 17);
        assert_eq!(big.max_epochs, 32);
        assert_eq!(big.plateau_patience, 3);
        assert_eq!(big.early_stop.patience, 10);
    }

    #[test]
    fn confidence_interval() {
        let (m, h) = mean_confidence(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        // t_{0.975, 2} = 4.302652729911275
        assert!((h.unwrap() - 4.302_652_729_911_275 / 3f64.sqrt()).abs() < 1e-9);
        assert_eq!(mean_confidence(&[5.0]), (5.0, None));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<LadderPoint> = (9..14)
            .map(|p| LadderPoint {
                rows: 1 << p,
                trials: 1,
                mean_rmse: 3.0 * ((1u64 << p) as f64).powf(-0.5),
                ci95_half_width: None,
            })
            .collect();
        assert!((log2_slope(&pts) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_have_zero_error() {
        let dir = tempdir().unwrap();
        let cfg = tiny(dir.path());
        let res = Resolved::new(&cfg).unwrap();
        let v = generate_validation(&res.spec(cfg.setting), 3, 8, 4).unwrap();
        let r = evaluate_predictions(&v, &v.labels, &cfg.funding, None).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!(r.errors_t_gamma.iter().all(|&e| e == 0.0));
        assert!(r.mva.iter().all(|m| m.rel_err == 0.0));
        assert_eq!(r.mva_rel_err_max, 0.0);
    }

    #[test]
    fn variance_index_and_median() {
        let labels = [0.0, 1.0, 5.0, 0.0, 3.0, 5.0];
        assert_eq!(max_variance_index(&labels, 3), 1);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tiny_pipeline_round_trip() {
        let dir = tempdir().unwrap();
        let cfg = tiny(dir.path());
        let m = cmd_gen(&cfg).unwrap();
        assert_eq!(m.train_rows + m.train.skipped, 8);
        let reloaded = ExperimentConfig::load(&dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(
            reloaded.portfolio_template().unwrap(),
            PortfolioTemplate::single_forward_swap()
        );
        assert_eq!(reloaded.output_dir, dir.path().join("."));

        let out = cmd_train(&cfg).unwrap();
        assert_eq!(out.trials.len(), 6);
        let p8 = out.ladder.iter().find(|p| p.rows == 8).unwrap();
        let mean = out
            .trials
            .iter()
            .filter(|t| t.rows == 8)
            .map(|t| t.val_rmse)
            .sum::<f64>()
            / 3.0;
        assert!((p8.mean_rmse - mean).abs() < 1e-15);

        let rep = cmd_report(&cfg, None).unwrap();
        assert!(rep.validation.rmse >= 0.0);
        assert!(dir.path().join("report/mva.csv").exists());

        let traj = cmd_dim(&cfg, &[0.05, 0.01, 0.03, 0.02, 0.0], 16, 1).unwrap();
        let csv_path = dir.path().join("dim.csv");
        traj.write_csv(&cfg.grid().unwrap(), fs::File::create(&csv_path).unwrap())
            .unwrap();
        let direct = mva_from_values(&traj.values, &cfg.grid().unwrap(), &cfg.funding).unwrap();
        assert_eq!(cmd_mva(&csv_path, &cfg.funding).unwrap(), direct);
        assert!(cmd_dim(&cfg, &[0.05, 0.01], 16, 1)
            .unwrap_err()
            .is_config_error());
    }
}
