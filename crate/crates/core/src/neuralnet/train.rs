use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{batch_mse, AdamState, MlpModel, DEFAULT_HIDDEN};
use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, Domain};

/// Stop once validation MSE drops below `target_mse` (the squared largest
/// validation stderr when unset) or after `patience` epochs without a new best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    #[serde(default)]
    pub target_mse: Option<f64>,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            target_mse: None,
            patience: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub initial_lr: f64,
    pub lr_floor: f64,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub early_stop: EarlyStop,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            batch_size: 4096,
            max_epochs: 2000,
            initial_lr: 1e-3,
            lr_floor: 1e-6,
            plateau_patience: 50,
            lr_factor: 0.5,
            early_stop: EarlyStop::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.plateau_patience == 0
            || self.early_stop.patience == 0
        {
            return Err(Error::config(
                "batch size, epochs and patience must be positive",
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor < self.initial_lr) {
            return Err(Error::config("need 0 < lr_floor < initial_lr"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::config("lr_factor must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn digest_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    TargetReached,
    NoImprovement,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn best_val_rmse(&self) -> f64 {
        self.best_val_mse.sqrt()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_mse", "val_mse", "lr"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.16e}", e.train_mse),
                format!("{:.16e}", e.val_mse),
                format!("{:.16e}", e.lr),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<train report>", e))?;
        Ok(())
    }
}

fn as_arrays(set: &TrainingSet) -> (Array2<f64>, Array2<f64>) {
    let x =
        Array2::from_shape_vec((set.len(), set.dim()), set.states.clone()).expect("state shape");
    let y = Array2::from_shape_vec((set.len(), set.n_times()), set.labels.clone())
        .expect("label shape");
    (x, y)
}

fn check_compatible(a: &TrainingSet, b: &TrainingSet) -> Result<()> {
    let (ma, mb) = (&a.meta, &b.meta);
    if ma.setting != mb.setting {
        return Err(Error::Incompatible(
            "training and validation settings differ".into(),
        ));
    }
    if ma.n_times != mb.n_times || ma.t_final != mb.t_final {
        return Err(Error::Incompatible(
            "training and validation grids differ".into(),
        ));
    }
    if ma.portfolio_digest != mb.portfolio_digest {
        return Err(Error::Incompatible(
            "training and validation portfolios differ".into(),
        ));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Incompatible("empty dataset".into()));
    }
    Ok(())
}

/// Mini-batch Adam on `train_set`, monitored on `val_set`. Returns the
/// snapshot with the lowest validation MSE.
pub fn train(
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    check_compatible(train_set, val_set)?;
    let start = Instant::now();

    let mut dims = vec![train_set.dim()];
    dims.extend(&cfg.hidden);
    dims.push(train_set.n_times());
    let mut model = MlpModel::new(
        &dims,
        train_set.meta.bounds.bounds.clone(),
        derive_seed(cfg.seed, Domain::Init),
    )?;
    model.set_config_digest(&cfg.digest_bytes());

    let (x_raw, y_train) = as_arrays(train_set);
    let x_train = model.normalize_batch(x_raw.view())?;
    let (xv_raw, y_val) = as_arrays(val_set);
    let x_val = model.normalize_batch(xv_raw.view())?;
    let target = cfg
        .early_stop
        .target_mse
        .unwrap_or_else(|| val_set.max_stderr().powi(2));

    let mut opt = AdamState::new(&model);
    let mut shuffle_rng = rng::seeded(derive_seed(cfg.seed, Domain::Shuffle));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = cfg.initial_lr;
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut since_best = 0;
    let mut since_lr = 0;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_acc = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let xb = x_train.select(Axis(0), idx);
            let yb = y_train.select(Axis(0), idx);
            let (loss, grads) = model.loss_and_gradients(&xb, yb.view());
            opt.step(&mut model, &grads, lr);
            loss_acc += loss * idx.len() as f64;
        }
        let val_mse = batch_mse(model.forward_normalized(&x_val).view(), y_val.view());
        records.push(EpochRecord {
            epoch,
            train_mse: loss_acc / train_set.len() as f64,
            val_mse,
            lr,
        });
        if val_mse < best.0 {
            best = (val_mse, epoch, model.clone());
            since_best = 0;
            since_lr = 0;
        } else {
            since_best += 1;
            since_lr += 1;
        }
        if val_mse < target {
            stop = StopReason::TargetReached;
            break;
        }
        if since_best >= cfg.early_stop.patience {
            stop = StopReason::NoImprovement;
            break;
        }
        if since_lr >= cfg.plateau_patience {
            lr = (lr * cfg.lr_factor).max(cfg.lr_floor);
            since_lr = 0;
        }
    }

    let (best_val_mse, best_epoch, best_model) = best;
    Ok((
        best_model,
        TrainReport {
            epochs: records,
            stop_reason: stop,
            best_epoch,
            best_val_mse,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    ))
}
