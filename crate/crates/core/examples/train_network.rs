//! Trains the multi-output network on noisy labels and compares a prediction
//! with a converged Monte Carlo profile.

use dimlearn::dataset::{generate_training, generate_validation, DatasetSpec, Setting};
use dimlearn::dimengine::SimulationGrid;
use dimlearn::instruments::PortfolioTemplate;
use dimlearn::neuralnet::{train, TrainConfig};
use dimlearn::simm::SimmConfig;

fn main() -> dimlearn::Result<()> {
    let tpl = PortfolioTemplate::single_forward_swap();
    let simm = SimmConfig::default();
    let setting = Setting::vasicek();
    let spec = DatasetSpec {
        setting,
        bounds: setting.default_bounds(),
        portfolio: &tpl,
        grid: SimulationGrid::new(40, 6.0)?,
        simm: &simm,
    };
    let train_set = generate_training(&spec, 1 << 13, 1)?;
    let valid_set = generate_validation(&spec, 16, 4096, 2)?;

    let cfg = TrainConfig {
        batch_size: 512,
        max_epochs: 60,
        plateau_patience: 6,
        ..TrainConfig::default()
    };
    let (model, report) = train(&train_set, &valid_set, &cfg)?;
    println!(
        "{} epochs, best validation RMSE {:.4} at epoch {} ({:?})",
        report.epochs.len(),
        report.best_val_rmse(),
        report.best_epoch,
        report.stop_reason
    );

    let pred = model.forward(valid_set.state(0))?;
    println!("   t    truth   network");
    for (i, t) in spec.grid.times().enumerate().step_by(5) {
        println!("{t:5.2}  {:.4}  {:.4}", valid_set.label(0)[i], pred[i]);
    }
    Ok(())
}
