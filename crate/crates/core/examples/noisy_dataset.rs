//! Latin hypercube states labelled with single-path (noisy) DIM trajectories,
//! plus a small converged validation set; both written to a temp directory.

use dimlearn::dataset::{
    generate_training, generate_validation, DatasetSpec, Setting, TrainingSet,
};
use dimlearn::dimengine::SimulationGrid;
use dimlearn::instruments::PortfolioTemplate;
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

    let train = generate_training(&spec, 2048, 1)?;
    let valid = generate_validation(&spec, 8, 2048, 2)?;
    println!(
        "{} noisy rows, {} validation rows (tolerance {:.2e})",
        train.len(),
        valid.len(),
        valid.max_stderr()
    );

    let i = 0;
    println!(
        "state {:?}",
        setting
            .names()
            .iter()
            .zip(train.state(i))
            .collect::<Vec<_>>()
    );
    println!(
        "noisy label (every 8th point): {:?}",
        train
            .label(i)
            .iter()
            .step_by(8)
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
    );

    let dir = std::env::temp_dir().join("dimlearn_noisy_dataset");
    std::fs::create_dir_all(&dir).expect("temp dir");
    train.save(&dir.join("train.bin"))?;
    valid.write_csv(std::fs::File::create(dir.join("valid.csv")).expect("csv"))?;
    let back = TrainingSet::load(&dir.join("train.bin"))?;
    assert_eq!(back, train);
    println!("round-tripped through {}", dir.display());
    Ok(())
}
