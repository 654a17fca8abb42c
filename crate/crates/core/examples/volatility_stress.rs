//! Relative DIM errors of a trained network across a grid of mean-reversion
//! and volatility values, at the time of highest DIM variance and twice it.

use dimlearn::experiment::{self, DeskBudget, ExperimentConfig, GridSpec, StressAxis, StressGrid};
use dimlearn::neuralnet::TrainConfig;

fn main() -> dimlearn::Result<()> {
    let cfg = ExperimentConfig {
        grid: GridSpec {
            n_times: 40,
            t_final: 6.0,
        },
        k_train: 1 << 14,
        k_valid: 32,
        m_valid: 4096,
        ladder: Some(vec![1 << 14]),
        train: TrainConfig {
            batch_size: 512,
            ..TrainConfig::default()
        },
        budget: Some(DeskBudget {
            epochs: 24,
            min_steps: 768,
            ..DeskBudget::default()
        }),
        output_dir: std::env::temp_dir().join("dimlearn_stress"),
        stress: Some(StressGrid {
            base: vec![0.05, 0.01, 0.03, 0.01, 0.0],
            rows: StressAxis {
                variable: "a".into(),
                values: vec![0.02, 0.05, 0.08],
            },
            cols: StressAxis {
                variable: "sigma".into(),
                values: vec![0.01, 0.015, 0.02],
            },
            paths: Some(8192),
        }),
        ..ExperimentConfig::default()
    };
    experiment::cmd_gen(&cfg)?;
    experiment::cmd_train(&cfg)?;
    let report = experiment::cmd_report(&cfg, None)?;
    let tg = report.validation.t_gamma;
    println!("t_gamma = {tg:.2}");
    println!("    a   sigma   rel.err(t_g)  rel.err(2t_g)");
    for c in report.stress.unwrap_or_default() {
        println!(
            "{:.3}  {:.4}   {:.3e}     {}",
            c.row_value,
            c.col_value,
            c.rel_err_t_gamma,
            c.rel_err_2t_gamma
                .map(|e| format!("{e:.3e}"))
                .unwrap_or("-".into())
        );
    }
    Ok(())
}
