//! Validation RMSE against training-set size on nested shuffled subsets,
//! with Student-t confidence intervals over repeated trials.
//!
//! Usage: `cargo run --release --example convergence_study [max_log2] [trials]`

use dimlearn::experiment::{self, DeskBudget, ExperimentConfig, GridSpec};
use dimlearn::neuralnet::TrainConfig;

fn main() -> dimlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_log2: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(13);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);

    let cfg = ExperimentConfig {
        grid: GridSpec {
            n_times: 40,
            t_final: 6.0,
        },
        k_train: 1 << max_log2,
        k_valid: 32,
        m_valid: 4096,
        trials,
        ladder: Some((10..=max_log2).map(|p| 1 << p).collect()),
        train: TrainConfig {
            batch_size: 512,
            ..TrainConfig::default()
        },
        budget: Some(DeskBudget {
            epochs: 16,
            min_steps: 512,
            ..DeskBudget::default()
        }),
        output_dir: std::env::temp_dir().join("dimlearn_convergence"),
        ..ExperimentConfig::default()
    };
    experiment::cmd_gen(&cfg)?;
    let out = experiment::cmd_train(&cfg)?;
    println!("rows     mean RMSE   95% half-width");
    for p in &out.ladder {
        println!(
            "{:>7}  {:.5}     {}",
            p.rows,
            p.mean_rmse,
            p.ci95_half_width
                .map(|h| format!("{h:.5}"))
                .unwrap_or("-".into())
        );
    }
    println!("log2-log2 slope {:.3}", experiment::log2_slope(&out.ladder));
    Ok(())
}
