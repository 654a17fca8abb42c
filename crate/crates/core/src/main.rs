use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dimlearn::experiment::{self, ExperimentConfig};
use dimlearn::mva::FundingParams;
use dimlearn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dimlearn",
    version,
    about = "Dynamic initial margin from noisy Monte Carlo labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    k_train: Option<usize>,
    #[arg(long)]
    k_valid: Option<usize>,
    #[arg(long)]
    m_valid: Option<usize>,
    #[arg(long)]
    n_times: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_gamma: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        cfg.k_train = self.k_train.unwrap_or(cfg.k_train);
        cfg.k_valid = self.k_valid.unwrap_or(cfg.k_valid);
        cfg.m_valid = self.m_valid.unwrap_or(cfg.m_valid);
        cfg.grid.n_times = self.n_times.unwrap_or(cfg.grid.n_times);
        cfg.grid.t_final = self.t_final.unwrap_or(cfg.grid.t_final);
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        if let Some(s) = self.seed {
            cfg.seeds.data = s;
            cfg.seeds.validation = s.wrapping_add(1);
            cfg.seeds.training = s.wrapping_add(2);
        }
        if self.t_gamma.is_some() {
            cfg.t_gamma = self.t_gamma;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate training and validation datasets.
    Gen(ConfigArgs),
    /// Train networks over the subset ladder.
    Train(ConfigArgs),
    /// Evaluate a trained network on the validation set.
    Report {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Monte Carlo DIM for one market state, written as CSV.
    Dim {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated state, e.g. `0.05,0.01,0.03,0.02,0`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        state: Vec<f64>,
        #[arg(long, default_value_t = 4096)]
        paths: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MVA of a DIM CSV (`t,dim[,stderr]`).
    Mva {
        #[arg(long)]
        dim: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        recovery: f64,
        #[arg(long, default_value_t = 1.67e-2)]
        lambda_b: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda_c: f64,
        #[arg(long, default_value_t = 0.0)]
        im_spread: f64,
    },
}

fn write_or_print(
    out: Option<&Path>,
    f: impl FnOnce(&mut dyn std::io::Write) -> Result<()>,
) -> Result<()> {
    match out {
        Some(p) => {
            let mut file = std::fs::File::create(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            f(&mut file)
        }
        None => f(&mut std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let cfg = a.load()?;
            let m = experiment::cmd_gen(&cfg)?;
            println!(
                "wrote {} training and {} validation rows to {} (tolerance {:.3e}, skipped {})",
                m.train_rows,
                m.valid_rows,
                cfg.output_dir.display(),
                m.valid_tolerance,
                m.train.skipped + m.valid.skipped
            );
        }
        Command::Train(a) => {
            let cfg = a.load()?;
            let out = experiment::cmd_train(&cfg)?;
            println!("rows,trials,mean_rmse,ci95_half_width");
            for p in &out.ladder {
                let hw = p
                    .ci95_half_width
                    .map(|h| format!("{h:.6e}"))
                    .unwrap_or_default();
                println!("{},{},{:.6e},{}", p.rows, p.trials, p.mean_rmse, hw);
            }
        }
        Command::Report { cfg, model } => {
            let cfg = cfg.load()?;
            let r = experiment::cmd_report(&cfg, model.as_deref())?;
            let v = &r.validation;
            println!("rmse {:.6e}", v.rmse);
            println!("t_gamma {:.4}", v.t_gamma);
            println!(
                "mva relative error median {:.4e} max {:.4e}",
                v.mva_rel_err_median, v.mva_rel_err_max
            );
            println!("details in {}", cfg.output_dir.join("report").display());
        }
        Command::Dim {
            cfg,
            state,
            paths,
            out,
        } => {
            let cfg = cfg.load()?;
            let traj = experiment::cmd_dim(&cfg, &state, paths, cfg.seeds.data)?;
            let grid = cfg.grid()?;
            write_or_print(out.as_deref(), |w| traj.write_csv(&grid, w))?;
        }
        Command::Mva {
            dim,
            recovery,
            lambda_b,
            lambda_c,
            im_spread,
        } => {
            let p = FundingParams::new(recovery, lambda_b, lambda_c, im_spread, 0.0)?;
            println!("{:.12e}", experiment::cmd_mva(&dim, &p)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
