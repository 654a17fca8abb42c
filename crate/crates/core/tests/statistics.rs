use dimlearn::dataset::{generate_training, generate_validation, DatasetSpec, Setting};
use dimlearn::dimengine::SimulationGrid;
use dimlearn::instruments::PortfolioTemplate;
use dimlearn::neuralnet::{train, EarlyStop, TrainConfig};
use dimlearn::ratemodel::{ShortRateModel, VasicekParams};
use dimlearn::rng::path_rng;
use dimlearn::simm::SimmConfig;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn discounted_bond_is_a_martingale() {
    let m = ShortRateModel::Vasicek(VasicekParams::new(0.1, 0.02, 0.04, -0.01).unwrap());
    let (t, steps, paths) = (3.0, 144, 1u32 << 12);
    let h = t / steps as f64;
    let exact = m.zcb_price(&m.initial_state(), t).unwrap();
    let mut samples = Vec::with_capacity(paths as usize);
    for p in 0..paths {
        let mut rng = path_rng(77, 0, p);
        let mut s = m.initial_state();
        let mut integral = 0.0;
        for _ in 0..steps {
            integral += s.r * h;
            s = m.evolve(&s, h, StandardNormal.sample(&mut rng)).unwrap();
        }
        samples.push((-integral).exp());
    }
    let n = paths as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let se = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!(
        (mean - exact).abs() < 4.0 * se,
        "{mean} vs {exact} (se {se})"
    );
}

fn fit_config(hidden: Vec<usize>, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        hidden,
        batch_size: 256,
        max_epochs: epochs,
        initial_lr: 1e-3,
        plateau_patience: 10,
        early_stop: EarlyStop {
            target_mse: Some(0.0),
            patience: 40,
        },
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn noisy_labels_learn_the_conditional_mean() {
    let tpl = PortfolioTemplate::single_forward_swap();
    let simm = SimmConfig::default();
    let setting = Setting::vasicek();
    let mut bounds = setting.default_bounds();
    for (d, v) in [0.05, 0.01, 0.03, 0.02, 0.0].into_iter().enumerate() {
        bounds = bounds.pin(d, v);
    }
    let spec = DatasetSpec {
        setting,
        bounds,
        portfolio: &tpl,
        grid: SimulationGrid::new(8, 6.0).unwrap(),
        simm: &simm,
    };
    let k = 1 << 13;
    let noisy = generate_training(&spec, k, 5).unwrap();
    let valid = generate_validation(&spec, 1, 1 << 10, 6).unwrap();
    // every input is pinned, so only the output bias can move: a larger rate
    let mut cfg = fit_config(vec![16, 16], 200, 9);
    cfg.initial_lr = 1e-2;
    let (model, _) = train(&noisy, &valid, &cfg).unwrap();
    let pred = model.forward(valid.state(0)).unwrap();
    // independent reference, unseen by training and snapshot selection
    let reference = generate_validation(&spec, 1, 1 << 13, 7).unwrap();
    let se_v = reference.row_stderr(0).unwrap();
    for i in 0..valid.n_times() {
        let col: Vec<f64> = (0..k).map(|r| noisy.label(r)[i]).collect();
        let mean = col.iter().sum::<f64>() / k as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
        let band = 3.0 * (se_v[i].powi(2) + var / k as f64).sqrt();
        let err = (pred[i] - reference.label(0)[i]).abs();
        assert!(
            err <= band,
            "t_{}: |{} - {}| > {band}",
            i + 1,
            pred[i],
            reference.label(0)[i]
        );
    }
}

#[test]
fn deterministic_labels_are_fitted_closely() {
    let tpl = PortfolioTemplate::single_forward_swap();
    let simm = SimmConfig::default();
    let setting = Setting::vasicek();
    // σ = 0 removes the label noise; r0 and δ remain free
    let bounds = setting
        .default_bounds()
        .pin(0, 0.05)
        .pin(1, 0.0)
        .pin(2, 0.03);
    let spec = DatasetSpec {
        setting,
        bounds,
        portfolio: &tpl,
        grid: SimulationGrid::new(8, 6.0).unwrap(),
        simm: &simm,
    };
    let train_set = generate_training(&spec, 1 << 12, 11).unwrap();
    let valid = generate_validation(&spec, 64, 1, 12).unwrap();
    assert_eq!(valid.max_stderr(), 0.0);
    let (model, report) = train(&train_set, &valid, &fit_config(vec![64, 64], 400, 13)).unwrap();
    let peak = valid.labels.iter().copied().fold(0.0, f64::max);
    let rmse = report.best_val_rmse();
    assert!(rmse < 2e-3 * peak, "rmse {rmse} vs peak {peak}");
    assert!(model
        .forward(valid.state(0))
        .unwrap()
        .iter()
        .all(|v| v.is_finite()));
}
