//! Vasicek and Hull-White short-rate paths with exact OU transitions, and a
//! Monte Carlo check of the discounted unit payoff against the bond formula.

use dimlearn::ratemodel::{HullWhiteParams, ShortRateModel, VasicekParams};
use dimlearn::rng::path_rng;
use dimlearn::termstructure::NelsonSiegelParams;
use rand_distr::{Distribution, StandardNormal};

fn discounted_payoff(
    model: &ShortRateModel,
    maturity: f64,
    steps: usize,
    paths: u32,
) -> dimlearn::Result<(f64, f64)> {
    let h = maturity / steps as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for p in 0..paths {
        let mut rng = path_rng(7, 0, p);
        let mut s = model.initial_state();
        let mut integral = 0.0;
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            let next = model.evolve(&s, h, z)?;
            integral += 0.5 * (s.r + next.r) * h;
            s = next;
        }
        let v = (-integral).exp();
        sum += v;
        sum_sq += v * v;
    }
    let n = paths as f64;
    let mean = sum / n;
    Ok((mean, ((sum_sq / n - mean * mean) / (n - 1.0)).sqrt()))
}

fn main() -> dimlearn::Result<()> {
    let models = [
        (
            "Vasicek",
            ShortRateModel::Vasicek(VasicekParams::new(0.05, 0.01, 0.03, 0.02)?),
        ),
        (
            "Hull-White",
            ShortRateModel::HullWhite(HullWhiteParams::new(
                0.025,
                0.0075,
                NelsonSiegelParams::with_default_lambda(0.03, 0.01, 0.005),
            )?),
        ),
    ];
    for (name, model) in &models {
        let s0 = model.initial_state();
        let exact = model.zcb_price(&s0, 5.0)?;
        let (mc, se) = discounted_payoff(model, 5.0, 480, 20_000)?;
        println!(
            "{name:<10} P(0,5) = {exact:.6}  MC {mc:.6} ± {se:.6}  ({:+.2} se)",
            (mc - exact) / se
        );
    }
    Ok(())
}
