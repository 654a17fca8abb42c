//! Nelson-Siegel curve on the ISDA tenor grid, forward-starting swap pricing
//! and the effect of a moneyness spread on the strike.

use dimlearn::instruments::{annuity, price_swap, swap_rate, FixingStore, PortfolioTemplate};
use dimlearn::termstructure::{NelsonSiegelParams, TenorGrid, YieldCurve, ISDA_TENOR_LABELS};

fn main() -> dimlearn::Result<()> {
    let ns = NelsonSiegelParams::with_default_lambda(0.03, 0.01, 0.005);
    let curve = YieldCurve::from_nelson_siegel(&ns, TenorGrid::isda());

    println!("tenor  yield      discount");
    for (label, (&tau, &y)) in ISDA_TENOR_LABELS
        .iter()
        .zip(curve.grid().tenors().iter().zip(curve.yields()))
    {
        println!(
            "{label:>5}  {:8.5}%  {:.6}",
            100.0 * y,
            curve.discount_factor(tau)
        );
    }
    println!(
        "7Y interpolated yield {:.5}%",
        100.0 * curve.interp_yield(7.0)
    );

    let atm = PortfolioTemplate::single_forward_swap()
        .resolve(&curve, 0.0)?
        .swaps
        .remove(0);
    let k = swap_rate(&curve, &atm, 0.0)?;
    println!(
        "\n1Y x 5Y payer swap: ATM rate {:.5}%, annuity {:.5}",
        100.0 * k,
        annuity(&curve, atm.fixed_schedule(), 0.0)
    );

    let fixings = FixingStore::new();
    for delta_bp in [-10.0, 0.0, 10.0] {
        let spec = atm.with_fixed_rate(k + delta_bp * 1e-4);
        let payer = price_swap(&curve, &spec, 0.0, &fixings)?;
        let receiver = price_swap(
            &curve,
            &spec.with_direction(spec.direction.flipped()),
            0.0,
            &fixings,
        )?;
        println!("strike ATM{delta_bp:+.0}bp: payer {payer:+.6}  receiver {receiver:+.6}");
    }
    Ok(())
}
