//! PV01 sensitivities of a swap on the 12 SIMM tenors and the resulting delta margin.

use dimlearn::instruments::{price_swap, FixingStore, PortfolioTemplate};
use dimlearn::simm::{delta_margin, pv01_sensitivities, SimmConfig};
use dimlearn::termstructure::{NelsonSiegelParams, TenorGrid, YieldCurve, ISDA_TENOR_LABELS};

fn main() -> dimlearn::Result<()> {
    let curve = YieldCurve::from_nelson_siegel(
        &NelsonSiegelParams::with_default_lambda(0.03, 0.01, 0.005),
        TenorGrid::isda(),
    );
    let simm = SimmConfig::default();
    let book = PortfolioTemplate::six_swap_book().resolve(&curve, 0.0)?;
    let fixings = FixingStore::new();

    for (i, swap) in book.swaps.iter().enumerate() {
        let s = pv01_sensitivities(|c| price_swap(c, swap, 0.0, &fixings), &curve)?;
        println!(
            "swap {i} ({:?}, {}Y): IM {:.4}",
            swap.direction,
            swap.maturity(),
            delta_margin(&s, &simm)
        );
    }
    let total = pv01_sensitivities(
        |c| dimlearn::instruments::price_portfolio(c, &book, 0.0, &fixings),
        &curve,
    )?;
    println!("\nportfolio sensitivities:");
    for (label, v) in ISDA_TENOR_LABELS.iter().zip(total.values()) {
        println!("  {label:>4} {v:+.6}");
    }
    println!(
        "portfolio IM {:.4} (netting benefit vs sum of standalone margins)",
        delta_margin(&total, &simm)
    );
    Ok(())
}
