//! MVA of a simulated DIM profile under constant default intensities.

use dimlearn::dataset::MarketState;
use dimlearn::dimengine::{PathSimulator, SimulationGrid};
use dimlearn::instruments::PortfolioTemplate;
use dimlearn::mva::{funding_spread, mva_quadrature, FundingParams};
use dimlearn::simm::SimmConfig;
use dimlearn::termstructure::TenorGrid;

fn main() -> dimlearn::Result<()> {
    let state = MarketState::vasicek(0.05, 0.01, 0.03, 0.02, 0.0);
    let model = state.model()?;
    let book = PortfolioTemplate::single_forward_swap()
        .resolve(&model.initial_curve(&TenorGrid::isda()), 0.0)?;
    let simm = SimmConfig::default();
    let grid = SimulationGrid::new(40, 6.0)?;
    let dim = PathSimulator::new(model, &book, grid, &simm).mc_dim(4096, 3, 0)?;

    let p = FundingParams::reference();
    println!("funding spread at 1Y: {:.6e}", funding_spread(&p, 1.0)?);
    println!("MVA {:.6}", mva_quadrature(&dim, &grid, &p)?);
    for lambda_b in [0.005, 0.01, 0.02, 0.04] {
        let q = FundingParams { lambda_b, ..p };
        println!(
            "  lambda_B = {lambda_b:.3}: MVA {:.6}",
            mva_quadrature(&dim, &grid, &q)?
        );
    }
    Ok(())
}
