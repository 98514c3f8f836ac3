//! Darboux pair from the lambda-family of free-particle seeds.
use susyqm::darboux1d::{susy_phase, LambdaSupport};
use susyqm::grid::Grid1D;

fn main() -> susyqm::Result<()> {
    let grid = Grid1D::new(-20.0, 20.0, 4001)?;
    for lambda in [0.0, 0.5, 1.0] {
        let support = LambdaSupport::free_particle(lambda, 1.0)?;
        let r = susy_phase(&support, grid, 4, 1e-12)?;
        println!(
            "lambda = {lambda}: phase {:?}, added level {:?}, h1 levels {:?}",
            r.phase,
            r.matched_level,
            r.h1.energies()
        );
    }
    Ok(())
}
