//! Extended supersymmetry at levels 1 to 3 with residuals of every relation.
use susyqm::cylindrical::CylindricalSeed;
use susyqm::grid::Grid2D;
use susyqm::superalgebra::assemble_extended;

fn main() -> susyqm::Result<()> {
    let support = CylindricalSeed::new(1.0, 1.0)?.support();
    let grid = Grid2D::centered(6.0, 12)?;
    for n in 1..=3 {
        let m = assemble_extended(&support, grid, n, 8, 7)?;
        let r = &m.report;
        println!(
            "N = {n}: {} | {} | degeneracy {} | max residual {:.3e}",
            r.h_pattern, r.q1_pattern, r.degeneracy, r.max_residual
        );
    }
    Ok(())
}
