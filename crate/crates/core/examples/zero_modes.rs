//! Zero modes of the cylindrical superhamiltonian and their norms.
use susyqm::cylindrical::CylindricalSeed;
use susyqm::grid::Grid2D;
use susyqm::moutard2d::RegularRegion;
use susyqm::superalgebra::zero_modes;

fn main() -> susyqm::Result<()> {
    let seed = CylindricalSeed::new(1.0, 1.0)?;
    for n in [64, 128] {
        let r = zero_modes(&seed, Grid2D::centered(12.0, n)?, RegularRegion::punctured(2.0, 2))?;
        println!(
            "n = {n}: |Psi1|^2 {:.5} (exact {:.5}), |Psi2|^2 {:.5} (exact {:.5}), Q+ Psi2 {:.3e}",
            r.psi1_norm_sq, r.psi1_norm_sq_exact, r.psi2_norm_sq, r.psi2_norm_sq_exact, r.qt_psi2
        );
    }
    Ok(())
}
