//! Dual superhamiltonian built from the reciprocal support.
use susyqm::cylindrical::CylindricalSeed;
use susyqm::grid::Grid2D;
use susyqm::superalgebra::build_dual;

fn main() -> susyqm::Result<()> {
    let support = CylindricalSeed::new(1.0, 1.0)?.support();
    let (model, report) = build_dual(&support, Grid2D::centered(6.0, 16)?, 8, 11)?;
    println!("spatial dimension {}", model.dim);
    println!("corner residuals: {:.3e} {:.3e}", report.corner_h1, report.corner_h0);
    println!("middle index difference {:?}", report.middle_index_difference);
    println!("middle rotation residual {:.3e}", report.middle_rotation_residual);
    Ok(())
}
