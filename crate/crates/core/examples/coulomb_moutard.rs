//! Moutard transform of the Coulomb pair on an off-origin window.
use susyqm::grid::{Domain, Grid1D, Grid2D, ScalarField};
use susyqm::moutard2d::{
    coulomb_second_solution, coulomb_support, moutard_checks, partner_potential_2d, MoutardPair, RegularRegion,
};

fn main() -> susyqm::Result<()> {
    let alpha = 1.0;
    for n in [33, 65, 129] {
        let g = Grid2D::new(Grid1D::new(1.0, 5.0, n)?, Grid1D::new(-2.0, 2.0, n)?)?;
        let support = coulomb_support(alpha)?;
        let u1 = partner_potential_2d(|x| -alpha / x[0].hypot(x[1]), &support, g)?;
        let psi = ScalarField::sample(Domain::Plane(g), |x| coulomb_second_solution(alpha, x))?;
        let pair = MoutardPair::new(support, psi)?;
        let c = moutard_checks(&pair, &u1, RegularRegion::punctured(0.0, 2))?;
        println!(
            "n = {n}: path discrepancy {:.3e}, eigen residual {:.3e}",
            c.path_discrepancy, c.eigen_residual
        );
    }
    Ok(())
}
