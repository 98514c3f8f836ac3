//! Closed-form against numerical levels of the cylindrical pair.
use susyqm::cylindrical::{numerical_spectrum, CylindricalSeed};
use susyqm::spectra::{closed_form_level, Branch};

fn main() -> susyqm::Result<()> {
    let seed = CylindricalSeed::new(1.0, 1.0)?;
    for branch in [Branch::Minus, Branch::Plus] {
        let s = numerical_spectrum(&seed, branch, 3, 2, 0.01, 60.0)?;
        for l in &s.levels {
            let m = l.m.unwrap_or(0);
            let exact = closed_form_level(seed.b, seed.k, branch, l.n, m);
            println!(
                "{:5} m={m} N={} numerical {:.10} closed form {:.10}",
                branch.name(),
                l.n,
                l.energy,
                exact
            );
        }
    }
    Ok(())
}
