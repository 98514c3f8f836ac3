use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use susyqm::cylindrical::{pinning_k, CylindricalSeed};
use susyqm::darboux1d::{partner_potential_1d, LambdaSupport};
use susyqm::factorops::{assemble_hamiltonians, intertwining_residual, Complex2D};
use susyqm::grid::{Grid1D, Grid2D};
use susyqm::spectra::{closed_form_level, Branch};
use susyqm::superalgebra::{build_super_2d, ALGEBRA_THRESHOLD};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda_family_partner_is_shifted_sech2(lambda in 0.05f64..0.95, kappa in 0.3f64..2.0) {
        let s = LambdaSupport::free_particle(lambda, kappa).unwrap();
        let g = Grid1D::new(-8.0, 8.0, 201).unwrap();
        let u1 = partner_potential_1d(|x| s.potential(x), &s.support(), g).unwrap();
        let shift = 0.5 * (lambda / (1.0 - lambda)).ln();
        for i in 0..g.n {
            let exact = -2.0 * kappa * kappa / (kappa * g.point(i) + shift).cosh().powi(2);
            prop_assert!((u1.values[i] - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn plus_ground_level_is_factorization_energy(b in 0.2f64..3.0, k in 0.2f64..3.0) {
        let e = closed_form_level(b, k, Branch::Plus, 0, 0);
        prop_assert!((e + b * b).abs() <= 1e-12 * b * b);
    }

    #[test]
    fn closed_form_levels_increase_with_n(b in 0.2f64..3.0, k in 0.6f64..3.0, m in 0i64..4) {
        for branch in [Branch::Minus, Branch::Plus] {
            for n in 0..6 {
                prop_assert!(closed_form_level(b, k, branch, n, m) < closed_form_level(b, k, branch, n + 1, m));
            }
        }
    }

    #[test]
    fn pinning_k_matches_glossary_formula(n in 0usize..6, m_frac in 0.0f64..1.0) {
        let m = (m_frac * (n + 1) as f64).floor() as i64;
        let p = pinning_k(n, m).unwrap();
        let np1 = (n + 1) as f64;
        let k = (np1 * np1 - (m * m) as f64) / (2.0 * np1);
        prop_assert!((p.k_value - k).abs() <= 1e-14);
        if let Some(partner) = p.partner_n {
            let minus = closed_form_level(1.0, k, Branch::Minus, n, m);
            let plus = closed_form_level(1.0, k, Branch::Plus, partner, m);
            prop_assert!((minus - plus).abs() <= 1e-12);
        }
    }

    #[test]
    fn superalgebra_closes_for_any_seed(b in 0.3f64..2.0, k in 0.3f64..2.0, n in 6usize..14, seed in any::<u64>()) {
        let support = CylindricalSeed::new(b, k).unwrap().support();
        let g = Grid2D::centered(4.0, n).unwrap();
        let r = build_super_2d(&support, g).unwrap().residuals(4, seed);
        prop_assert!(r.max() <= ALGEBRA_THRESHOLD);
        let cx = Complex2D::primal(&support, g).unwrap();
        prop_assert!(intertwining_residual(&cx, &assemble_hamiltonians(&cx), 4, seed).max() <= ALGEBRA_THRESHOLD);
    }

    #[test]
    fn supercharge_adjoint_is_transpose(b in 0.3f64..2.0, k in 0.3f64..2.0, seed in any::<u64>()) {
        let support = CylindricalSeed::new(b, k).unwrap().support();
        let m = build_super_2d(&support, Grid2D::centered(4.0, 8).unwrap()).unwrap();
        let (rows, cols) = (m.q.rows(), m.q.cols());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = dot(&m.q.apply(&x), &y);
        let rhs = dot(&x, &m.q_adjoint().apply(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}
