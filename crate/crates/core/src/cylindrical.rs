//! The cylindrical family `phi = exp(b r) / r^k`, its zero modes, the
//! asymptotic normalizability classifier and the level-pinning condition.

use num_rational::Ratio;
use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{Error, Result};
use crate::factorops::{Asymptotics, Growth, SupportSpec};
use crate::grid::{quadrature, Domain, Grid2D, RadialGrid, ScalarField, VectorField};
use crate::spectra::{closed_form_level, radial_window, solve_radial_extrapolated, Branch, SpectrumReport};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CylindricalSeed {
    pub b: f64,
    pub k: f64,
}

fn radius(x: &[f64]) -> f64 {
    x[0].hypot(x[1])
}

impl CylindricalSeed {
    pub fn new(b: f64, k: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) || !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need b > 0 and k > 0, got b={b}, k={k}"
            )));
        }
        Ok(Self { b, k })
    }

    pub fn e0(&self) -> f64 {
        -self.b * self.b
    }

    pub fn support(&self) -> SupportSpec {
        let (b, k) = (self.b, self.k);
        SupportSpec::new(
            2,
            self.e0(),
            move |x| b * radius(x) - k * radius(x).ln(),
            move |x, l| {
                let r = radius(x);
                (b - k / r) * x[l] / r
            },
        )
        .expect("valid parameters")
        .with_laplacian(move |x| b / radius(x))
        .with_asymptotics(Asymptotics {
            infinity: Growth::Exponential(b),
            origin: Growth::Power(-k),
        })
    }

    /// Seed potential `u = k^2/r^2 - b(2k-1)/r`.
    pub fn seed_potential(&self, r: f64) -> f64 {
        self.k * self.k / (r * r) - self.b * (2.0 * self.k - 1.0) / r
    }

    /// Partner potential `u1 = k^2/r^2 - b(2k+1)/r`.
    pub fn partner_potential(&self, r: f64) -> f64 {
        self.k * self.k / (r * r) - self.b * (2.0 * self.k + 1.0) / r
    }

    /// Largest `|u1 - (u - 2 lap ln phi)|` over the radii.
    pub fn partner_identity_defect(&self, radii: &[f64]) -> f64 {
        radii
            .iter()
            .map(|&r| (self.partner_potential(r) - (self.seed_potential(r) - 2.0 * self.b / r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn phi(&self, r: f64) -> f64 {
        (self.b * r - self.k * r.ln()).exp()
    }

    pub fn inv_phi(&self, r: f64) -> f64 {
        (self.k * r.ln() - self.b * r).exp()
    }

    /// `f(r) = int_0^r s^(2k-1) exp(-2 b s) ds`, so that `f' = 1/(r phi^2)`.
    pub fn f(&self, r: f64) -> f64 {
        let a = 2.0 * self.k;
        gamma(a) * gamma_lr(a, 2.0 * self.b * r) / (2.0 * self.b).powf(a)
    }

    /// `d_m f = x_m / (r phi)^2`.
    pub fn grad_f(&self, x: &[f64], m: usize) -> f64 {
        let r = radius(x);
        x[m] * (2.0 * (self.k - 1.0) * r.ln() - 2.0 * self.b * r).exp()
    }

    /// `psi~_m = phi d_m f = x_m / (r^2 phi)`.
    pub fn psi_tilde(&self, x: &[f64], m: usize) -> f64 {
        let r = radius(x);
        x[m] / (r * r) * self.inv_phi(r)
    }

    /// Exact `||1/phi||^2 = 2 pi Gamma(2k+2) / (2b)^(2k+2)` over the plane.
    pub fn inv_phi_norm_sq(&self) -> f64 {
        let a = 2.0 * self.k + 2.0;
        2.0 * std::f64::consts::PI * gamma(a) / (2.0 * self.b).powf(a)
    }

    /// Exact `||psi~||^2 = 2 pi Gamma(2k) / (2b)^(2k)` over the plane.
    pub fn psi_tilde_norm_sq(&self) -> f64 {
        let a = 2.0 * self.k;
        2.0 * std::f64::consts::PI * gamma(a) / (2.0 * self.b).powf(a)
    }
}

/// Zero modes sampled on the staggered lattices of a grid.
#[derive(Clone, Debug)]
pub struct ZeroModeFields {
    pub grid: Grid2D,
    /// `f` on the nodes.
    pub f: ScalarField,
    /// `d_m f` on the edges.
    pub grad_f: VectorField,
    /// `psi~_m` on the edges.
    pub psi_tilde: VectorField,
    /// `1/phi` on the cells.
    pub inv_phi: ScalarField,
    pub inv_phi_norm_sq: f64,
    pub psi_tilde_norm_sq: f64,
}

pub fn zero_mode_fields(seed: &CylindricalSeed, grid: Grid2D) -> Result<ZeroModeFields> {
    let s = *seed;
    let f = ScalarField::sample(Domain::Plane(grid), |x| s.f(radius(x)))?;
    let grad_f = VectorField::on_edges(grid, |m, x| s.grad_f(x, m))?;
    let psi_tilde = VectorField::on_edges(grid, |m, x| s.psi_tilde(x, m))?;
    let inv_phi = ScalarField::sample(Domain::Plane(grid.cells()), |x| s.inv_phi(radius(x)))?;
    Ok(ZeroModeFields {
        grid,
        inv_phi_norm_sq: inv_phi.norm().powi(2),
        psi_tilde_norm_sq: psi_tilde.norm_sq(),
        f,
        grad_f,
        psi_tilde,
        inv_phi,
    })
}

/// Radial norm `int 2 pi r g(r)^2 dr` on `[r_min, r_max]` and on a window of
/// twice the outer radius at the same spacing.
pub fn radial_norm_growth<G: Fn(f64) -> f64 + Sync>(g: G, r_min: f64, r_max: f64, n: usize) -> Result<(f64, f64)> {
    let inner = RadialGrid::new(r_min, r_max, n)?;
    let outer = RadialGrid::new(r_min, r_min + 2.0 * (r_max - r_min), 2 * n - 1)?;
    let norm = |grid: RadialGrid| -> Result<f64> {
        let f = ScalarField::sample(Domain::Radial(grid), |x| g(x[0]).powi(2))?;
        Ok(quadrature(&f))
    };
    Ok((norm(inner)?, norm(outer)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AddsLevelTo {
    /// `1/phi` normalizable only: `E0` joins the spectrum of `h1`.
    H1Only,
    /// `psi~` normalizable only: `E0` joins the spectrum of the matrix Hamiltonian.
    MatrixOnly,
    Both,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelAddition {
    pub adds_level_to: AddsLevelTo,
    pub inv_phi_normalizable: bool,
    pub psi_tilde_normalizable: bool,
}

/// Decides normalizability of `1/phi` and of `psi~ = (x_m / r^2) / phi` from
/// the declared leading exponents of a radial support.
///
/// With `phi ~ r^a` at infinity and `phi ~ r^c` at the origin,
/// `||psi~||^2 ~ int dr / (r phi^2)` converges iff `a > 0` and `c < 0`, and
/// `||1/phi||^2 ~ int r dr / phi^2` converges iff `a > 1` and `c < 1`.
/// Exponential growth at infinity counts as arbitrarily large `a`.
pub fn asymptotic_classifier(support: &SupportSpec) -> Result<LevelAddition> {
    let a = support.asymptotics().ok_or(Error::UndeclaredAsymptotics)?;
    let grows_faster_than = |p: f64| match a.infinity {
        Growth::Power(x) => x > p,
        Growth::Exponential(c) => c > 0.0,
    };
    let c = match a.origin {
        Growth::Power(x) => x,
        Growth::Exponential(_) => 0.0,
    };
    let psi = grows_faster_than(0.0) && c < 0.0;
    let inv = grows_faster_than(1.0) && c < 1.0;
    let adds_level_to = match (inv, psi) {
        (true, true) => AddsLevelTo::Both,
        (true, false) => AddsLevelTo::H1Only,
        (false, true) => AddsLevelTo::MatrixOnly,
        (false, false) => AddsLevelTo::Neither,
    };
    Ok(LevelAddition {
        adds_level_to,
        inv_phi_normalizable: inv,
        psi_tilde_normalizable: psi,
    })
}

type Q = Ratio<i64>;

fn ratio_string(r: Q) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pinning {
    pub n: usize,
    pub m: i64,
    /// Exact `k` as `p/q`.
    pub k: String,
    pub k_value: f64,
    /// `sqrt(m^2 + k^2)`, rational at the pinned `k`.
    pub nu: String,
    /// Minus-branch level `E_N` divided by `b^2`, exact.
    pub level_over_b2: String,
    pub level_over_b2_value: f64,
    /// Plus-branch index `N'` with the same energy, if it is an integer.
    pub partner_n: Option<usize>,
    /// `2k - 1 = 0`: the minus-branch levels collapse to zero.
    pub degenerate: bool,
}

/// The `k` with `sqrt(m^2 + k^2) = N + 1 - k`, i.e. `k = ((N+1)^2 - m^2) / (2(N+1))`,
/// together with the plus-branch level it coincides with.
pub fn pinning_k(n: usize, m: i64) -> Result<Pinning> {
    let np1 = n as i64 + 1;
    if m.abs() >= np1 {
        return Err(Error::InvalidParameter(format!(
            "no positive k pins level N={n} in channel m={m}: need |m| < N + 1"
        )));
    }
    let k = Q::new(np1 * np1 - m * m, 2 * np1);
    let nu = Q::new(np1 * np1 + m * m, 2 * np1);
    let one = Q::from_integer(1);
    let two = Q::from_integer(2);
    let zm = two * k - one;
    let zp = two * k + one;
    let denom = one + two * Q::from_integer(n as i64) + two * nu;
    let ratio = zm / denom;
    let level = -(ratio * ratio);
    let degenerate = zm == Q::from_integer(0);
    let partner_n = if degenerate {
        None
    } else {
        // |2k-1| / D = (2k+1) / (1 + 2N' + 2 nu)
        let d_plus = zp / (if zm < Q::from_integer(0) { -ratio } else { ratio });
        let np = (d_plus - one - two * nu) / two;
        (np.is_integer() && *np.numer() >= 0).then(|| *np.numer() as usize)
    };
    let f = |r: Q| *r.numer() as f64 / *r.denom() as f64;
    Ok(Pinning {
        n,
        m,
        k: ratio_string(k),
        k_value: f(k),
        nu: ratio_string(nu),
        level_over_b2: ratio_string(level),
        level_over_b2_value: f(level),
        partner_n,
        degenerate,
    })
}

/// Radial spectrum of `u` (minus) or `u1` (plus) for `N <= n_max`,
/// `|m| <= m_max`, one Richardson step at spacing `h`. Each channel's window
/// reaches `max(r_min, radial_window(E_(n_max)))`.
pub fn numerical_spectrum(
    seed: &CylindricalSeed,
    branch: Branch,
    n_max: usize,
    m_max: i64,
    h: f64,
    r_min: f64,
) -> Result<SpectrumReport> {
    let z = branch.coupling(seed.b, seed.k);
    let k = seed.k;
    let channels: Vec<Result<SpectrumReport>> = (0..=m_max.max(0))
        .into_par_iter()
        .map(|m| {
            let e = closed_form_level(seed.b, seed.k, branch, n_max, m);
            let r_max = radial_window(e, z).max(r_min);
            let s = solve_radial_extrapolated(move |r| k * k / (r * r) - z / r, m, r_max, h, n_max + 1, 1e-13)?;
            if s.levels.len() <= n_max {
                return Err(Error::SolverFailure {
                    channel: format!("{} m={m}", branch.name()),
                    reason: format!("found {} of {} bound levels", s.levels.len(), n_max + 1),
                });
            }
            Ok(s)
        })
        .collect();
    let mut out = SpectrumReport {
        levels: Vec::new(),
        solver: Vec::new(),
    };
    for c in channels {
        out = out.merge(c?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{closed_form_level, Branch};

    #[test]
    fn f_derivative_matches_closed_form() {
        let s = CylindricalSeed::new(1.3, 0.8).unwrap();
        for r in [0.3, 1.0, 2.7] {
            let h = 1e-5;
            let fd = (s.f(r + h) - s.f(r - h)) / (2.0 * h);
            let exact = 1.0 / (r * s.phi(r).powi(2));
            assert!((fd - exact).abs() < 1e-8 * exact.max(1.0));
        }
    }

    #[test]
    fn partner_identity_is_exact() {
        let s = CylindricalSeed::new(1.0, 1.0).unwrap();
        let rs: Vec<f64> = (1..200).map(|i| 0.05 * i as f64).collect();
        assert!(s.partner_identity_defect(&rs) < 1e-12);
        assert_eq!(s.partner_potential(1.0), 1.0 - 3.0);
        assert_eq!(s.seed_potential(1.0), 0.0);
    }

    #[test]
    fn norms_for_unit_parameters() {
        let s = CylindricalSeed::new(1.0, 1.0).unwrap();
        assert!((s.inv_phi_norm_sq() - 2.0 * std::f64::consts::PI * 6.0 / 16.0).abs() < 1e-12);
        assert!((s.psi_tilde_norm_sq() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn sampled_norms_converge() {
        let s = CylindricalSeed::new(1.0, 1.0).unwrap();
        let z = zero_mode_fields(&s, Grid2D::centered(12.0, 200).unwrap()).unwrap();
        assert!((z.inv_phi_norm_sq / s.inv_phi_norm_sq() - 1.0).abs() < 1e-3);
        assert!((z.psi_tilde_norm_sq / s.psi_tilde_norm_sq() - 1.0).abs() < 2e-2);
    }

    #[test]
    fn classifier_cases() {
        let c = asymptotic_classifier(&CylindricalSeed::new(1.0, 1.0).unwrap().support()).unwrap();
        assert_eq!(c.adds_level_to, AddsLevelTo::Both);
        let sqrt_r = SupportSpec::new(2, 0.0, |x| 0.5 * radius(x).ln(), |x, l| 0.5 * x[l] / radius(x).powi(2))
            .unwrap()
            .with_asymptotics(Asymptotics {
                infinity: Growth::Power(0.5),
                origin: Growth::Power(0.5),
            });
        assert_eq!(
            asymptotic_classifier(&sqrt_r).unwrap().adds_level_to,
            AddsLevelTo::Neither
        );
        assert_eq!(
            asymptotic_classifier(&SupportSpec::trivial(2).unwrap())
                .unwrap()
                .adds_level_to,
            AddsLevelTo::Neither
        );
        let bare = SupportSpec::new(2, 0.0, |_| 0.0, |_, _| 0.0).unwrap();
        assert!(matches!(
            asymptotic_classifier(&bare),
            Err(Error::UndeclaredAsymptotics)
        ));
    }

    #[test]
    fn classifier_agrees_with_numerical_growth() {
        // phi = r^{1/2}: the norm of 1/phi grows linearly with the window.
        let (a, b) = radial_norm_growth(|r| r.powf(-0.5), 1e-3, 50.0, 5001).unwrap();
        assert!(b / a - 1.0 > 1e-3);
        let s = CylindricalSeed::new(1.0, 1.0).unwrap();
        let (a, b) = radial_norm_growth(|r| s.inv_phi(r), 1e-4, 30.0, 30001).unwrap();
        assert!(b / a - 1.0 < 1e-3);
    }

    #[test]
    fn pinning_cases() {
        let p = pinning_k(1, 0).unwrap();
        assert_eq!(
            (p.k.as_str(), p.partner_n, p.level_over_b2.as_str()),
            ("1", Some(6), "-1/25")
        );
        let p = pinning_k(1, 1).unwrap();
        assert_eq!(
            (p.k.as_str(), p.partner_n, p.level_over_b2.as_str()),
            ("3/4", Some(12), "-1/121")
        );
        let p = pinning_k(2, 0).unwrap();
        assert_eq!(
            (p.k.as_str(), p.partner_n, p.level_over_b2.as_str()),
            ("3/2", Some(6), "-1/16")
        );
        let p = pinning_k(0, 0).unwrap();
        assert!(p.degenerate && p.partner_n.is_none());
        assert!(pinning_k(1, 2).is_err());
    }

    #[test]
    fn pinned_levels_agree_with_closed_form() {
        for (n, m) in [(1usize, 0i64), (1, 1), (2, 0)] {
            let p = pinning_k(n, m).unwrap();
            let lhs = closed_form_level(1.0, p.k_value, Branch::Minus, n, m);
            let rhs = closed_form_level(1.0, p.k_value, Branch::Plus, p.partner_n.unwrap(), m);
            assert!((lhs - rhs).abs() < 1e-15);
            assert!((lhs - p.level_over_b2_value).abs() < 1e-15);
        }
    }
}
