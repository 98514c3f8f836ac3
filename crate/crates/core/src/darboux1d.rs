//! One-dimensional Darboux pairs and the supersymmetry phase of the
//! `lambda`-family of supports.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorops::{Complex1D, SupportSpec};
use crate::grid::{second_diff, Domain, Grid1D, ScalarField};
use crate::spectra::{solve_1d, SpectrumReport};

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `ln phi_pm` and its derivative for one solution of `h0 phi = E0 phi`.
#[derive(Clone)]
pub struct Solution1D {
    pub ln: Fn1,
    pub d_ln: Fn1,
}

impl Solution1D {
    pub fn new<L, D>(ln: L, d_ln: D) -> Self
    where
        L: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            ln: Arc::new(ln),
            d_ln: Arc::new(d_ln),
        }
    }
}

/// `phi = lambda phi_+ + (1 - lambda) phi_-` for two positive solutions at
/// the same `E0` of `-f'' + u f = E0 f`.
#[derive(Clone)]
pub struct LambdaSupport {
    pub lambda: f64,
    pub e0: f64,
    potential: Fn1,
    plus: Solution1D,
    minus: Solution1D,
}

impl std::fmt::Debug for LambdaSupport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LambdaSupport")
            .field("lambda", &self.lambda)
            .field("e0", &self.e0)
            .finish()
    }
}

impl LambdaSupport {
    pub fn new<U>(lambda: f64, e0: f64, potential: U, plus: Solution1D, minus: Solution1D) -> Result<Self>
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        if !e0.is_finite() {
            return Err(Error::InvalidParameter(format!("E0 must be finite, got {e0}")));
        }
        Ok(Self {
            lambda,
            e0,
            potential: Arc::new(potential),
            plus,
            minus,
        })
    }

    /// `u = 0`, `phi_pm = exp(+-kappa x)`, `E0 = -kappa^2`.
    pub fn free_particle(lambda: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        Self::new(
            lambda,
            -kappa * kappa,
            |_| 0.0,
            Solution1D::new(move |x| kappa * x, move |_| kappa),
            Solution1D::new(move |x| -kappa * x, move |_| -kappa),
        )
    }

    pub fn potential(&self, x: f64) -> f64 {
        (self.potential)(x)
    }

    /// Log-weights of the two terms; `None` for a vanishing coefficient.
    fn terms(&self, x: f64) -> [Option<f64>; 2] {
        let lp = (self.lambda > 0.0).then(|| self.lambda.ln() + (self.plus.ln)(x));
        let lm = (self.lambda < 1.0).then(|| (1.0 - self.lambda).ln() + (self.minus.ln)(x));
        [lp, lm]
    }

    pub fn ln_phi(&self, x: f64) -> f64 {
        match self.terms(x) {
            [Some(a), Some(b)] => {
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
            [Some(a), None] | [None, Some(a)] => a,
            [None, None] => unreachable!("lambda lies in [0, 1]"),
        }
    }

    /// `(ln phi)' = w_+ (ln phi_+)' + w_- (ln phi_-)'` with softmax weights.
    pub fn d_ln_phi(&self, x: f64) -> f64 {
        let l = self.ln_phi(x);
        let [a, b] = self.terms(x);
        a.map_or(0.0, |a| (a - l).exp() * (self.plus.d_ln)(x)) + b.map_or(0.0, |b| (b - l).exp() * (self.minus.d_ln)(x))
    }

    /// `(ln phi)'' = u - E0 - ((ln phi)')^2`, from `phi'' = (u - E0) phi`.
    pub fn d2_ln_phi(&self, x: f64) -> f64 {
        let w = self.d_ln_phi(x);
        self.potential(x) - self.e0 - w * w
    }

    pub fn support(&self) -> SupportSpec {
        let a = self.clone();
        let b = self.clone();
        let c = self.clone();
        SupportSpec::new(1, self.e0, move |x| a.ln_phi(x[0]), move |x, _| b.d_ln_phi(x[0]))
            .expect("validated on construction")
            .with_laplacian(move |x| c.d2_ln_phi(x[0]))
    }
}

/// `u1 = u - 2 (ln phi)''`, from the declared second derivative when present
/// and otherwise from a three-point difference of `ln phi` on the grid.
pub fn partner_potential_1d<U>(u: U, support: &SupportSpec, grid: Grid1D) -> Result<ScalarField>
where
    U: Fn(f64) -> f64 + Sync,
{
    let d = Domain::Line(grid);
    support.validate(&d)?;
    let u_f = ScalarField::sample(d, |x| u(x[0]))?;
    let lap = match support.laplacian_ln_phi(&[grid.x_min]) {
        Some(_) => ScalarField::sample(d, |x| support.laplacian_ln_phi(x).unwrap())?,
        None => second_diff(&ScalarField::sample(d, |x| support.ln_phi(x))?, 0)?,
    };
    let v = u_f.values.iter().zip(&lap.values).map(|(a, l)| a - 2.0 * l).collect();
    ScalarField::new(d, v)
}

/// `q psi` on the edges of the grid of `psi`.
pub fn darboux_map(psi: &ScalarField, support: &SupportSpec) -> Result<ScalarField> {
    let g = match psi.domain {
        Domain::Line(g) => g,
        _ => return Err(Error::Unsupported("darboux_map needs a line grid".into())),
    };
    let c = Complex1D::new(support, g)?;
    ScalarField::new(Domain::Line(c.edges), c.q.apply(&psi.values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Phase {
    Exact,
    Broken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sector {
    H0,
    H1,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseReport {
    pub lambda: f64,
    pub e0: f64,
    pub phase: Phase,
    pub sector: Option<Sector>,
    pub matched_level: Option<f64>,
    pub deviation: Option<f64>,
    pub match_tolerance: f64,
    /// `E0 <= min(spec h0 U spec h1)` up to the match tolerance.
    pub e0_at_bottom: bool,
    pub h0: SpectrumReport,
    pub h1: SpectrumReport,
}

/// Solves `h0 = -d^2 + u` and `h1 = -d^2 + u1` on the grid and decides
/// whether `E0` is a bound level of exactly one of them.
pub fn susy_phase(support: &LambdaSupport, grid: Grid1D, count: usize, tol: f64) -> Result<PhaseReport> {
    let spec = support.support();
    let d = Domain::Line(grid);
    let u = ScalarField::sample(d, |x| support.potential(x[0]))?;
    let u1 = partner_potential_1d(|x| support.potential(x), &spec, grid)?;
    let h0 = solve_1d(&u, count, tol)?;
    let h1 = solve_1d(&u1, count, tol)?;
    let e0 = support.e0;
    let thr = (1e-3 * e0.abs()).max(5.0 * tol);
    let nearest = |s: &SpectrumReport| {
        s.levels
            .iter()
            .map(|l| l.energy)
            .min_by(|a, b| (a - e0).abs().partial_cmp(&(b - e0).abs()).unwrap())
            .filter(|e| (e - e0).abs() <= thr)
    };
    let (m0, m1) = (nearest(&h0), nearest(&h1));
    let (phase, sector, matched) = match (m0, m1) {
        (Some(a), Some(b)) => {
            return Err(Error::LevelInBothSpectra {
                e0,
                h0_level: a,
                h1_level: b,
            })
        }
        (Some(a), None) => (Phase::Exact, Some(Sector::H0), Some(a)),
        (None, Some(b)) => (Phase::Exact, Some(Sector::H1), Some(b)),
        (None, None) => (Phase::Broken, None, None),
    };
    let bottom = h0
        .levels
        .iter()
        .chain(&h1.levels)
        .map(|l| l.energy)
        .fold(f64::INFINITY, f64::min);
    Ok(PhaseReport {
        lambda: support.lambda,
        e0,
        phase,
        sector,
        matched_level: matched,
        deviation: matched.map(|e| (e - e0).abs()),
        match_tolerance: thr,
        e0_at_bottom: e0 <= bottom + thr,
        h0,
        h1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::SymTridiagonal;

    fn grid() -> Grid1D {
        Grid1D::new(-20.0, 20.0, 4000).unwrap()
    }

    #[test]
    fn lambda_outside_unit_interval_rejected() {
        assert!(LambdaSupport::free_particle(1.5, 1.0).is_err());
        assert!(LambdaSupport::free_particle(-0.1, 1.0).is_err());
    }

    #[test]
    fn interior_lambda_gives_exact_phase() {
        let s = LambdaSupport::free_particle(0.5, 1.0).unwrap();
        let r = susy_phase(&s, grid(), 5, 1e-12).unwrap();
        assert_eq!(r.phase, Phase::Exact);
        assert_eq!(r.sector, Some(Sector::H1));
        assert!((r.matched_level.unwrap() + 1.0).abs() < 1e-4);
        assert!(r.h0.levels.is_empty());
        assert!(r.e0_at_bottom);
    }

    #[test]
    fn end_points_break_susy() {
        for lambda in [0.0, 1.0] {
            let s = LambdaSupport::free_particle(lambda, 1.0).unwrap();
            let r = susy_phase(&s, grid(), 5, 1e-12).unwrap();
            assert_eq!(r.phase, Phase::Broken);
            assert!(r.h1.levels.is_empty());
        }
    }

    #[test]
    fn partner_is_reflectionless_well() {
        // lambda = 1/2: u1 = -2 sech^2 x.
        let s = LambdaSupport::free_particle(0.5, 1.0).unwrap();
        let g = Grid1D::new(-5.0, 5.0, 101).unwrap();
        let u1 = partner_potential_1d(|_| 0.0, &s.support(), g).unwrap();
        for (i, v) in u1.values.iter().enumerate() {
            let x = g.point(i);
            assert!((v + 2.0 / x.cosh().powi(2)).abs() < 1e-12);
        }
        // Finite-difference fallback agrees to O(h^2).
        let bare = SupportSpec::new(1, -1.0, |x| x[0].cosh().ln(), |x, _| x[0].tanh()).unwrap();
        let fd = partner_potential_1d(|_| 0.0, &bare, g).unwrap();
        let err = fd
            .values
            .iter()
            .zip(&u1.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn darboux_map_intertwines_eigenvectors() {
        let s = LambdaSupport::free_particle(0.3, 1.0).unwrap().support();
        let g = Grid1D::new(-8.0, 8.0, 161).unwrap();
        let c = Complex1D::new(&s, g).unwrap();
        let h = c.hamiltonians();
        let dense = h.h0.to_dense();
        let n = g.n;
        let t = SymTridiagonal::new(
            (0..n).map(|i| dense[i][i]).collect(),
            (0..n - 1).map(|i| dense[i][i + 1]).collect(),
        );
        let e = t.eigenvalue(2, 1e-13);
        let psi = ScalarField::new(Domain::Line(g), t.eigenvector(e)).unwrap();
        let mapped = darboux_map(&psi, &s).unwrap();
        let h1m = h.h1.apply(&mapped.values);
        let res = h1m
            .iter()
            .zip(&mapped.values)
            .map(|(a, b)| (a - e * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / mapped.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res < 1e-8, "{res}");
    }

    #[test]
    fn phi_stays_finite_far_out() {
        let s = LambdaSupport::free_particle(1e-6, 3.0).unwrap();
        for x in [-300.0, 0.0, 300.0] {
            assert!(s.ln_phi(x).is_finite());
            assert!(s.d_ln_phi(x).abs() <= 3.0 + 1e-12);
        }
    }
}
