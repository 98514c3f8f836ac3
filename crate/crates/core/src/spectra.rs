//! Bound-state spectra: finite-difference eigen-solves in 1D and in radial
//! channels, the closed-form cylindrical spectrum, and spectrum comparison.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Domain, RadialGrid, ScalarField};

/// Symmetric tridiagonal matrix with diagonal `a` and off-diagonal `b`.
#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(b.len() + 1, a.len(), "off-diagonal must be one shorter");
        Self { a, b }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Number of eigenvalues strictly below `x` (Sturm count).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.a.len() {
            let off = if i == 0 { 0.0 } else { self.b[i - 1] * self.b[i - 1] };
            d = (self.a[i] - x) - off / d;
            if d == 0.0 {
                d = -f64::EPSILON * (self.a[i].abs() + x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.a.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.b[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.b[i].abs() } else { 0.0 };
            lo = lo.min(self.a[i] - r);
            hi = hi.max(self.a[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection to absolute tolerance `tol`.
    pub fn eigenvalue(&self, k: usize, tol: f64) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for an eigenvalue estimate by inverse iteration, unit 2-norm.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.a.len();
        let scale = self.a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let shift = lambda + 1e-13 * scale;
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 13) as f64).collect();
        for _ in 0..3 {
            x = self.solve_shifted(shift, &x);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut x {
                *v /= nrm;
            }
        }
        x
    }

    /// `||(T - lambda) x|| / ||x||`.
    pub fn residual(&self, lambda: f64, x: &[f64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        for i in 0..n {
            let mut y = (self.a[i] - lambda) * x[i];
            if i > 0 {
                y += self.b[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                y += self.b[i] * x[i + 1];
            }
            s += y * y;
        }
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.sqrt() / nx
    }

    /// Solves `(T - s) y = rhs` with partial pivoting.
    fn solve_shifted(&self, s: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.a.len();
        // Banded LU with one extra superdiagonal for row swaps.
        let mut d: Vec<f64> = self.a.iter().map(|v| v - s).collect();
        let mut u1: Vec<f64> = self.b.clone();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut swap = vec![false; n];
        let mut low: Vec<f64> = self.b.clone();
        low.push(0.0);
        for i in 0..n.saturating_sub(1) {
            if low[i].abs() > d[i].abs() {
                swap[i] = true;
                let (di, ui, u2i) = (d[i], u1[i], u2[i]);
                d[i] = low[i];
                u1[i] = d[i + 1];
                u2[i] = u1[i + 1];
                low[i] = di;
                d[i + 1] = ui;
                u1[i + 1] = u2i;
            }
            let piv = if d[i] == 0.0 { f64::MIN_POSITIVE } else { d[i] };
            l[i] = low[i] / piv;
            d[i + 1] -= l[i] * u1[i];
            u1[i + 1] -= l[i] * u2[i];
        }
        let mut y = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if swap[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= l[i] * y[i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            if i + 1 < n {
                v -= u1[i] * y[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * y[i + 2];
            }
            let piv = if d[i] == 0.0 { f64::MIN_POSITIVE } else { d[i] };
            y[i] = v / piv;
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Level {
    pub m: Option<i64>,
    pub n: usize,
    pub energy: f64,
    /// Eigen-equation residual, or the extrapolation correction for
    /// Richardson-combined levels; zero for closed-form levels.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverMeta {
    pub channel: Option<i64>,
    pub grid: String,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub spacing: f64,
    pub tolerance: f64,
    pub continuum_edge: f64,
    pub richardson: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub levels: Vec<Level>,
    pub solver: Vec<SolverMeta>,
}

impl SpectrumReport {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn channel(&self, m: i64) -> Vec<&Level> {
        self.levels.iter().filter(|l| l.m == Some(m)).collect()
    }

    pub fn get(&self, m: Option<i64>, n: usize) -> Option<&Level> {
        self.levels.iter().find(|l| l.m == m && l.n == n)
    }

    pub fn merge(mut self, other: SpectrumReport) -> Self {
        self.levels.extend(other.levels);
        self.solver.extend(other.solver);
        self
    }

    /// Table with header `m,N,energy,residual`; `m` is empty for 1D spectra.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let e = |e: csv::Error| Error::Csv(e.to_string());
        wr.write_record(["m", "N", "energy", "residual"]).map_err(e)?;
        for l in &self.levels {
            wr.write_record([
                l.m.map(|m| m.to_string()).unwrap_or_default(),
                l.n.to_string(),
                format!("{:.15e}", l.energy),
                format!("{:.3e}", l.residual),
            ])
            .map_err(e)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Lowest `count` eigenvalues of `-f'' + u f` with zero Dirichlet values one
/// step outside the grid. Only levels below the continuum edge
/// `min(u(x_min), u(x_max)) - 10 h^2` are kept.
pub fn solve_1d(u: &ScalarField, count: usize, tol: f64) -> Result<SpectrumReport> {
    let g = match u.domain {
        Domain::Line(g) => g,
        _ => return Err(Error::Unsupported("solve_1d needs a line grid".into())),
    };
    if count == 0 || count > g.n {
        return Err(Error::TooManyEigenvalues {
            requested: count,
            size: g.n,
        });
    }
    let h2 = g.h * g.h;
    let t = SymTridiagonal::new(
        u.values.iter().map(|v| 2.0 / h2 + v).collect(),
        vec![-1.0 / h2; g.n - 1],
    );
    let edge = u.values[0].min(u.values[g.n - 1]);
    let bound = edge - 10.0 * h2;
    let levels = lowest_levels(&t, count, tol, bound, None);
    Ok(SpectrumReport {
        levels,
        solver: vec![SolverMeta {
            channel: None,
            grid: "line".into(),
            x_min: g.x_min,
            x_max: g.x_max(),
            points: g.n,
            spacing: g.h,
            tolerance: tol,
            continuum_edge: edge,
            richardson: false,
        }],
    })
}

fn lowest_levels(t: &SymTridiagonal, count: usize, tol: f64, bound: f64, m: Option<i64>) -> Vec<Level> {
    let below = t.count_below(bound).min(count);
    (0..below)
        .into_par_iter()
        .map(|k| {
            let e = t.eigenvalue(k, tol);
            let v = t.eigenvector(e);
            Level {
                m,
                n: k,
                energy: e,
                residual: t.residual(e, &v),
            }
        })
        .collect()
}

/// Bound levels of `-chi'' + [(m^2 - 1/4)/r^2 + u(r)] chi = E chi`, labelled
/// `(|m|, N)`.
///
/// The operator is discretized in conservative form,
/// `-(1/r)(r psi')' + (m^2/r^2 + u) psi` with `chi = sqrt(r) psi`, and
/// symmetrized by the `sqrt(r)` scaling. The inner face sits at `r_min - h/2`,
/// which is the origin for half-offset grids; the outer end is Dirichlet.
pub fn solve_radial<U>(u: U, m: i64, grid: &RadialGrid, count: usize, tol: f64) -> Result<SpectrumReport>
where
    U: Fn(f64) -> f64 + Sync,
{
    if count == 0 || count > grid.n {
        return Err(Error::TooManyEigenvalues {
            requested: count,
            size: grid.n,
        });
    }
    let m = m.abs();
    let h = grid.h;
    let h2 = h * h;
    let m2 = (m * m) as f64;
    let a: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|&r| ((r + 0.5 * h) + (r - 0.5 * h)) / (r * h2) + m2 / (r * r) + u(r))
        .collect();
    if let Some(i) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::SolverFailure {
            channel: format!("m={m}"),
            reason: format!("potential is not finite at r={}", grid.point(i)),
        });
    }
    let b: Vec<f64> = (0..grid.n - 1)
        .map(|i| {
            let (r0, r1) = (grid.point(i), grid.point(i + 1));
            -(r0 + 0.5 * h) / (h2 * (r0 * r1).sqrt())
        })
        .collect();
    let t = SymTridiagonal::new(a, b);
    let r_max = grid.r_max();
    let edge = u(r_max) + m2 / (r_max * r_max);
    let levels = lowest_levels(&t, count, tol, edge - 10.0 * h2, Some(m));
    Ok(SpectrumReport {
        levels,
        solver: vec![SolverMeta {
            channel: Some(m),
            grid: "radial".into(),
            x_min: grid.r_min,
            x_max: r_max,
            points: grid.n,
            spacing: grid.h,
            tolerance: tol,
            continuum_edge: edge,
            richardson: false,
        }],
    })
}

/// Richardson-extrapolated radial levels `(4 E_{h/2} - E_h)/3` on half-offset
/// grids reaching `r_max`. The residual column holds `|E - E_{h/2}|`.
pub fn solve_radial_extrapolated<U>(u: U, m: i64, r_max: f64, h: f64, count: usize, tol: f64) -> Result<SpectrumReport>
where
    U: Fn(f64) -> f64 + Sync,
{
    if !(h > 0.0) || !(r_max > h) {
        return Err(Error::InvalidGrid(format!("bad radial window r_max={r_max}, h={h}")));
    }
    let n = (r_max / h + 0.5).round() as usize;
    let coarse_grid = RadialGrid::half_offset((n as f64 - 0.5) * h, n)?;
    let fine_grid = RadialGrid::half_offset((2 * n) as f64 * 0.5 * h - 0.25 * h, 2 * n)?;
    let coarse = solve_radial(&u, m, &coarse_grid, count, tol)?;
    let fine = solve_radial(&u, m, &fine_grid, count, tol)?;
    let k = coarse.levels.len().min(fine.levels.len());
    let levels = (0..k)
        .map(|i| {
            let ec = coarse.levels[i].energy;
            let ef = fine.levels[i].energy;
            let e = (4.0 * ef - ec) / 3.0;
            Level {
                m: Some(m.abs()),
                n: i,
                energy: e,
                residual: (e - ef).abs(),
            }
        })
        .collect();
    let mut meta = fine.solver[0].clone();
    meta.richardson = true;
    Ok(SpectrumReport {
        levels,
        solver: vec![meta],
    })
}

/// Outer radius that contains a level of energy `e < 0` in an attractive
/// `-z/r` tail with room for its exponential decay.
pub fn radial_window(e: f64, z: f64) -> f64 {
    let kappa = e.abs().sqrt();
    2.0 * z.max(0.0) / (kappa * kappa) + 16.0 / kappa
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `u = k^2/r^2 - b(2k-1)/r`
    Minus,
    /// `u1 = k^2/r^2 - b(2k+1)/r`
    Plus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Minus => -1.0,
            Branch::Plus => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        }
    }

    /// Coulomb coupling `z` in `-z/r`.
    pub fn coupling(self, b: f64, k: f64) -> f64 {
        b * (2.0 * k + self.sign())
    }
}

/// `E_N = -b^2 (2k -+ 1)^2 / (1 + 2(N + sqrt(m^2 + k^2)))^2`.
pub fn closed_form_level(b: f64, k: f64, branch: Branch, n: usize, m: i64) -> f64 {
    let z = 2.0 * k + branch.sign();
    let d = 1.0 + 2.0 * (n as f64 + ((m * m) as f64 + k * k).sqrt());
    -b * b * z * z / (d * d)
}

pub fn closed_form_spectrum(b: f64, k: f64, branch: Branch, n_max: usize, m_max: i64) -> Result<SpectrumReport> {
    if !(b > 0.0) || !(k > 0.0) || !b.is_finite() || !k.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need b > 0 and k > 0, got b={b}, k={k}"
        )));
    }
    if m_max < 0 {
        return Err(Error::InvalidParameter("m_max must be non-negative".into()));
    }
    let levels = (0..=m_max)
        .flat_map(|m| {
            (0..=n_max).map(move |n| Level {
                m: Some(m),
                n,
                energy: closed_form_level(b, k, branch, n, m),
                residual: 0.0,
            })
        })
        .collect();
    Ok(SpectrumReport {
        levels,
        solver: Vec::new(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchedPair {
    pub a: Level,
    pub b: Level,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelShift {
    pub m: Option<i64>,
    pub n: usize,
    pub shift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub tolerance: f64,
    pub matched: Vec<MatchedPair>,
    pub unmatched_a: Vec<Level>,
    pub unmatched_b: Vec<Level>,
    /// `E_b - E_a` for every label present in both spectra.
    pub shifts: Vec<LabelShift>,
}

impl ComparisonReport {
    /// Least-squares slope of `ln|shift|` against `ln(N + 1)` in channel `m`
    /// for `N` in `n_lo..=n_hi`.
    pub fn shift_exponent(&self, m: Option<i64>, n_lo: usize, n_hi: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .shifts
            .iter()
            .filter(|s| s.m == m && s.n >= n_lo && s.n <= n_hi && s.shift != 0.0)
            .map(|s| (((s.n + 1) as f64).ln(), s.shift.abs().ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// One-to-one matching of levels closer than `tol`, nearest pairs first.
pub fn compare_spectra(a: &SpectrumReport, b: &SpectrumReport, tol: f64) -> ComparisonReport {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, la) in a.levels.iter().enumerate() {
        for (j, lb) in b.levels.iter().enumerate() {
            let d = (la.energy - lb.energy).abs();
            if d <= tol {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut used_a = vec![false; a.levels.len()];
    let mut used_b = vec![false; b.levels.len()];
    let mut matched = Vec::new();
    for (d, i, j) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched.push(MatchedPair {
                a: a.levels[i].clone(),
                b: b.levels[j].clone(),
                distance: d,
            });
        }
    }
    let unmatched = |levels: &[Level], used: &[bool]| {
        levels
            .iter()
            .zip(used)
            .filter(|(_, &u)| !u)
            .map(|(l, _)| l.clone())
            .collect()
    };
    let shifts = a
        .levels
        .iter()
        .filter_map(|la| {
            b.get(la.m, la.n).map(|lb| LabelShift {
                m: la.m,
                n: la.n,
                shift: lb.energy - la.energy,
            })
        })
        .collect();
    ComparisonReport {
        tolerance: tol,
        unmatched_a: unmatched(&a.levels, &used_a),
        unmatched_b: unmatched(&b.levels, &used_b),
        matched,
        shifts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    #[test]
    fn sturm_count_and_bisection_on_known_matrix() {
        // Eigenvalues of tridiag(-1, 2, -1) of size n are 2 - 2 cos(j pi/(n+1)).
        let n = 50;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        for j in [1usize, 2, 17, 50] {
            let exact = 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((t.eigenvalue(j - 1, 1e-14) - exact).abs() < 1e-12);
        }
        assert_eq!(t.count_below(0.0), 0);
        assert_eq!(t.count_below(4.0), n);
        let e = t.eigenvalue(3, 1e-14);
        let v = t.eigenvector(e);
        assert!(t.residual(e, &v) < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_levels() {
        let g = Grid1D::new(-10.0, 10.0, 2001).unwrap();
        let u = ScalarField::sample(Domain::Line(g), |x| x[0] * x[0]).unwrap();
        let s = solve_1d(&u, 4, 1e-12).unwrap();
        for (i, l) in s.levels.iter().enumerate() {
            assert!((l.energy - (2 * i + 1) as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn free_particle_has_no_bound_states() {
        let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
        let u = ScalarField::zeros(Domain::Line(g));
        assert!(solve_1d(&u, 5, 1e-12).unwrap().levels.is_empty());
        assert!(matches!(
            solve_1d(&u, 500, 1e-12),
            Err(Error::TooManyEigenvalues { .. })
        ));
    }

    #[test]
    fn closed_form_first_levels() {
        let e = closed_form_level(1.0, 1.0, Branch::Minus, 0, 0);
        assert!((e + 1.0 / 9.0).abs() < 1e-15);
        let e = closed_form_level(1.0, 1.0, Branch::Plus, 0, 0);
        assert!((e + 1.0).abs() < 1e-15);
        let s = closed_form_spectrum(1.0, 1.0, Branch::Minus, 3, 2).unwrap();
        assert_eq!(s.levels.len(), 12);
        assert!(closed_form_spectrum(-1.0, 1.0, Branch::Minus, 3, 2).is_err());
    }

    #[test]
    fn two_dimensional_hydrogen_levels() {
        // -z/r in 2D: E = -z^2 / (2N + 2|m| + 1)^2.
        let z = 1.0;
        let r_max = radial_window(-1.0 / 25.0, z);
        for m in [0i64, 1, -1] {
            let s = solve_radial_extrapolated(|r| -z / r, m, r_max, 0.01, 2, 1e-13).unwrap();
            for (n, l) in s.levels.iter().enumerate() {
                let d = (2 * n) as f64 + 2.0 * m.abs() as f64 + 1.0;
                assert!((l.energy + z * z / (d * d)).abs() < 1e-5, "{l:?}");
                assert_eq!(l.m, Some(m.abs()));
            }
        }
    }

    #[test]
    fn repulsive_coulomb_has_no_bound_level() {
        let g = RadialGrid::half_offset(60.0, 6000).unwrap();
        assert!(solve_radial(|r| 1.0 / r, 0, &g, 5, 1e-12).unwrap().levels.is_empty());
    }

    #[test]
    fn comparison_matches_nearest_pairs_once() {
        let mk = |es: &[f64]| SpectrumReport {
            levels: es
                .iter()
                .enumerate()
                .map(|(n, &e)| Level {
                    m: Some(0),
                    n,
                    energy: e,
                    residual: 0.0,
                })
                .collect(),
            solver: vec![],
        };
        let a = mk(&[-1.0, -0.5, -0.2]);
        let b = mk(&[-0.99, -0.98, -0.3]);
        let c = compare_spectra(&a, &b, 0.05);
        assert_eq!(c.matched.len(), 1);
        assert_eq!(c.matched[0].b.n, 0);
        assert_eq!(c.unmatched_a.len(), 2);
        assert_eq!(c.unmatched_b.len(), 2);
        assert_eq!(c.shifts.len(), 3);
    }

    #[test]
    fn shift_profile_decays_like_inverse_square() {
        let a = closed_form_spectrum(1.0, 1.0, Branch::Minus, 20, 0).unwrap();
        let b = closed_form_spectrum(1.0, 1.0, Branch::Plus, 20, 0).unwrap();
        let c = compare_spectra(&a, &b, 1e-3);
        let p = c.shift_exponent(Some(0), 5, 20).unwrap();
        assert!((p + 2.0).abs() < 0.15, "{p}");
    }

    #[test]
    fn csv_header() {
        let s = closed_form_spectrum(1.0, 1.0, Branch::Minus, 1, 0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,N,energy,residual\n0,0,"));
    }
}
