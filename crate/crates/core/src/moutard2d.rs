//! Two-dimensional partner potentials, the Moutard transformation and the
//! level-membership diagnostics of the matrix Hamiltonian.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorops::{Asymptotics, Complex2D, Growth, Hamiltonians2D, SupportSpec};
use crate::grid::{central_diff, inner_masked, laplacian, Domain, Grid2D, ScalarField, VectorField};

/// Points kept by a diagnostic: at least `core_radius` from the origin and
/// at least `boundary_layer` points away from every lattice edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegularRegion {
    pub core_radius: f64,
    pub boundary_layer: usize,
}

impl RegularRegion {
    pub fn whole() -> Self {
        Self {
            core_radius: 0.0,
            boundary_layer: 0,
        }
    }

    pub fn punctured(core_radius: f64, boundary_layer: usize) -> Self {
        Self {
            core_radius,
            boundary_layer,
        }
    }

    pub fn mask(&self, g: &Grid2D) -> Vec<bool> {
        let l = self.boundary_layer;
        (0..g.len())
            .map(|k| {
                let (i, j) = g.unindex(k);
                let p = g.point(k);
                i >= l && j >= l && i + l < g.x.n && j + l < g.y.n && p[0].hypot(p[1]) >= self.core_radius
            })
            .collect()
    }
}

fn masked_norm(v: &[f64], mask: &[bool]) -> f64 {
    v.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(x, _)| x * x)
        .sum::<f64>()
        .sqrt()
}

/// `u1 = u - 2 lap ln phi`, analytic when the support declares its Laplacian,
/// otherwise a five-point stencil on sampled `ln phi`.
pub fn partner_potential_2d<U>(u: U, support: &SupportSpec, grid: Grid2D) -> Result<ScalarField>
where
    U: Fn(&[f64]) -> f64 + Sync,
{
    let d = Domain::Plane(grid);
    support.validate(&d)?;
    let u_f = ScalarField::sample(d, &u)?;
    let lap = match support.laplacian_ln_phi(&grid.point(0)) {
        Some(_) => ScalarField::sample(d, |x| support.laplacian_ln_phi(x).unwrap())?,
        None => laplacian(&ScalarField::sample(d, |x| support.ln_phi(x))?)?,
    };
    let v = u_f.values.iter().zip(&lap.values).map(|(a, l)| a - 2.0 * l).collect();
    ScalarField::new(d, v)
}

/// Ground state `phi = exp(-alpha r)` of `-lap - alpha/r` at `E0 = -alpha^2`.
pub fn coulomb_support(alpha: f64) -> Result<SupportSpec> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(SupportSpec::new(
        2,
        -alpha * alpha,
        move |x| -alpha * x[0].hypot(x[1]),
        move |x, l| -alpha * x[l] / x[0].hypot(x[1]),
    )?
    .with_laplacian(move |x| -alpha / x[0].hypot(x[1]))
    .with_asymptotics(Asymptotics {
        infinity: Growth::Exponential(-alpha),
        origin: Growth::Power(0.0),
    }))
}

/// `M(1, 3, z) = 2 (e^z - 1 - z) / z^2`.
fn kummer_1_3(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        1.0 + z / 3.0 + z * z / 12.0 + z * z * z / 60.0
    } else {
        2.0 * (z.exp_m1() - z) / (z * z)
    }
}

/// Regular `m = 1` solution `x exp(-alpha r) M(1, 3, 2 alpha r)` of the
/// Coulomb problem at `E0 = -alpha^2`.
pub fn coulomb_second_solution(alpha: f64, x: &[f64]) -> f64 {
    let r = x[0].hypot(x[1]);
    x[0] * (-alpha * r).exp() * kummer_1_3(2.0 * alpha * r)
}

/// Two solutions `phi > 0` and `psi` of `h0 f = E0 f` on a common grid.
#[derive(Clone, Debug)]
pub struct MoutardPair {
    pub support: SupportSpec,
    pub grid: Grid2D,
    pub psi: ScalarField,
    pub phi: ScalarField,
}

impl MoutardPair {
    pub fn new(support: SupportSpec, psi: ScalarField) -> Result<Self> {
        let grid = *psi.domain.plane()?;
        let d = Domain::Plane(grid);
        support.validate(&d)?;
        let phi = ScalarField::sample(d, |x| support.phi(x))?;
        Ok(Self {
            support,
            grid,
            psi,
            phi,
        })
    }

    pub fn e0(&self) -> f64 {
        self.support.e0()
    }

    /// `J_m = phi d_m psi - psi d_m phi` on the nodes.
    pub fn currents(&self) -> Result<[ScalarField; 2]> {
        let d = Domain::Plane(self.grid);
        let mut out = Vec::with_capacity(2);
        for m in 0..2 {
            let dpsi = central_diff(&self.psi, m)?;
            let dphi = central_diff(&self.phi, m)?;
            let v = (0..self.grid.len())
                .map(|k| self.phi.values[k] * dpsi.values[k] - self.psi.values[k] * dphi.values[k])
                .collect();
            out.push(ScalarField::new(d, v)?);
        }
        Ok([out.remove(0), out.remove(0)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PathOrder {
    /// Along x from the reference corner, then along y.
    HorizontalFirst,
    /// Along y from the reference corner, then along x.
    VerticalFirst,
}

/// `Theta` with `d_1 Theta = J_2`, `d_2 Theta = -J_1`, integrated by the
/// trapezoid rule along an L-shaped path from the lower-left corner, where
/// `Theta = 0`.
pub fn moutard_potential(pair: &MoutardPair, order: PathOrder) -> Result<ScalarField> {
    let [j1, j2] = pair.currents()?;
    let g = pair.grid;
    let (nx, ny) = (g.x.n, g.y.n);
    let h = g.h();
    let at = |f: &ScalarField, i: usize, j: usize| f.values[g.index(i, j)];
    let mut theta = vec![0.0; g.len()];
    match order {
        PathOrder::HorizontalFirst => {
            for i in 1..nx {
                theta[g.index(i, 0)] = theta[g.index(i - 1, 0)] + 0.5 * h * (at(&j2, i - 1, 0) + at(&j2, i, 0));
            }
            for i in 0..nx {
                for j in 1..ny {
                    theta[g.index(i, j)] = theta[g.index(i, j - 1)] - 0.5 * h * (at(&j1, i, j - 1) + at(&j1, i, j));
                }
            }
        }
        PathOrder::VerticalFirst => {
            for j in 1..ny {
                theta[g.index(0, j)] = theta[g.index(0, j - 1)] - 0.5 * h * (at(&j1, 0, j - 1) + at(&j1, 0, j));
            }
            for j in 0..ny {
                for i in 1..nx {
                    theta[g.index(i, j)] = theta[g.index(i - 1, j)] + 0.5 * h * (at(&j2, i - 1, j) + at(&j2, i, j));
                }
            }
        }
    }
    ScalarField::new(Domain::Plane(g), theta)
}

/// `psi1 = Theta / phi`, a solution of `h1 psi1 = E0 psi1`.
pub fn moutard_transform(pair: &MoutardPair, order: PathOrder) -> Result<ScalarField> {
    let theta = moutard_potential(pair, order)?;
    let v = theta.values.iter().zip(&pair.phi.values).map(|(t, p)| t / p).collect();
    ScalarField::new(theta.domain, v)
}

/// `psi1` at the end of an explicit lattice path of unit steps starting at
/// the reference corner `(0, 0)`.
pub fn moutard_along(pair: &MoutardPair, path: &[(usize, usize)]) -> Result<f64> {
    let g = pair.grid;
    match path.first() {
        Some(&(0, 0)) => {}
        _ => return Err(Error::PathLeavesGrid { step: 0 }),
    }
    let [j1, j2] = pair.currents()?;
    let h = g.h();
    let mut theta = 0.0;
    for (step, w) in path.windows(2).enumerate() {
        let ((i0, j0), (i1, j1_)) = (w[0], w[1]);
        if i1 >= g.x.n || j1_ >= g.y.n {
            return Err(Error::PathLeavesGrid { step: step + 1 });
        }
        let a = g.index(i0, j0);
        let b = g.index(i1, j1_);
        theta += match (i1 as i64 - i0 as i64, j1_ as i64 - j0 as i64) {
            (1, 0) => 0.5 * h * (j2.values[a] + j2.values[b]),
            (-1, 0) => -0.5 * h * (j2.values[a] + j2.values[b]),
            (0, 1) => -0.5 * h * (j1.values[a] + j1.values[b]),
            (0, -1) => 0.5 * h * (j1.values[a] + j1.values[b]),
            _ => return Err(Error::PathLeavesGrid { step: step + 1 }),
        };
    }
    let &(i, j) = path.last().unwrap();
    Ok(theta / pair.phi.values[g.index(i, j)])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MoutardChecks {
    pub spacing: f64,
    /// `||psi1_H - psi1_V|| / ||psi1_H||` between the two L-paths.
    pub path_discrepancy: f64,
    /// `||(-lap + u1 - E0) psi1|| / ||psi1||` with the five-point Laplacian.
    pub eigen_residual: f64,
}

/// Path independence and eigen-residual of the transform, measured on `region`.
pub fn moutard_checks(pair: &MoutardPair, u1: &ScalarField, region: RegularRegion) -> Result<MoutardChecks> {
    let a = moutard_transform(pair, PathOrder::HorizontalFirst)?;
    let b = moutard_transform(pair, PathOrder::VerticalFirst)?;
    let mask = region.mask(&pair.grid);
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let lap = laplacian(&a)?;
    let e0 = pair.e0();
    let res: Vec<f64> = (0..a.values.len())
        .map(|k| -lap.values[k] + (u1.values[k] - e0) * a.values[k])
        .collect();
    let na = masked_norm(&a.values, &mask);
    Ok(MoutardChecks {
        spacing: pair.grid.h(),
        path_discrepancy: masked_norm(&diff, &mask) / na,
        eigen_residual: masked_norm(&res, &mask) / na,
    })
}

#[derive(Clone, Debug)]
pub struct MatrixCandidate {
    /// `psi~_m = phi d_m (psi/phi)` on the edges.
    pub field: VectorField,
    /// Relative gap between `phi d_m (psi/phi)` at the nodes, averaged onto
    /// the edges, and the edge form, over the interior edges of the region.
    pub discrepancy: f64,
    /// `||q_m^T psi~_m|| / ||psi~||`, the discrete `d_m(phi^2 d_m f)`.
    pub conservation_residual: f64,
}

/// The vector `psi~_m = q_m psi` of a pair, cross-checked against a
/// node-centred difference of `psi/phi`.
pub fn matrix_candidate(pair: &MoutardPair, region: RegularRegion, tol: f64) -> Result<MatrixCandidate> {
    let c = Complex2D::primal(&pair.support, pair.grid)?;
    let g = pair.grid;
    let ratio = ScalarField::new(
        Domain::Plane(g),
        pair.psi
            .values
            .iter()
            .zip(&pair.phi.values)
            .map(|(p, f)| p / f)
            .collect(),
    )?;
    let mut comps = Vec::new();
    let mut num = 0.0;
    let mut den = 0.0;
    for m in 0..2 {
        let edges = c.lattices[1 + m];
        let twisted = c.q[m].apply(&pair.psi.values);
        let df = central_diff(&ratio, m)?;
        let point: Vec<f64> = (0..g.len()).map(|k| pair.phi.values[k] * df.values[k]).collect();
        let emask = RegularRegion {
            boundary_layer: region.boundary_layer.max(1),
            ..region
        }
        .mask(&edges);
        for e in 0..edges.len() {
            if !emask[e] {
                continue;
            }
            let (i, j) = edges.unindex(e);
            let (a, b) = if m == 0 {
                (g.index(i - 1, j), g.index(i, j))
            } else {
                (g.index(i, j - 1), g.index(i, j))
            };
            let avg = 0.5 * (point[a] + point[b]);
            num += (avg - twisted[e]).powi(2);
            den += twisted[e].powi(2);
        }
        comps.push(ScalarField::new(Domain::Plane(edges), twisted)?);
    }
    let discrepancy = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    if discrepancy > tol {
        return Err(Error::InconsistentPair {
            discrepancy,
            tolerance: tol,
        });
    }
    let field = VectorField::new(g, comps.remove(0), comps.remove(0))?;
    let mut div = c.q[0].adjoint().apply(&field.components[0].values);
    c.q[1].adjoint().apply_acc(&field.components[1].values, &mut div);
    let nmask = region.mask(&g);
    let fnorm = (0..2)
        .map(|m| masked_norm(&field.components[m].values, &region.mask(&c.lattices[1 + m])).powi(2))
        .sum::<f64>()
        .sqrt();
    let conservation_residual = if fnorm > 0.0 {
        masked_norm(&div, &nmask) / fnorm
    } else {
        0.0
    };
    Ok(MatrixCandidate {
        field,
        discrepancy,
        conservation_residual,
    })
}

/// Rescales `v` so that its lattice norm over `region` is one.
pub fn normalize_on(v: &VectorField, c: &Complex2D, region: RegularRegion) -> VectorField {
    let n: f64 = (0..2)
        .map(|m| {
            let mask = region.mask(&c.lattices[1 + m]);
            inner_masked(&v.components[m], &v.components[m], Some(&mask))
        })
        .sum();
    v.scale(1.0 / n.sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub region: RegularRegion,
    pub norm: f64,
    /// `(rho + sigma, rho + sigma) / 4 E0^2`
    pub rho_sigma_sum_check: f64,
    /// `(rho_m, sigma_m) / E0^2`
    pub rho_sigma_inner_check: f64,
    /// `||rho - E0 psi~||`
    pub rho_deviation: f64,
    /// `||sigma - E0 psi~||`
    pub sigma_deviation: f64,
    /// `||q_m^T psi~_m||` on the nodes
    pub annihilation_q: f64,
    /// `||p_m^T psi~_m||` on the cells
    pub annihilation_p: f64,
}

/// `rho_l = h_lm psi~_m`, `sigma_l = H_lm psi~_m` and the identities they
/// satisfy when `psi~` is an eigenfield of both blocks at `E0`. All inner
/// products are lattice products restricted to `region`, over which `psi~`
/// must be normalized.
pub fn level_membership_diagnostics(
    psi_tilde: &VectorField,
    c: &Complex2D,
    h: &Hamiltonians2D,
    region: RegularRegion,
) -> Result<MembershipReport> {
    for m in 0..2 {
        if psi_tilde.components[m].domain != Domain::Plane(c.lattices[1 + m]) {
            return Err(Error::InvalidGrid(
                "psi~ components must live on the edge lattices".into(),
            ));
        }
    }
    let masks = [region.mask(&c.lattices[1]), region.mask(&c.lattices[2])];
    let ip = |a: &[Vec<f64>; 2], b: &[Vec<f64>; 2]| -> f64 {
        (0..2)
            .map(|m| {
                let d = Domain::Plane(c.lattices[1 + m]);
                let fa = ScalarField {
                    domain: d,
                    values: a[m].clone(),
                };
                let fb = ScalarField {
                    domain: d,
                    values: b[m].clone(),
                };
                inner_masked(&fa, &fb, Some(&masks[m]))
            })
            .sum()
    };
    let v = [
        psi_tilde.components[0].values.clone(),
        psi_tilde.components[1].values.clone(),
    ];
    let norm = ip(&v, &v);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    let e0 = h.e0;
    let rho = Hamiltonians2D::apply_block(&h.q_block, &v);
    let sigma = Hamiltonians2D::apply_block(&h.p_block, &v);
    let sum = [
        rho[0].iter().zip(&sigma[0]).map(|(a, b)| a + b).collect::<Vec<_>>(),
        rho[1].iter().zip(&sigma[1]).map(|(a, b)| a + b).collect::<Vec<_>>(),
    ];
    let dev = |w: &[Vec<f64>; 2]| {
        let d = [
            w[0].iter().zip(&v[0]).map(|(a, b)| a - e0 * b).collect::<Vec<_>>(),
            w[1].iter().zip(&v[1]).map(|(a, b)| a - e0 * b).collect::<Vec<_>>(),
        ];
        ip(&d, &d).sqrt()
    };
    let mut qt = c.q[0].adjoint().apply(&v[0]);
    c.q[1].adjoint().apply_acc(&v[1], &mut qt);
    let p = c.p();
    let mut pt = p[0].adjoint().apply(&v[0]);
    p[1].adjoint().apply_acc(&v[1], &mut pt);
    let hw = c.lattices[0].h();
    Ok(MembershipReport {
        region,
        norm,
        rho_sigma_sum_check: ip(&sum, &sum) / (4.0 * e0 * e0),
        rho_sigma_inner_check: ip(&rho, &sigma) / (e0 * e0),
        rho_deviation: dev(&rho),
        sigma_deviation: dev(&sigma),
        annihilation_q: hw * masked_norm(&qt, &region.mask(&c.lattices[0])),
        annihilation_p: hw * masked_norm(&pt, &region.mask(&c.lattices[3])),
    })
}
