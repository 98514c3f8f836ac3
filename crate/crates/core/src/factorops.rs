//! First-order factorization operators `q_l` and `p_l` and the Hamiltonians
//! assembled from them.
//!
//! Each `q_l = phi * D_l * (1/phi)` is a difference operator twisted by the
//! support function. `D_l` maps a lattice to the lattice of midpoints along
//! axis `l`, so the operators form a staggered complex
//!
//! ```text
//!   V0 (nodes) --q--> V1 (x-edges, y-edges) --q--> V2 (cells)
//! ```
//!
//! and the adjoints are exact transposes. `q_l phi = 0` holds away from the
//! lattice boundary, `q_l^T (1/phi) = 0` holds everywhere, and the product
//! of two consecutive charges vanishes identically.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid1D, Grid2D};
use crate::operator::{norm2, Operator};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

/// Leading behaviour `phi ~ r^p` or `phi ~ exp(c r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Growth {
    Power(f64),
    Exponential(f64),
}

impl Growth {
    fn negate(self) -> Self {
        match self {
            Growth::Power(p) => Growth::Power(-p),
            Growth::Exponential(c) => Growth::Exponential(-c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Asymptotics {
    pub infinity: Growth,
    pub origin: Growth,
}

/// Positive solution `phi` of `h0 phi = E0 phi`, given through `ln phi`.
#[derive(Clone)]
pub struct SupportSpec {
    dim: usize,
    e0: f64,
    ln_phi: ScalarFn,
    grad_ln_phi: GradFn,
    laplacian_ln_phi: Option<ScalarFn>,
    phi: Option<ScalarFn>,
    asymptotics: Option<Asymptotics>,
}

impl std::fmt::Debug for SupportSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SupportSpec")
            .field("dim", &self.dim)
            .field("e0", &self.e0)
            .field("asymptotics", &self.asymptotics)
            .finish()
    }
}

impl SupportSpec {
    pub fn new<L, G>(dim: usize, e0: f64, ln_phi: L, grad_ln_phi: G) -> Result<Self>
    where
        L: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !e0.is_finite() {
            return Err(Error::InvalidParameter(format!("E0 must be finite, got {e0}")));
        }
        Ok(Self {
            dim,
            e0,
            ln_phi: Arc::new(ln_phi),
            grad_ln_phi: Arc::new(grad_ln_phi),
            laplacian_ln_phi: None,
            phi: None,
            asymptotics: None,
        })
    }

    /// Support given by `phi` itself; points where `phi <= 0` fail validation.
    pub fn from_phi<P, G>(dim: usize, e0: f64, phi: P, grad_ln_phi: G) -> Result<Self>
    where
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    {
        let phi: ScalarFn = Arc::new(phi);
        let p2 = phi.clone();
        let mut s = Self::new(dim, e0, move |x| p2(x).ln(), grad_ln_phi)?;
        s.phi = Some(phi);
        Ok(s)
    }

    /// `phi = 1`, `E0 = 0`.
    pub fn trivial(dim: usize) -> Result<Self> {
        Ok(Self::new(dim, 0.0, |_| 0.0, |_, _| 0.0)?
            .with_laplacian(|_| 0.0)
            .with_asymptotics(Asymptotics {
                infinity: Growth::Power(0.0),
                origin: Growth::Power(0.0),
            }))
    }

    pub fn with_laplacian<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.laplacian_ln_phi = Some(Arc::new(f));
        self
    }

    pub fn with_asymptotics(mut self, a: Asymptotics) -> Self {
        self.asymptotics = Some(a);
        self
    }

    /// The support `1/phi` with the same `E0`.
    pub fn reciprocal(&self) -> Self {
        let l = self.ln_phi.clone();
        let g = self.grad_ln_phi.clone();
        Self {
            dim: self.dim,
            e0: self.e0,
            ln_phi: Arc::new(move |x| -l(x)),
            grad_ln_phi: Arc::new(move |x, k| -g(x, k)),
            laplacian_ln_phi: self
                .laplacian_ln_phi
                .clone()
                .map(|f| -> ScalarFn { Arc::new(move |x| -f(x)) }),
            phi: self.phi.clone().map(|f| -> ScalarFn { Arc::new(move |x| 1.0 / f(x)) }),
            asymptotics: self.asymptotics.map(|a| Asymptotics {
                infinity: a.infinity.negate(),
                origin: a.origin.negate(),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn asymptotics(&self) -> Option<Asymptotics> {
        self.asymptotics
    }

    pub fn ln_phi(&self, x: &[f64]) -> f64 {
        (self.ln_phi)(x)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.phi {
            Some(p) => p(x),
            None => self.ln_phi(x).exp(),
        }
    }

    pub fn grad_ln_phi(&self, x: &[f64], axis: usize) -> f64 {
        (self.grad_ln_phi)(x, axis)
    }

    pub fn laplacian_ln_phi(&self, x: &[f64]) -> Option<f64> {
        self.laplacian_ln_phi.as_ref().map(|f| f(x))
    }

    /// Checks `phi > 0` and finiteness at every point, reporting the first failure.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let d = domain.dim();
        if d != self.dim {
            return Err(Error::InvalidParameter(format!(
                "support is {}-dimensional but the grid is {}-dimensional",
                self.dim, d
            )));
        }
        for idx in 0..domain.len() {
            let p = &domain.coords(idx)[..d];
            let v = self.phi(p);
            let l = self.ln_phi(p);
            if !(v > 0.0) || !l.is_finite() {
                return Err(Error::NonPositiveSupport {
                    index: idx,
                    point: p.to_vec(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Largest gap between the declared gradient of `ln phi` and a central
    /// difference of `ln phi` with step `h`, over the grid points.
    pub fn gradient_defect(&self, domain: &Domain, h: f64) -> f64 {
        let d = domain.dim();
        let mut worst: f64 = 0.0;
        for idx in 0..domain.len() {
            let c = domain.coords(idx);
            for axis in 0..d {
                let mut a = c;
                let mut b = c;
                a[axis] += h;
                b[axis] -= h;
                let fd = (self.ln_phi(&a[..d]) - self.ln_phi(&b[..d])) / (2.0 * h);
                worst = worst.max((fd - self.grad_ln_phi(&c[..d], axis)).abs());
            }
        }
        worst
    }

    fn ln_phi_on(&self, domain: &Domain) -> Result<Vec<f64>> {
        self.validate(domain)?;
        let d = domain.dim();
        Ok((0..domain.len()).map(|i| self.ln_phi(&domain.coords(i)[..d])).collect())
    }
}

/// Axis layout `(n, stride)` of a flat lattice index.
fn layout(domain: &Domain, axis: usize) -> (usize, usize) {
    match domain {
        Domain::Plane(g) if axis == 0 => (g.x.n, g.y.n),
        Domain::Plane(g) => (g.y.n, 1),
        Domain::Line(g) => (g.n, 1),
        Domain::Radial(g) => (g.n, 1),
    }
}

/// `phi_target * D * (1/phi_source)` along `axis`. With `grow` the target
/// has one more point along the axis and the source is extended by zeros;
/// otherwise the target is the interior midpoints.
fn twisted_difference(
    support: &SupportSpec,
    source: &Domain,
    target: &Domain,
    axis: usize,
    grow: bool,
) -> Result<Operator> {
    let ls = support.ln_phi_on(source)?;
    let lt = support.ln_phi_on(target)?;
    let (n_s, _) = layout(source, axis);
    let (n_t, stride_t) = layout(target, axis);
    let h = source.spacing();
    let mut entries = Vec::with_capacity(2 * target.len());
    for t in 0..target.len() {
        let e = (t / stride_t) % n_t;
        let outer = t / (stride_t * n_t);
        let inner = t % stride_t;
        let src = |i: usize| outer * (stride_t * n_s) + i * stride_t + inner;
        let (plus, minus) = if grow {
            ((e < n_s).then(|| src(e)), (e >= 1).then(|| src(e - 1)))
        } else {
            (Some(src(e + 1)), Some(src(e)))
        };
        if let Some(s) = plus {
            entries.push((t, s, (lt[t] - ls[s]).exp() / h));
        }
        if let Some(s) = minus {
            entries.push((t, s, -(lt[t] - ls[s]).exp() / h));
        }
    }
    Ok(Operator::from_triplets(target.len(), source.len(), &entries))
}

/// One-dimensional factorization `h0 = q^T q + E0` on nodes and
/// `h1 = q q^T + E0` on the `n + 1` edges.
#[derive(Clone, Debug)]
pub struct Complex1D {
    pub nodes: Grid1D,
    pub edges: Grid1D,
    pub q: Operator,
    pub e0: f64,
}

impl Complex1D {
    pub fn new(support: &SupportSpec, nodes: Grid1D) -> Result<Self> {
        let edges = nodes.edges();
        let q = twisted_difference(support, &Domain::Line(nodes), &Domain::Line(edges), 0, true)?;
        Ok(Self {
            nodes,
            edges,
            q,
            e0: support.e0(),
        })
    }

    pub fn hamiltonians(&self) -> Hamiltonians1D {
        Hamiltonians1D {
            e0: self.e0,
            h0: self.q.adjoint().compose(&self.q).shift(self.e0),
            h1: self.q.compose(&self.q.adjoint()).shift(self.e0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hamiltonians1D {
    pub e0: f64,
    pub h0: Operator,
    pub h1: Operator,
}

/// Two-dimensional staggered complex.
///
/// `lattices = [V0, V1a, V1b, V2]` where `V1a` is reached from `V0` by
/// differencing along x and `V1b` along y. The primal complex starts from
/// the nodes of a grid and grows; the dual complex starts from its cells
/// and shrinks, ending on the nodes.
#[derive(Clone, Debug)]
pub struct Complex2D {
    pub base: Grid2D,
    pub lattices: [Grid2D; 4],
    /// `q[l]`: `V0 -> V1` along axis `l`.
    pub q: [Operator; 2],
    /// `q_top[0]` differences `V1b -> V2` along x, `q_top[1]` differences `V1a -> V2` along y.
    pub q_top: [Operator; 2],
    pub e0: f64,
    pub grows: bool,
}

impl Complex2D {
    /// Complex on the nodes of `grid`.
    pub fn primal(support: &SupportSpec, grid: Grid2D) -> Result<Self> {
        let v0 = grid;
        let v1a = grid.edges_along(0);
        let v1b = grid.edges_along(1);
        let v2 = grid.cells();
        Self::build(support, grid, [v0, v1a, v1b, v2], true)
    }

    /// Complex on the cells of `grid`, built from the given support. With
    /// the support `1/phi` its charges are minus the transposes of the
    /// primal charges in reverse degree.
    pub fn dual(support: &SupportSpec, grid: Grid2D) -> Result<Self> {
        let v0 = grid.cells();
        let v1a = v0.midpoints_along(0);
        let v1b = v0.midpoints_along(1);
        Self::build(support, grid, [v0, v1a, v1b, grid], false)
    }

    fn build(support: &SupportSpec, base: Grid2D, l: [Grid2D; 4], grows: bool) -> Result<Self> {
        if support.dim() != 2 {
            return Err(Error::InvalidParameter("2D complex needs a 2D support".into()));
        }
        let d = |g: Grid2D| Domain::Plane(g);
        let q0 = twisted_difference(support, &d(l[0]), &d(l[1]), 0, grows)?;
        let q1 = twisted_difference(support, &d(l[0]), &d(l[2]), 1, grows)?;
        let t0 = twisted_difference(support, &d(l[2]), &d(l[3]), 0, grows)?;
        let t1 = twisted_difference(support, &d(l[1]), &d(l[3]), 1, grows)?;
        Ok(Self {
            base,
            lattices: l,
            q: [q0, q1],
            q_top: [t0, t1],
            e0: support.e0(),
            grows,
        })
    }

    /// `p_1 = q_2^T`, `p_2 = -q_1^T` with the top-degree charges; `p_l: V2 -> V1`.
    pub fn p(&self) -> [Operator; 2] {
        [self.q_top[1].adjoint(), self.q_top[0].adjoint().scale(-1.0)]
    }

    pub fn slot_len(&self, slot: usize) -> usize {
        self.lattices[slot].len()
    }
}

/// `q_l` for a 1D grid (`axis = 0`) or the lower-degree `q_l` of the primal 2D complex.
pub fn build_q(support: &SupportSpec, grid: &Domain, axis: usize) -> Result<Operator> {
    match grid {
        Domain::Line(g) if axis == 0 => Ok(Complex1D::new(support, *g)?.q),
        Domain::Plane(g) if axis < 2 => {
            let c = Complex2D::primal(support, *g)?;
            Ok(c.q[axis].clone())
        }
        Domain::Radial(_) => Err(Error::Unsupported("charges on a radial grid".into())),
        _ => Err(Error::AxisOutOfRange { axis, dim: grid.dim() }),
    }
}

/// `p_l = eps_lk q_k^T` on the primal 2D complex.
pub fn build_p(support: &SupportSpec, grid: Grid2D, l: usize) -> Result<Operator> {
    if l > 1 {
        return Err(Error::AxisOutOfRange { axis: l, dim: 2 });
    }
    let c = Complex2D::primal(support, grid)?;
    Ok(c.p()[l].clone())
}

/// Hamiltonians of a 2D complex. `q_block[l][m]` maps slot `m` to slot `l`,
/// so that `(h psi)_l = h_lm psi_m`.
#[derive(Clone, Debug)]
pub struct Hamiltonians2D {
    pub e0: f64,
    /// `h0 = q_m^T q_m + E0` on `V0`.
    pub h0: Operator,
    /// `h1 = p_m^T p_m + E0` on `V2`.
    pub h1: Operator,
    /// `h_lm = q_l q_m^T + E0 delta_lm`.
    pub q_block: [[Operator; 2]; 2],
    /// `H_lm = p_l p_m^T + E0 delta_lm`.
    pub p_block: [[Operator; 2]; 2],
    /// `h~_lm = h_lm + H_lm - E0 delta_lm`.
    pub matrix: [[Operator; 2]; 2],
}

impl Hamiltonians2D {
    /// Applies a 2x2 block to a two-slot field.
    pub fn apply_block(block: &[[Operator; 2]; 2], v: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let row = |l: usize| {
            let mut out = block[l][0].apply(&v[0]);
            block[l][1].apply_acc(&v[1], &mut out);
            out
        };
        [row(0), row(1)]
    }
}

pub fn assemble_hamiltonians(c: &Complex2D) -> Hamiltonians2D {
    let e0 = c.e0;
    let p = c.p();
    let qt = [c.q[0].adjoint(), c.q[1].adjoint()];
    let pt = [p[0].adjoint(), p[1].adjoint()];
    let h0 = c.q[0]
        .adjoint()
        .compose(&c.q[0])
        .add(&c.q[1].adjoint().compose(&c.q[1]))
        .shift(e0);
    let h1 = pt[0].compose(&p[0]).add(&pt[1].compose(&p[1])).shift(e0);
    let block = |ops: &[Operator; 2], adj: &[Operator; 2], shift: f64| {
        let e = |l: usize, m: usize| {
            let prod = ops[l].compose(&adj[m]);
            if l == m {
                prod.shift(shift)
            } else {
                prod
            }
        };
        [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
    };
    let q_block = block(&c.q, &qt, e0);
    let p_block = block(&p, &pt, e0);
    let matrix = {
        let e = |l: usize, m: usize| {
            let s = c.q[l].compose(&qt[m]).add(&p[l].compose(&pt[m]));
            if l == m {
                s.shift(e0)
            } else {
                s
            }
        };
        [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
    };
    Hamiltonians2D {
        e0,
        h0,
        h1,
        q_block,
        p_block,
        matrix,
    }
}

/// Residuals `||(A - B) chi|| / ||chi||` of the intertwining and product
/// identities, maximized over seeded random test fields.
#[derive(Clone, Debug, Serialize)]
pub struct IntertwiningReport {
    pub samples: usize,
    pub seed: u64,
    /// `q_l h0 = h_lm q_m`
    pub q_h0: f64,
    /// `h0 q_l^T = q_m^T h_ml`
    pub h0_qt: f64,
    /// `p_l h1 = H_lm p_m`
    pub p_h1: f64,
    /// `h1 p_l^T = p_m^T H_ml`
    pub h1_pt: f64,
    /// `h_lk H_km = E0 h~_lm`
    pub h_times_big_h: f64,
    /// `H_lk h_km = E0 h~_lm`
    pub big_h_times_h: f64,
    /// `p_m^T p_m = q_m q_m^T` on `V2`, two evaluation orders
    pub h1_factorization: f64,
}

impl IntertwiningReport {
    pub fn max(&self) -> f64 {
        [
            self.q_h0,
            self.h0_qt,
            self.p_h1,
            self.h1_pt,
            self.h_times_big_h,
            self.big_h_times_h,
            self.h1_factorization,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel(a: &[f64], b: &[f64], x_norm: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
    norm2(&d) / x_norm
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

pub fn intertwining_residual(c: &Complex2D, h: &Hamiltonians2D, samples: usize, seed: u64) -> IntertwiningReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = c.p();
    let mut r = IntertwiningReport {
        samples,
        seed,
        q_h0: 0.0,
        h0_qt: 0.0,
        p_h1: 0.0,
        h1_pt: 0.0,
        h_times_big_h: 0.0,
        big_h_times_h: 0.0,
        h1_factorization: 0.0,
    };
    let two_slot = |rng: &mut ChaCha8Rng| [random_field(rng, c.slot_len(1)), random_field(rng, c.slot_len(2))];
    let norm_pair = |v: &[Vec<f64>; 2]| (norm2(&v[0]).powi(2) + norm2(&v[1]).powi(2)).sqrt();
    for _ in 0..samples {
        let x0 = random_field(&mut rng, c.slot_len(0));
        let n0 = norm2(&x0);
        let h0x = h.h0.apply(&x0);
        let qx = [c.q[0].apply(&x0), c.q[1].apply(&x0)];
        let hqx = Hamiltonians2D::apply_block(&h.q_block, &qx);
        for l in 0..2 {
            r.q_h0 = r.q_h0.max(rel(&c.q[l].apply(&h0x), &hqx[l], n0));
        }

        let x2 = random_field(&mut rng, c.slot_len(3));
        let n2 = norm2(&x2);
        let h1x = h.h1.apply(&x2);
        let px = [p[0].apply(&x2), p[1].apply(&x2)];
        let hpx = Hamiltonians2D::apply_block(&h.p_block, &px);
        for l in 0..2 {
            r.p_h1 = r.p_h1.max(rel(&p[l].apply(&h1x), &hpx[l], n2));
        }
        let mut alt = c.q_top[0].apply(&c.q_top[0].adjoint().apply(&x2));
        add_into(&mut alt, &c.q_top[1].apply(&c.q_top[1].adjoint().apply(&x2)));
        let h1_minus: Vec<f64> = h1x.iter().zip(&x2).map(|(v, x)| v - c.e0 * x).collect();
        r.h1_factorization = r.h1_factorization.max(rel(&h1_minus, &alt, n2));

        let v = two_slot(&mut rng);
        let nv = norm_pair(&v);
        for l in 0..2 {
            // h0 q_l^T v_l versus q_m^T h_ml v_l
            let lhs = h.h0.apply(&c.q[l].adjoint().apply(&v[l]));
            let mut rhs = vec![0.0; c.slot_len(0)];
            for m in 0..2 {
                add_into(&mut rhs, &c.q[m].adjoint().apply(&h.q_block[m][l].apply(&v[l])));
            }
            r.h0_qt = r.h0_qt.max(rel(&lhs, &rhs, nv));
            let lhs = h.h1.apply(&p[l].adjoint().apply(&v[l]));
            let mut rhs = vec![0.0; c.slot_len(3)];
            for m in 0..2 {
                add_into(&mut rhs, &p[m].adjoint().apply(&h.p_block[m][l].apply(&v[l])));
            }
            r.h1_pt = r.h1_pt.max(rel(&lhs, &rhs, nv));
        }
        let e0ht: [Vec<f64>; 2] = {
            let t = Hamiltonians2D::apply_block(&h.matrix, &v);
            [
                t[0].iter().map(|x| c.e0 * x).collect(),
                t[1].iter().map(|x| c.e0 * x).collect(),
            ]
        };
        let hbig = Hamiltonians2D::apply_block(&h.q_block, &Hamiltonians2D::apply_block(&h.p_block, &v));
        let bigh = Hamiltonians2D::apply_block(&h.p_block, &Hamiltonians2D::apply_block(&h.q_block, &v));
        for l in 0..2 {
            r.h_times_big_h = r.h_times_big_h.max(rel(&hbig[l], &e0ht[l], nv));
            r.big_h_times_h = r.big_h_times_h.max(rel(&bigh[l], &e0ht[l], nv));
        }
    }
    r
}

/// `||(q h0 - h1 q) chi|| / ||chi||` for the 1D pair.
pub fn intertwining_residual_1d(c: &Complex1D, samples: usize, seed: u64) -> f64 {
    let h = c.hamiltonians();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = random_field(&mut rng, c.nodes.n);
        let a = c.q.apply(&h.h0.apply(&x));
        let b = h.h1.apply(&c.q.apply(&x));
        worst = worst.max(rel(&a, &b, norm2(&x)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cylinder(b: f64, k: f64) -> SupportSpec {
        let r = |x: &[f64]| (x[0] * x[0] + x[1] * x[1]).sqrt();
        SupportSpec::new(
            2,
            -b * b,
            move |x| b * r(x) - k * r(x).ln(),
            move |x, l| (b - k / r(x)) * x[l] / r(x),
        )
        .unwrap()
    }

    #[test]
    fn free_support_gives_plain_laplacian() {
        let g = Grid1D::new(0.0, 1.0, 6).unwrap();
        let c = Complex1D::new(&SupportSpec::trivial(1).unwrap(), g).unwrap();
        let h0 = c.hamiltonians().h0.to_dense();
        let h2 = g.h * g.h;
        for i in 0..6 {
            assert!((h0[i][i] - 2.0 / h2).abs() < 1e-9);
            if i + 1 < 6 {
                assert!((h0[i][i + 1] + 1.0 / h2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn charge_annihilates_support_in_the_interior() {
        let kappa = 1.3;
        let s = SupportSpec::new(
            1,
            -kappa * kappa,
            move |x| (kappa * x[0]).cosh().ln(),
            move |x, _| kappa * (kappa * x[0]).tanh(),
        )
        .unwrap();
        let g = Grid1D::new(-3.0, 3.0, 61).unwrap();
        let c = Complex1D::new(&s, g).unwrap();
        let phi: Vec<f64> = g.points().iter().map(|x| (kappa * x).cosh()).collect();
        let qphi = c.q.apply(&phi);
        for v in &qphi[1..g.n] {
            assert!(v.abs() < 1e-12 * 10.0);
        }
        let edge_inv: Vec<f64> = g.edges().points().iter().map(|x| 1.0 / (kappa * x).cosh()).collect();
        let qt = c.q.adjoint().apply(&edge_inv);
        assert!(qt.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn charge_near_stationary_point_of_support_is_small() {
        // b = k = 1: grad ln phi vanishes on r = 1, so q applied to a
        // constant field is O(h^2) on the x-edge nearest to (1, 0).
        let s = cylinder(1.0, 1.0);
        let g = Grid2D::centered(3.0, 121).unwrap();
        let c = Complex2D::primal(&s, g).unwrap();
        let one = vec![1.0; g.len()];
        let q1 = c.q[0].apply(&one);
        let ex = g.edges_along(0);
        let near = (0..ex.len())
            .min_by(|&a, &b| {
                let d = |i: usize| {
                    let p = ex.point(i);
                    (p[0] - 1.0).powi(2) + p[1].powi(2)
                };
                d(a).partial_cmp(&d(b)).unwrap()
            })
            .unwrap();
        let far = ex.index(ex.x.n - 5, ex.y.n / 2);
        assert!(q1[near].abs() < 0.05 * q1[far].abs());
    }

    #[test]
    fn nonpositive_support_reports_first_point() {
        let s = SupportSpec::from_phi(1, 0.0, |x| x[0], |x, _| 1.0 / x[0]).unwrap();
        let g = Grid1D::new(-1.0, 1.0, 5).unwrap();
        match s.validate(&Domain::Line(g)) {
            Err(Error::NonPositiveSupport { index, .. }) => assert_eq!(index, 0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Complex1D::new(&s, g).is_err());
    }

    #[test]
    fn consecutive_charges_compose_to_zero() {
        let s = cylinder(1.0, 1.0);
        let c = Complex2D::primal(&s, Grid2D::centered(4.0, 16).unwrap()).unwrap();
        let lhs = c.q_top[1].compose(&c.q[0]).sub(&c.q_top[0].compose(&c.q[1]));
        let max = lhs.to_sparse().iter().fold(0.0_f64, |m, (v, _)| m.max(v.abs()));
        assert!(max < 1e-10, "{max}");
    }

    #[test]
    fn dual_charges_are_minus_primal_transposes() {
        let s = cylinder(1.0, 1.0);
        let g = Grid2D::centered(4.0, 10).unwrap();
        let c = Complex2D::primal(&s, g).unwrap();
        let d = Complex2D::dual(&s.reciprocal(), g).unwrap();
        assert_eq!(d.lattices[0], c.lattices[3]);
        assert_eq!(d.lattices[1], c.lattices[2]);
        assert_eq!(d.lattices[3], c.lattices[0]);
        for (dual, primal) in [(&d.q[0], &c.q_top[0]), (&d.q_top[1], &c.q[1])] {
            let diff = dual.add(&primal.adjoint()).to_sparse();
            let max = diff.iter().fold(0.0_f64, |m, (v, _)| m.max(v.abs()));
            assert!(max < 1e-12, "{max}");
        }
    }

    #[test]
    fn intertwining_holds_to_rounding() {
        let s = cylinder(1.0, 1.0);
        let c = Complex2D::primal(&s, Grid2D::centered(6.0, 24).unwrap()).unwrap();
        let h = assemble_hamiltonians(&c);
        let rep = intertwining_residual(&c, &h, 4, 7);
        assert!(rep.max() < 1e-12, "{rep:?}");
        let c1 = Complex1D::new(&SupportSpec::trivial(1).unwrap(), Grid1D::new(0.0, 1.0, 20).unwrap()).unwrap();
        assert!(intertwining_residual_1d(&c1, 3, 1) < 1e-12);
    }

    #[test]
    fn gradient_defect_is_second_order() {
        let s = cylinder(1.0, 1.0);
        let d = Domain::Plane(Grid2D::square(1.0, 3.0, 9).unwrap());
        let a = s.gradient_defect(&d, 1e-2);
        let b = s.gradient_defect(&d, 5e-3);
        assert!((a / b).log2() > 1.9);
    }
}
