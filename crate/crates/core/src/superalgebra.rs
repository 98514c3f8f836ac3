//! Supercharges and superhamiltonians in one and two dimensions, the dual
//! superhamiltonian, zero modes and the extended-SUSY recursion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cylindrical::{asymptotic_classifier, zero_mode_fields, CylindricalSeed};
use crate::error::{Error, Result};
use crate::factorops::{assemble_hamiltonians, random_field, Complex1D, Complex2D, Hamiltonians2D, SupportSpec};
use crate::grid::{inner, Grid1D, Grid2D};
use crate::moutard2d::RegularRegion;
use crate::operator::{norm2, Operator};

/// Default threshold for exact algebraic identities.
pub const ALGEBRA_THRESHOLD: f64 = 1e-12;

/// Matrix of operator blocks between slotted vector spaces. Missing blocks
/// are zero.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    blocks: Vec<(usize, usize, Operator)>,
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

impl BlockOperator {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        Self {
            row_sizes,
            col_sizes,
            blocks: Vec::new(),
        }
    }

    /// Places `op` at block `(i, j)`, replacing any previous block there.
    pub fn set(&mut self, i: usize, j: usize, op: Operator) -> Result<()> {
        if i >= self.row_sizes.len() || j >= self.col_sizes.len() {
            return Err(Error::InvalidParameter(format!(
                "block ({i}, {j}) outside the block shape"
            )));
        }
        if op.rows() != self.row_sizes[i] || op.cols() != self.col_sizes[j] {
            return Err(Error::LengthMismatch {
                expected: self.row_sizes[i] * self.col_sizes[j],
                got: op.rows() * op.cols(),
            });
        }
        self.blocks.retain(|(a, b, _)| (*a, *b) != (i, j));
        self.blocks.push((i, j, op));
        Ok(())
    }

    pub fn with(mut self, i: usize, j: usize, op: Operator) -> Result<Self> {
        self.set(i, j, op)?;
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row_sizes.len(), self.col_sizes.len())
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.col_sizes
    }

    pub fn rows(&self) -> usize {
        self.row_sizes.iter().sum()
    }

    pub fn cols(&self) -> usize {
        self.col_sizes.iter().sum()
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Operator> {
        self.blocks
            .iter()
            .find(|(a, b, _)| (*a, *b) == (i, j))
            .map(|(_, _, op)| op)
    }

    /// Positions of the nonzero blocks, sorted.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<_> = self.blocks.iter().map(|(i, j, _)| (*i, *j)).collect();
        s.sort_unstable();
        s
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(
            x.len(),
            self.cols(),
            "block operator applied to a vector of the wrong length"
        );
        let ro = offsets(&self.row_sizes);
        let co = offsets(&self.col_sizes);
        let mut y = vec![0.0; self.rows()];
        for (i, j, op) in &self.blocks {
            op.apply_acc(&x[co[*j]..co[j + 1]], &mut y[ro[*i]..ro[i + 1]]);
        }
        y
    }

    /// Blockwise transpose with every block adjointed.
    pub fn adjoint(&self) -> Self {
        Self {
            row_sizes: self.col_sizes.clone(),
            col_sizes: self.row_sizes.clone(),
            blocks: self.blocks.iter().map(|(i, j, op)| (*j, *i, op.adjoint())).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            row_sizes: self.row_sizes.clone(),
            col_sizes: self.col_sizes.clone(),
            blocks: self.blocks.iter().map(|(i, j, op)| (*i, *j, op.scale(s))).collect(),
        }
    }

    pub fn block_diag(parts: &[BlockOperator]) -> Self {
        let mut out = Self::new(Vec::new(), Vec::new());
        for p in parts {
            let (r0, c0) = out.shape();
            out.row_sizes.extend_from_slice(&p.row_sizes);
            out.col_sizes.extend_from_slice(&p.col_sizes);
            out.blocks
                .extend(p.blocks.iter().map(|(i, j, op)| (r0 + i, c0 + j, op.clone())));
        }
        out
    }

    /// `[[0, 0], [b, 0]]` on the slots `cols(b) ++ rows(b)`.
    pub fn lower(b: &BlockOperator) -> Self {
        let c = b.col_sizes.len();
        let mut sizes = b.col_sizes.clone();
        sizes.extend_from_slice(&b.row_sizes);
        Self {
            row_sizes: sizes.clone(),
            col_sizes: sizes,
            blocks: b.blocks.iter().map(|(i, j, op)| (c + i, *j, op.clone())).collect(),
        }
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `max_chi ||lhs(chi) - rhs(chi)|| / ||chi||` over seeded random fields.
pub fn relation_residual<F>(len: usize, samples: usize, seed: u64, f: F) -> f64
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<f64>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let chi = random_field(&mut rng, len);
        let (l, r) = f(&chi);
        worst = worst.max(norm2(&sub(&l, &r)) / norm2(&chi));
    }
    worst
}

/// `{a, b} chi` against `rhs chi` (or zero).
pub fn anticommutator_residual(
    a: &BlockOperator,
    b: &BlockOperator,
    rhs: Option<&BlockOperator>,
    samples: usize,
    seed: u64,
) -> f64 {
    relation_residual(a.cols(), samples, seed, |x| {
        let l = add(&a.apply(&b.apply(x)), &b.apply(&a.apply(x)));
        let r = rhs.map(|h| h.apply(x)).unwrap_or_else(|| vec![0.0; x.len()]);
        (l, r)
    })
}

/// `[a, b] chi` against zero.
pub fn commutator_residual(a: &BlockOperator, b: &BlockOperator, samples: usize, seed: u64) -> f64 {
    relation_residual(a.cols(), samples, seed, |x| {
        (a.apply(&b.apply(x)), b.apply(&a.apply(x)))
    })
}

/// `a a chi` against zero.
pub fn nilpotency_residual(a: &BlockOperator, samples: usize, seed: u64) -> f64 {
    relation_residual(a.cols(), samples, seed, |x| (a.apply(&a.apply(x)), vec![0.0; x.len()]))
}

#[derive(Clone, Debug)]
pub struct SuperModel {
    pub dim: usize,
    pub e0: f64,
    pub q: BlockOperator,
    pub h: BlockOperator,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SuperResiduals {
    pub samples: usize,
    pub seed: u64,
    /// `{Q, Q^+} = H`
    pub anticommutator: f64,
    /// `[Q, H] = 0`
    pub commutator: f64,
    /// `[Q^+, H] = 0`
    pub commutator_adjoint: f64,
    /// `Q^2 = 0`
    pub nilpotency: f64,
}

impl SuperResiduals {
    pub fn max(&self) -> f64 {
        self.anticommutator
            .max(self.commutator)
            .max(self.commutator_adjoint)
            .max(self.nilpotency)
    }
}

impl SuperModel {
    pub fn q_adjoint(&self) -> BlockOperator {
        self.q.adjoint()
    }

    pub fn residuals(&self, samples: usize, seed: u64) -> SuperResiduals {
        let qt = self.q.adjoint();
        SuperResiduals {
            samples,
            seed,
            anticommutator: anticommutator_residual(&self.q, &qt, Some(&self.h), samples, seed),
            commutator: commutator_residual(&self.q, &self.h, samples, seed),
            commutator_adjoint: commutator_residual(&qt, &self.h, samples, seed),
            nilpotency: nilpotency_residual(&self.q, samples, seed),
        }
    }
}

/// `Q = q sigma_+`, `H = diag(h0 - E0, h1 - E0)`.
pub fn build_super_1d(support: &SupportSpec, grid: Grid1D) -> Result<SuperModel> {
    let c = Complex1D::new(support, grid)?;
    let hs = c.hamiltonians();
    let sizes = vec![c.nodes.n, c.edges.n];
    let e0 = hs.e0;
    let q = BlockOperator::new(sizes.clone(), sizes.clone()).with(1, 0, c.q.clone())?;
    let h = BlockOperator::new(sizes.clone(), sizes)
        .with(0, 0, hs.h0.shift(-e0))?
        .with(1, 1, hs.h1.shift(-e0))?;
    Ok(SuperModel { dim: 1, e0, q, h })
}

fn slot_sizes(c: &Complex2D) -> Vec<usize> {
    (0..4).map(|s| c.slot_len(s)).collect()
}

/// `h_lm + H_lm - 2 E0 delta_lm = h~_lm - E0 delta_lm`.
fn middle_block(h: &Hamiltonians2D, l: usize, m: usize) -> Operator {
    if l == m {
        h.matrix[l][m].shift(-h.e0)
    } else {
        h.matrix[l][m].clone()
    }
}

/// The four-slot charge `Q` of a complex and `H = {Q, Q^+}` written as
/// `diag(h0 - E0, h + H - 2 E0, h1 - E0)`.
pub fn super_from_complex(c: &Complex2D) -> Result<SuperModel> {
    let hs = assemble_hamiltonians(c);
    let sizes = slot_sizes(c);
    let q = BlockOperator::new(sizes.clone(), sizes.clone())
        .with(1, 0, c.q[0].clone())?
        .with(2, 0, c.q[1].clone())?
        .with(3, 1, c.q_top[1].clone())?
        .with(3, 2, c.q_top[0].scale(-1.0))?;
    let mut h = BlockOperator::new(sizes.clone(), sizes)
        .with(0, 0, hs.h0.shift(-hs.e0))?
        .with(3, 3, hs.h1.shift(-hs.e0))?;
    for l in 0..2 {
        for m in 0..2 {
            h.set(1 + l, 1 + m, middle_block(&hs, l, m))?;
        }
    }
    Ok(SuperModel {
        dim: 2,
        e0: hs.e0,
        q,
        h,
    })
}

pub fn build_super_2d(support: &SupportSpec, grid: Grid2D) -> Result<SuperModel> {
    super_from_complex(&Complex2D::primal(support, grid)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct DualReport {
    pub samples: usize,
    pub seed: u64,
    /// Dual `(0,0)` block against `h1 - E0` of the primal model.
    pub corner_h1: f64,
    /// Dual `(3,3)` block against `h0 - E0` of the primal model.
    pub corner_h0: f64,
    /// Dual middle block against the primal one slot by slot. `None` when the
    /// slot lengths differ.
    pub middle_index_difference: Option<f64>,
    /// Dual middle block against `R h~ R^T` with `R = [[0, 1], [-1, 0]]`.
    pub middle_rotation_residual: f64,
}

/// The superhamiltonian built on the cells with support `1/phi`, and its
/// relation to the primal one.
pub fn build_dual(support: &SupportSpec, grid: Grid2D, samples: usize, seed: u64) -> Result<(SuperModel, DualReport)> {
    let primal = Complex2D::primal(support, grid)?;
    let dual = Complex2D::dual(&support.reciprocal(), grid)?;
    let hp = assemble_hamiltonians(&primal);
    let hd = assemble_hamiltonians(&dual);
    let model = super_from_complex(&dual)?;
    let diff = |a: &Operator, b: &Operator| relation_residual(a.cols(), samples, seed, |x| (a.apply(x), b.apply(x)));
    let corner_h1 = diff(&hd.h0, &hp.h1);
    let corner_h0 = diff(&hd.h1, &hp.h0);
    for (block, residual) in [("(h1 - E0) corner", corner_h1), ("(h0 - E0) corner", corner_h0)] {
        if !(residual <= ALGEBRA_THRESHOLD) {
            return Err(Error::DualMismatch {
                block: block.into(),
                residual,
            });
        }
    }
    let n = [dual.slot_len(1), dual.slot_len(2)];
    let dual_mid = |x: &[f64]| {
        let v = [x[..n[0]].to_vec(), x[n[0]..].to_vec()];
        let blk = [
            [middle_block(&hd, 0, 0), middle_block(&hd, 0, 1)],
            [middle_block(&hd, 1, 0), middle_block(&hd, 1, 1)],
        ];
        Hamiltonians2D::apply_block(&blk, &v).concat()
    };
    let primal_blk = [
        [middle_block(&hp, 0, 0), middle_block(&hp, 0, 1)],
        [middle_block(&hp, 1, 0), middle_block(&hp, 1, 1)],
    ];
    let middle_index_difference = (dual.slot_len(1) == primal.slot_len(1)).then(|| {
        relation_residual(n[0] + n[1], samples, seed, |x| {
            let v = [x[..n[0]].to_vec(), x[n[0]..].to_vec()];
            (dual_mid(x), Hamiltonians2D::apply_block(&primal_blk, &v).concat())
        })
    });
    let middle_rotation_residual = relation_residual(n[0] + n[1], samples, seed, |x| {
        // R^T chi = (-chi_2, chi_1) on (V1a, V1b); R y = (y_2, -y_1).
        let rt = [x[n[0]..].iter().map(|v| -v).collect::<Vec<_>>(), x[..n[0]].to_vec()];
        let y = Hamiltonians2D::apply_block(&primal_blk, &rt);
        let ry = [y[1].clone(), y[0].iter().map(|v| -v).collect::<Vec<_>>()].concat();
        (dual_mid(x), ry)
    });
    Ok((
        model,
        DualReport {
            samples,
            seed,
            corner_h1,
            corner_h0,
            middle_index_difference,
            middle_rotation_residual,
        },
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroModeReport {
    pub b: f64,
    pub k: f64,
    pub spacing: f64,
    pub region: RegularRegion,
    /// Lattice `||1/phi||^2` over the whole grid and its exact value.
    pub psi1_norm_sq: f64,
    pub psi1_norm_sq_exact: f64,
    /// Lattice `||psi~||^2` over the whole grid and its exact value.
    pub psi2_norm_sq: f64,
    pub psi2_norm_sq_exact: f64,
    /// `||Q Psi_i|| / ||Psi_i||` and `||Q^+ Psi_i|| / ||Psi_i||` on the region.
    pub q_psi1: f64,
    pub qt_psi1: f64,
    pub q_psi2: f64,
    pub qt_psi2: f64,
    pub overlap: f64,
}

/// `Psi_1 = (0, 0, 0, 1/phi)` and `Psi_2 = (0, phi d_1 f, phi d_2 f, 0)` for
/// the cylindrical seed, with the residuals of `Q Psi = Q^+ Psi = 0`.
pub fn zero_modes(seed: &CylindricalSeed, grid: Grid2D, region: RegularRegion) -> Result<ZeroModeReport> {
    let support = seed.support();
    let cls = asymptotic_classifier(&support)?;
    if !cls.inv_phi_normalizable || !cls.psi_tilde_normalizable {
        return Err(Error::NonNormalizable {
            what: "cylindrical zero modes".into(),
            inner: f64::INFINITY,
            outer: f64::INFINITY,
        });
    }
    let c = Complex2D::primal(&support, grid)?;
    let model = super_from_complex(&c)?;
    let fields = zero_mode_fields(seed, grid)?;
    let sizes = slot_sizes(&c);
    let o = offsets(&sizes);
    let mut psi1 = vec![0.0; o[4]];
    psi1[o[3]..].copy_from_slice(&fields.inv_phi.values);
    let mut psi2 = vec![0.0; o[4]];
    psi2[o[1]..o[2]].copy_from_slice(&fields.psi_tilde.components[0].values);
    psi2[o[2]..o[3]].copy_from_slice(&fields.psi_tilde.components[1].values);
    let masks: Vec<Vec<bool>> = c.lattices.iter().map(|g| region.mask(g)).collect();
    let hh = grid.h();
    let masked = |v: &[f64]| -> f64 {
        let mut s = 0.0;
        for slot in 0..4 {
            for (k, x) in v[o[slot]..o[slot + 1]].iter().enumerate() {
                if masks[slot][k] {
                    s += x * x;
                }
            }
        }
        hh * s.sqrt()
    };
    let n1 = inner(&fields.inv_phi, &fields.inv_phi)?;
    let n2: f64 = fields
        .psi_tilde
        .components
        .iter()
        .map(|c| inner(c, c))
        .sum::<Result<f64>>()?;
    let qt = model.q.adjoint();
    let overlap: f64 = psi1.iter().zip(&psi2).map(|(a, b)| a * b).sum::<f64>() * hh * hh;
    Ok(ZeroModeReport {
        b: seed.b,
        k: seed.k,
        spacing: hh,
        region,
        psi1_norm_sq: n1,
        psi1_norm_sq_exact: seed.inv_phi_norm_sq(),
        psi2_norm_sq: n2,
        psi2_norm_sq_exact: seed.psi_tilde_norm_sq(),
        q_psi1: masked(&model.q.apply(&psi1)) / n1.sqrt(),
        qt_psi1: masked(&qt.apply(&psi1)) / n1.sqrt(),
        q_psi2: masked(&model.q.apply(&psi2)) / n2.sqrt(),
        qt_psi2: masked(&qt.apply(&psi2)) / n2.sqrt(),
        overlap,
    })
}

/// Building blocks of the extended algebra: the charges `Q1`, `Q2`, the
/// intertwiner `B` and its adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Atom {
    Q1,
    Q2,
    B,
    Bt,
}

impl Atom {
    fn label(self) -> &'static str {
        match self {
            Atom::Q1 => "Q1",
            Atom::Q2 => "Q2",
            Atom::B => "B",
            Atom::Bt => "B+",
        }
    }
}

/// Square matrix of signed atoms, one entry per four-slot tile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TileMatrix {
    pub size: usize,
    pub entries: Vec<(usize, usize, i8, Atom)>,
}

impl TileMatrix {
    fn single(a: Atom) -> Self {
        Self {
            size: 1,
            entries: vec![(0, 0, 1, a)],
        }
    }

    fn diag(a: &Self, b: &Self) -> Self {
        let mut entries = a.entries.clone();
        entries.extend(b.entries.iter().map(|&(i, j, s, x)| (i + a.size, j + a.size, s, x)));
        Self {
            size: a.size + b.size,
            entries,
        }
        .sorted()
    }

    fn lower(b: &Self) -> Self {
        Self {
            size: 2 * b.size,
            entries: b.entries.iter().map(|&(i, j, s, x)| (i + b.size, j, s, x)).collect(),
        }
        .sorted()
    }

    fn negate(&self) -> Self {
        Self {
            size: self.size,
            entries: self.entries.iter().map(|&(i, j, s, x)| (i, j, -s, x)).collect(),
        }
    }

    /// Adjoint of a matrix of `B` atoms.
    fn b_adjoint(&self) -> Self {
        Self {
            size: self.size,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, s, x)| {
                    let y = match x {
                        Atom::B => Atom::Bt,
                        Atom::Bt => Atom::B,
                        other => panic!("adjoint of {other:?} is not an atom"),
                    };
                    (j, i, s, y)
                })
                .collect(),
        }
        .sorted()
    }

    fn sorted(mut self) -> Self {
        self.entries.sort_by_key(|&(i, j, _, _)| (i, j));
        self
    }

    /// Atom labels along the diagonal, e.g. `"1 2 2 1"` for `Q1`/`Q2` tiles.
    pub fn diagonal_pattern(&self) -> String {
        (0..self.size)
            .map(|t| {
                self.entries
                    .iter()
                    .find(|e| e.0 == t && e.1 == t)
                    .map(|e| match e.3 {
                        Atom::Q1 => "1",
                        Atom::Q2 => "2",
                        Atom::B => "B",
                        Atom::Bt => "B+",
                    })
                    .unwrap_or("0")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// How a charge's partner `Qbar` (with `B Q = -Qbar B`) was formed.
#[derive(Clone, Debug, Serialize)]
pub struct SignConvention {
    pub level: usize,
    pub charge: usize,
    pub form: String,
    pub sign: i8,
    pub residual: f64,
}

/// Symbolic structure at level `N`: tile frames, `B_N`, charges and partners.
#[derive(Clone, Debug, Serialize)]
pub struct ExtendedStructure {
    pub n: usize,
    /// `1` for an `H1` tile, `2` for an `H2` tile.
    pub frames: Vec<u8>,
    pub b: TileMatrix,
    pub charges: Vec<TileMatrix>,
    pub partners: Vec<TileMatrix>,
}

impl ExtendedStructure {
    pub fn h_pattern(&self) -> String {
        self.frames.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")
    }

    /// Scalar block dimension `2^(N+1)`.
    pub fn block_dimension(&self) -> usize {
        4 * self.frames.len()
    }

    /// Degeneracy of every level of `H(N)` counted from the block pattern:
    /// each tile carries the scalar levels twice.
    pub fn degeneracy(&self) -> usize {
        2 * self.frames.len()
    }
}

fn check_level(n: usize) -> Result<()> {
    if !(1..=4).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "extension level N must be in 1..=4, got {n}"
        )));
    }
    Ok(())
}

/// The recursion `B_(N+1) = diag(B_N, B_N^+)`, `Q_i(N+1) = diag(Q_i, Qbar_i)`,
/// `Q_(N+1)(N+1) = [[0, 0], [B_N, 0]]`, with partner signs fixed by `signs`
/// (`(lift, new)` per step).
fn structure_with(n: usize, signs: &[(i8, i8)]) -> ExtendedStructure {
    let mut s = ExtendedStructure {
        n: 1,
        frames: vec![1],
        b: TileMatrix::single(Atom::B),
        charges: vec![TileMatrix::single(Atom::Q1)],
        partners: vec![TileMatrix::single(Atom::Q2)],
    };
    for &(lift, new) in signs.iter().take(n - 1) {
        let bt = s.b.b_adjoint();
        let mut frames = s.frames.clone();
        frames.extend(s.frames.iter().map(|f| 3 - f));
        let mut charges: Vec<TileMatrix> = s
            .charges
            .iter()
            .zip(&s.partners)
            .map(|(c, p)| TileMatrix::diag(c, p))
            .collect();
        let mut partners: Vec<TileMatrix> = s
            .charges
            .iter()
            .zip(&s.partners)
            .map(|(c, p)| {
                let d = TileMatrix::diag(p, c);
                if lift < 0 {
                    d.negate()
                } else {
                    d
                }
            })
            .collect();
        charges.push(TileMatrix::lower(&s.b));
        let nb = TileMatrix::lower(&bt);
        partners.push(if new < 0 { nb.negate() } else { nb });
        s = ExtendedStructure {
            n: s.n + 1,
            frames,
            b: TileMatrix::diag(&s.b, &bt),
            charges,
            partners,
        };
    }
    s
}

/// Symbolic structure with the partner signs `Qbar = +diag(Qbar, Q)` for
/// lifted charges and `Qbar = -[[0, 0], [B^+, 0]]` for new ones.
pub fn extended_structure(n: usize) -> Result<ExtendedStructure> {
    check_level(n)?;
    Ok(structure_with(n, &[(1, -1); 3]))
}

/// Operator realizations of the atoms on a complex.
struct Atoms {
    frame_sizes: [Vec<usize>; 2],
    q1: BlockOperator,
    q2: BlockOperator,
    b: BlockOperator,
    bt: BlockOperator,
    h1: BlockOperator,
    h2: BlockOperator,
}

impl Atoms {
    fn new(c: &Complex2D) -> Result<Self> {
        let model = super_from_complex(c)?;
        let f1 = slot_sizes(c);
        let f2 = vec![f1[3], f1[1], f1[2], f1[0]];
        let [q0, q1] = c.q.clone();
        let [t0, t1] = c.q_top.clone();
        let neg = |o: &Operator| o.scale(-1.0);
        let q2 = BlockOperator::new(f2.clone(), f2.clone())
            .with(1, 0, neg(&t1.adjoint()))?
            .with(2, 0, t0.adjoint())?
            .with(3, 1, neg(&q0.adjoint()))?
            .with(3, 2, neg(&q1.adjoint()))?;
        let b = BlockOperator::new(f2.clone(), f1.clone())
            .with(0, 1, t1.clone())?
            .with(0, 2, neg(&t0))?
            .with(1, 0, neg(&q0))?
            .with(1, 3, t1.adjoint())?
            .with(2, 0, neg(&q1))?
            .with(2, 3, neg(&t0.adjoint()))?
            .with(3, 1, neg(&q0.adjoint()))?
            .with(3, 2, neg(&q1.adjoint()))?;
        let h1 = model.h.clone();
        let mut h2 = BlockOperator::new(f2.clone(), f2.clone());
        for (i, j, op) in &h1.blocks {
            let map = |s: usize| match s {
                0 => 3,
                3 => 0,
                other => other,
            };
            h2.set(map(*i), map(*j), op.clone())?;
        }
        Ok(Self {
            frame_sizes: [f1, f2],
            q1: model.q,
            q2,
            bt: b.adjoint(),
            b,
            h1,
            h2,
        })
    }

    fn atom(&self, a: Atom) -> &BlockOperator {
        match a {
            Atom::Q1 => &self.q1,
            Atom::Q2 => &self.q2,
            Atom::B => &self.b,
            Atom::Bt => &self.bt,
        }
    }

    fn sizes(&self, frames: &[u8]) -> Vec<usize> {
        frames
            .iter()
            .flat_map(|f| self.frame_sizes[(*f - 1) as usize].clone())
            .collect()
    }

    fn realize(&self, t: &TileMatrix, row_frames: &[u8], col_frames: &[u8]) -> Result<BlockOperator> {
        let mut out = BlockOperator::new(self.sizes(row_frames), self.sizes(col_frames));
        for &(ti, tj, s, a) in &t.entries {
            for (i, j, op) in &self.atom(a).blocks {
                let op = if s < 0 { op.scale(-1.0) } else { op.clone() };
                out.set(4 * ti + i, 4 * tj + j, op)?;
            }
        }
        Ok(out)
    }

    fn hamiltonian(&self, frames: &[u8]) -> BlockOperator {
        let parts: Vec<BlockOperator> = frames
            .iter()
            .map(|f| if *f == 1 { self.h1.clone() } else { self.h2.clone() })
            .collect();
        BlockOperator::block_diag(&parts)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RelationResidual {
    pub relation: String,
    pub level: usize,
    pub residual: f64,
}

/// Comparison of the nonzero tiles of `Q_2(4), Q_3(4), Q_4(4)` with the
/// printed lower-triangular 8x8 display.
#[derive(Clone, Debug, Serialize)]
pub struct DisplayComparison {
    pub union: Vec<String>,
    pub expected: Vec<String>,
    pub matches: bool,
    pub overlapping_tiles: usize,
}

/// The 8x8 display of the higher charges at `N = 4`, as `(row, col, sign, atom)`.
pub fn printed_higher_charges() -> Vec<(usize, usize, i8, Atom)> {
    use Atom::{Bt, B};
    vec![
        (1, 0, 1, B),
        (2, 0, 1, B),
        (3, 1, 1, Bt),
        (3, 2, -1, Bt),
        (4, 0, 1, B),
        (5, 1, 1, Bt),
        (5, 4, -1, Bt),
        (6, 2, 1, Bt),
        (6, 4, -1, Bt),
        (7, 3, 1, B),
        (7, 5, -1, B),
        (7, 6, 1, B),
    ]
}

fn entry_label(&(i, j, s, a): &(usize, usize, i8, Atom)) -> String {
    format!("({i},{j}) {}{}", if s < 0 { "-" } else { "" }, a.label())
}

pub fn compare_with_display(s: &ExtendedStructure) -> Option<DisplayComparison> {
    if s.n != 4 {
        return None;
    }
    let mut all: Vec<(usize, usize, i8, Atom)> =
        s.charges[1..].iter().flat_map(|c| c.entries.iter().copied()).collect();
    all.sort_by_key(|e| (e.0, e.1));
    let before = all.len();
    let mut union = all.clone();
    union.dedup_by_key(|e| (e.0, e.1));
    let expected = printed_higher_charges();
    Some(DisplayComparison {
        matches: union == expected,
        overlapping_tiles: before - union.len(),
        union: union.iter().map(entry_label).collect(),
        expected: expected.iter().map(entry_label).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtendedReport {
    pub n: usize,
    pub grid_points: [usize; 2],
    pub samples: usize,
    pub seed: u64,
    pub threshold: f64,
    pub block_dimension: usize,
    pub degeneracy: usize,
    pub h_pattern: String,
    pub q1_pattern: String,
    pub relations: Vec<RelationResidual>,
    pub max_residual: f64,
    pub sign_conventions: Vec<SignConvention>,
    pub display: Option<DisplayComparison>,
}

impl ExtendedReport {
    /// First relation above the threshold.
    pub fn violation(&self) -> Option<&RelationResidual> {
        self.relations.iter().find(|r| !(r.residual <= self.threshold))
    }
}

#[derive(Clone, Debug)]
pub struct ExtendedModel {
    pub structure: ExtendedStructure,
    pub h: BlockOperator,
    pub charges: Vec<BlockOperator>,
    pub report: ExtendedReport,
}

/// Assembles `H(N)` and `Q_i(N)` and measures every relation; partner signs
/// are chosen by residual among `+-diag(Qbar, Q)` and `+-[[0,0],[B^+,0]]`.
pub fn assemble_extended(
    support: &SupportSpec,
    grid: Grid2D,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<ExtendedModel> {
    check_level(n)?;
    let c = Complex2D::primal(support, grid)?;
    let atoms = Atoms::new(&c)?;
    let mut relations = Vec::new();
    let mut push = |relation: String, level: usize, residual: f64| {
        relations.push(RelationResidual {
            relation,
            level,
            residual,
        })
    };

    let (q1, q2, b, bt) = (&atoms.q1, &atoms.q2, &atoms.b, &atoms.bt);
    let (h1, h2) = (&atoms.h1, &atoms.h2);
    let q1t = q1.adjoint();
    let q2t = q2.adjoint();
    let len = b.cols();
    let pair = |f: &dyn Fn(&[f64]) -> (Vec<f64>, Vec<f64>)| relation_residual(len, samples, seed, f);
    push(
        "Q_2 B + B Q_1 = 0".into(),
        1,
        pair(&|x| {
            (
                q2.apply(&b.apply(x)),
                b.apply(&q1.apply(x)).iter().map(|v| -v).collect(),
            )
        }),
    );
    push(
        "Q_2^+ B + B Q_1^+ = 0".into(),
        1,
        pair(&|x| {
            (
                q2t.apply(&b.apply(x)),
                b.apply(&q1t.apply(x)).iter().map(|v| -v).collect(),
            )
        }),
    );
    push(
        "B H_1 - H_2 B = 0".into(),
        1,
        pair(&|x| (b.apply(&h1.apply(x)), h2.apply(&b.apply(x)))),
    );
    push("H_1 = B^+ B".into(), 1, pair(&|x| (bt.apply(&b.apply(x)), h1.apply(x))));
    push("H_2 = B B^+".into(), 1, pair(&|x| (b.apply(&bt.apply(x)), h2.apply(x))));
    push(
        "H_1 = {Q_1, Q_1^+}".into(),
        1,
        anticommutator_residual(q1, &q1t, Some(h1), samples, seed),
    );
    push(
        "H_2 = {Q_2, Q_2^+}".into(),
        1,
        anticommutator_residual(q2, &q2t, Some(h2), samples, seed),
    );

    // Resolve the partner signs level by level.
    let mut signs: Vec<(i8, i8)> = Vec::new();
    let mut conventions = Vec::new();
    for level in 1..n {
        let mut chosen = (1, 1);
        for which in 0..2 {
            let mut best: Option<(i8, f64)> = None;
            for cand in [1i8, -1] {
                let mut trial = signs.clone();
                let mut t = chosen;
                if which == 0 {
                    t.0 = cand;
                } else {
                    t.1 = cand;
                }
                trial.push(t);
                let s = structure_with(level + 1, &trial);
                let bn = atoms.realize(&s.b, &s.frames.iter().map(|f| 3 - f).collect::<Vec<_>>(), &s.frames)?;
                let worst = if which == 0 {
                    (0..level)
                        .map(|i| partner_residual(&atoms, &s, &bn, i, samples, seed))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max)
                } else {
                    partner_residual(&atoms, &s, &bn, level, samples, seed)?
                };
                if best.is_none_or(|(_, r)| worst < r) {
                    best = Some((cand, worst));
                }
            }
            let (sign, residual) = best.unwrap();
            if which == 0 {
                chosen.0 = sign;
            } else {
                chosen.1 = sign;
            }
            conventions.push(SignConvention {
                level: level + 1,
                charge: if which == 0 { 0 } else { level + 1 },
                form: if which == 0 {
                    "Qbar_i(N+1) = s diag(Qbar_i, Q_i)".into()
                } else {
                    "Qbar_(N+1)(N+1) = s [[0, 0], [B_N^+, 0]]".into()
                },
                sign,
                residual,
            });
        }
        signs.push(chosen);
    }

    let s = structure_with(n, &signs);
    let h = atoms.hamiltonian(&s.frames);
    let charges: Vec<BlockOperator> = s
        .charges
        .iter()
        .map(|t| atoms.realize(t, &s.frames, &s.frames))
        .collect::<Result<_>>()?;
    let adjoints: Vec<BlockOperator> = charges.iter().map(|q| q.adjoint()).collect();
    for i in 0..n {
        for k in 0..n {
            let rhs = (i == k).then_some(&h);
            let rel = if i == k {
                format!("{{Q_{0},Q_{0}^+}} = H at N={n}", i + 1)
            } else {
                format!("{{Q_{},Q_{}^+}} at N={n}", i + 1, k + 1)
            };
            push(
                rel,
                n,
                anticommutator_residual(&charges[i], &adjoints[k], rhs, samples, seed),
            );
            if k >= i {
                let rel = if i == k {
                    format!("Q_{}^2 at N={n}", i + 1)
                } else {
                    format!("{{Q_{},Q_{}}} at N={n}", i + 1, k + 1)
                };
                push(
                    rel,
                    n,
                    anticommutator_residual(&charges[i], &charges[k], None, samples, seed),
                );
            }
        }
        push(
            format!("[Q_{},H] at N={n}", i + 1),
            n,
            commutator_residual(&charges[i], &h, samples, seed),
        );
    }
    let max_residual = relations.iter().map(|r| r.residual).fold(0.0, f64::max);
    let report = ExtendedReport {
        n,
        grid_points: grid.dims(),
        samples,
        seed,
        threshold: ALGEBRA_THRESHOLD,
        block_dimension: s.block_dimension(),
        degeneracy: s.degeneracy(),
        h_pattern: format!("H: {}", s.h_pattern()),
        q1_pattern: format!("Q1: {}", s.charges[0].diagonal_pattern()),
        relations,
        max_residual,
        sign_conventions: conventions,
        display: compare_with_display(&s),
    };
    Ok(ExtendedModel {
        structure: s,
        h,
        charges,
        report,
    })
}

/// `B_N Q_i + Qbar_i B_N` on the structure one level up, where `B_N` is
/// the lower block of the new charge.
fn partner_residual(
    atoms: &Atoms,
    s: &ExtendedStructure,
    bn: &BlockOperator,
    i: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let swapped: Vec<u8> = s.frames.iter().map(|f| 3 - f).collect();
    let q = atoms.realize(&s.charges[i], &s.frames, &s.frames)?;
    let qbar = atoms.realize(&s.partners[i], &swapped, &swapped)?;
    Ok(relation_residual(bn.cols(), samples, seed, |x| {
        let l = bn.apply(&q.apply(x));
        let r: Vec<f64> = qbar.apply(&bn.apply(x)).iter().map(|v| -v).collect();
        (l, r)
    }))
}

/// [`assemble_extended`] that rejects the construction at the first relation
/// above the threshold.
pub fn build_extended(
    support: &SupportSpec,
    grid: Grid2D,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<ExtendedModel> {
    let m = assemble_extended(support, grid, n, samples, seed)?;
    if let Some(v) = m.report.violation() {
        return Err(Error::AlgebraViolation {
            relation: v.relation.clone(),
            level: v.level,
            residual: v.residual,
            threshold: m.report.threshold,
        });
    }
    Ok(m)
}
