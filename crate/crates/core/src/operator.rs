//! Linear operators on lattice fields.
//!
//! An [`Operator`] is either an explicit sparse matrix or a lazy sum,
//! product or scaling of other operators. Lazy nodes are applied factor by
//! factor, so products of difference operators never have to be formed.

use std::io::Write;
use std::sync::Arc;

use sprs::{CsMat, TriMat};

use crate::error::Result;

#[derive(Clone)]
enum Node {
    Sparse(Arc<CsMat<f64>>),
    Sum(Vec<Operator>),
    Product(Vec<Operator>),
    Scale(f64, Box<Operator>),
    Transpose(Box<Operator>),
}

#[derive(Clone)]
pub struct Operator {
    rows: usize,
    cols: usize,
    node: Node,
}

impl std::fmt::Debug for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.node {
            Node::Sparse(m) => format!("sparse nnz={}", m.nnz()),
            Node::Sum(t) => format!("sum of {}", t.len()),
            Node::Product(t) => format!("product of {}", t.len()),
            Node::Scale(s, _) => format!("scaled by {s}"),
            Node::Transpose(_) => "transpose".to_string(),
        };
        write!(f, "Operator({}x{}, {})", self.rows, self.cols, kind)
    }
}

impl Operator {
    pub fn from_csr(m: CsMat<f64>) -> Self {
        let m = if m.is_csr() { m } else { m.to_csr() };
        Self {
            rows: m.rows(),
            cols: m.cols(),
            node: Node::Sparse(Arc::new(m)),
        }
    }

    pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut t = TriMat::new((rows, cols));
        for &(r, c, v) in entries {
            t.add_triplet(r, c, v);
        }
        Self::from_csr(t.to_csr())
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let e: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(n, n, &e)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self::from_triplets(rows, cols, &[])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.node, Node::Sparse(_))
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply_acc(x, &mut y);
        y
    }

    /// `y += A x`.
    pub fn apply_acc(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "operand length does not match operator columns");
        assert_eq!(y.len(), self.rows, "output length does not match operator rows");
        match &self.node {
            Node::Sparse(m) => {
                for (r, row) in m.outer_iterator().enumerate() {
                    let mut acc = 0.0;
                    for (c, &v) in row.iter() {
                        acc += v * x[c];
                    }
                    y[r] += acc;
                }
            }
            Node::Sum(terms) => {
                for t in terms {
                    t.apply_acc(x, y);
                }
            }
            Node::Product(factors) => {
                let mut v = x.to_vec();
                for f in factors.iter().rev() {
                    v = f.apply(&v);
                }
                for (yi, vi) in y.iter_mut().zip(v) {
                    *yi += vi;
                }
            }
            Node::Scale(s, inner) => {
                let v = inner.apply(x);
                for (yi, vi) in y.iter_mut().zip(v) {
                    *yi += s * vi;
                }
            }
            Node::Transpose(inner) => inner.apply_transpose_acc(x, y),
        }
    }

    fn apply_transpose_acc(&self, x: &[f64], y: &mut [f64]) {
        match &self.node {
            Node::Sparse(m) => {
                for (r, row) in m.outer_iterator().enumerate() {
                    let xr = x[r];
                    if xr != 0.0 {
                        for (c, &v) in row.iter() {
                            y[c] += v * xr;
                        }
                    }
                }
            }
            _ => self.adjoint().apply_acc(x, y),
        }
    }

    /// Lattice adjoint, which is the plain transpose.
    pub fn adjoint(&self) -> Operator {
        let node = match &self.node {
            Node::Sparse(_) => Node::Transpose(Box::new(self.clone())),
            Node::Transpose(inner) => return (**inner).clone(),
            Node::Sum(t) => Node::Sum(t.iter().map(Operator::adjoint).collect()),
            Node::Product(f) => Node::Product(f.iter().rev().map(Operator::adjoint).collect()),
            Node::Scale(s, inner) => Node::Scale(*s, Box::new(inner.adjoint())),
        };
        Operator {
            rows: self.cols,
            cols: self.rows,
            node,
        }
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &Operator) -> Operator {
        assert_eq!(
            self.cols, rhs.rows,
            "cannot compose {}x{} with {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut factors = Vec::new();
        for op in [self, rhs] {
            match &op.node {
                Node::Product(f) => factors.extend(f.iter().cloned()),
                _ => factors.push(op.clone()),
            }
        }
        Operator {
            rows: self.rows,
            cols: rhs.cols,
            node: Node::Product(factors),
        }
    }

    pub fn add(&self, rhs: &Operator) -> Operator {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "cannot add operators of different shapes"
        );
        let mut terms = Vec::new();
        for op in [self, rhs] {
            match &op.node {
                Node::Sum(t) => terms.extend(t.iter().cloned()),
                _ => terms.push(op.clone()),
            }
        }
        Operator {
            rows: self.rows,
            cols: self.cols,
            node: Node::Sum(terms),
        }
    }

    pub fn sub(&self, rhs: &Operator) -> Operator {
        self.add(&rhs.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator {
            rows: self.rows,
            cols: self.cols,
            node: Node::Scale(s, Box::new(self.clone())),
        }
    }

    /// `self + s I` for square operators.
    pub fn shift(&self, s: f64) -> Operator {
        assert_eq!(self.rows, self.cols, "shift needs a square operator");
        self.add(&Operator::identity(self.rows).scale(s))
    }

    pub fn sum(terms: &[Operator]) -> Operator {
        let mut it = terms.iter();
        let first = it.next().expect("sum of no operators").clone();
        it.fold(first, |acc, t| acc.add(t))
    }

    /// Materializes the operator as a CSR matrix.
    pub fn to_sparse(&self) -> CsMat<f64> {
        match &self.node {
            Node::Sparse(m) => (**m).clone(),
            Node::Transpose(inner) => inner.to_sparse().transpose_view().to_csr(),
            Node::Sum(terms) => {
                let mut acc = terms[0].to_sparse();
                for t in &terms[1..] {
                    acc = &acc + &t.to_sparse();
                }
                acc
            }
            Node::Product(factors) => {
                let mut acc = factors[0].to_sparse();
                for f in &factors[1..] {
                    acc = &acc * &f.to_sparse();
                }
                acc
            }
            Node::Scale(s, inner) => inner.to_sparse().map(|v| s * v),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (&v, (r, c)) in self.to_sparse().iter() {
            d[r][c] += v;
        }
        d
    }

    /// Row, column, value triplets of the explicit matrix, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let m = self.to_sparse();
        let mut out = Vec::with_capacity(m.nnz());
        for (r, row) in m.outer_iterator().enumerate() {
            for (c, &v) in row.iter() {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn write_triplets_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "row,col,value")?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r},{c},{v:.17e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||a - b|| / ||scale||`, guarding a zero denominator.
pub fn relative_difference(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let s = norm2(scale);
    if s == 0.0 {
        d
    } else {
        d / s
    }
}
