//! Uniform grids, lattice fields and elementary difference stencils.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Operator;

/// Uniform 1D grid of `n` points `x_min + i h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!("empty interval [{x_min}, {x_max}]")));
        }
        Ok(Self {
            x_min,
            h: (x_max - x_min) / (n - 1) as f64,
            n,
        })
    }

    pub fn with_spacing(x_min: f64, h: f64, n: usize) -> Result<Self> {
        if n < 1 || !(h > 0.0) || !h.is_finite() || !x_min.is_finite() {
            return Err(Error::InvalidGrid(format!("bad spacing h={h} or point count n={n}")));
        }
        Ok(Self { x_min, h, n })
    }

    pub fn x_max(&self) -> f64 {
        self.point(self.n - 1)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// The `n + 1` midpoints around the nodes, including one half-step outside each end.
    pub fn edges(&self) -> Grid1D {
        Grid1D {
            x_min: self.x_min - 0.5 * self.h,
            h: self.h,
            n: self.n + 1,
        }
    }

    /// The `n - 1` midpoints strictly between neighbouring nodes.
    pub fn midpoints(&self) -> Grid1D {
        Grid1D {
            x_min: self.x_min + 0.5 * self.h,
            h: self.h,
            n: self.n - 1,
        }
    }

    /// Grid of the same spacing covering `[-half_width, half_width]`, shifted by
    /// a quarter step so that neither nodes nor midpoints fall on the origin.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        let g = Grid1D::new(-half_width, half_width, n)?;
        Ok(Grid1D {
            x_min: g.x_min + 0.25 * g.h,
            ..g
        })
    }
}

/// Radial grid on `[r_min, r_max]`, `r_min > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_min: f64,
    pub h: f64,
    pub n: usize,
}

impl RadialGrid {
    pub fn new(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0) {
            return Err(Error::InvalidGrid(format!("r_min must be positive, got {r_min}")));
        }
        let g = Grid1D::new(r_min, r_max, n)?;
        Ok(Self { r_min, h: g.h, n })
    }

    /// Points `r_i = (i + 1/2) h`, `i = 0..n`, with `r_{n-1} = r_max`.
    pub fn half_offset(r_max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::InvalidGrid(format!("bad radial grid r_max={r_max}, n={n}")));
        }
        let h = r_max / (n as f64 - 0.5);
        Ok(Self { r_min: 0.5 * h, h, n })
    }

    pub fn r_max(&self) -> f64 {
        self.point(self.n - 1)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

/// Tensor-product 2D grid. Point `(i, j)` has flat index `i * y.n + j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Grid1D,
    pub y: Grid1D,
}

impl Grid2D {
    pub fn new(x: Grid1D, y: Grid1D) -> Result<Self> {
        if (x.h - y.h).abs() > 1e-12 * x.h.max(y.h) {
            return Err(Error::InvalidGrid(format!("spacings differ: hx={}, hy={}", x.h, y.h)));
        }
        Ok(Self { x, y })
    }

    pub fn square(min: f64, max: f64, n: usize) -> Result<Self> {
        let g = Grid1D::new(min, max, n)?;
        Self::new(g, g)
    }

    /// Square grid over `[-half_width, half_width]^2`, offset by a quarter step.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        let g = Grid1D::centered(half_width, n)?;
        Self::new(g, g)
    }

    pub fn h(&self) -> f64 {
        self.x.h
    }

    pub fn len(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.y.n + j
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize) {
        (idx / self.y.n, idx % self.y.n)
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.unindex(idx);
        [self.x.point(i), self.y.point(j)]
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.x.n, self.y.n]
    }

    fn axis_grid(&self, axis: usize) -> Grid1D {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }

    fn with_axis(&self, axis: usize, g: Grid1D) -> Grid2D {
        let mut out = *self;
        if axis == 0 {
            out.x = g;
        } else {
            out.y = g;
        }
        out
    }

    /// Lattice of midpoints grown along `axis` (see [`Grid1D::edges`]).
    pub fn edges_along(&self, axis: usize) -> Grid2D {
        self.with_axis(axis, self.axis_grid(axis).edges())
    }

    /// Lattice of interior midpoints along `axis` (see [`Grid1D::midpoints`]).
    pub fn midpoints_along(&self, axis: usize) -> Grid2D {
        self.with_axis(axis, self.axis_grid(axis).midpoints())
    }

    /// Cell-centre lattice, grown along both axes.
    pub fn cells(&self) -> Grid2D {
        self.edges_along(0).edges_along(1)
    }
}

/// Point set a field lives on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Line(Grid1D),
    Radial(RadialGrid),
    Plane(Grid2D),
}

impl Domain {
    pub fn len(&self) -> usize {
        match self {
            Domain::Line(g) => g.n,
            Domain::Radial(g) => g.n,
            Domain::Plane(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Plane(_) => 2,
            _ => 1,
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Domain::Line(g) => g.h,
            Domain::Radial(g) => g.h,
            Domain::Plane(g) => g.h(),
        }
    }

    /// Coordinates of point `idx`; the second entry is unused in 1D.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        match self {
            Domain::Line(g) => [g.point(idx), 0.0],
            Domain::Radial(g) => [g.point(idx), 0.0],
            Domain::Plane(g) => g.point(idx),
        }
    }

    pub fn plane(&self) -> Result<&Grid2D> {
        match self {
            Domain::Plane(g) => Ok(g),
            _ => Err(Error::Unsupported("operation needs a 2D grid".into())),
        }
    }

    /// `(points along axis, stride)` for the flat index layout.
    fn axis_layout(&self, axis: usize) -> Result<(usize, usize)> {
        match (self, axis) {
            (Domain::Line(g), 0) => Ok((g.n, 1)),
            (Domain::Radial(g), 0) => Ok((g.n, 1)),
            (Domain::Plane(g), 0) => Ok((g.x.n, g.y.n)),
            (Domain::Plane(g), 1) => Ok((g.y.n, 1)),
            _ => Err(Error::AxisOutOfRange { axis, dim: self.dim() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::LengthMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Domain) -> Self {
        Self {
            domain,
            values: vec![0.0; domain.len()],
        }
    }

    /// Samples `f` at every point. The closure receives `[x]` or `[x, y]`.
    pub fn sample<F>(domain: Domain, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let d = domain.dim();
        let values: Vec<f64> = (0..domain.len())
            .into_par_iter()
            .map(|i| f(&domain.coords(i)[..d]))
            .collect();
        Self::new(domain, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        inner(self, self).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        match self.domain {
            Domain::Line(_) => wr.write_record(["x", "value"]).map_err(csv_err)?,
            Domain::Radial(_) => wr.write_record(["r", "value"]).map_err(csv_err)?,
            Domain::Plane(_) => wr.write_record(["x", "y", "value"]).map_err(csv_err)?,
        }
        for (i, v) in self.values.iter().enumerate() {
            let c = self.domain.coords(i);
            let rec: Vec<String> = match self.domain {
                Domain::Plane(_) => vec![fmt(c[0]), fmt(c[1]), fmt(*v)],
                _ => vec![fmt(c[0]), fmt(*v)],
            };
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a two-column (`x,value`) or three-column (`x,y,value`) table
    /// written in grid order and reconstructs the grid from the coordinates.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
        let ncol = headers.len();
        if ncol != 2 && ncol != 3 {
            return Err(Error::Csv(format!("expected 2 or 3 columns, found {ncol}")));
        }
        let radial = ncol == 2 && headers.get(0) == Some("r");
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Csv(format!("row {}: {e}", line + 1)))?;
            if vals.len() != ncol {
                return Err(Error::Csv(format!("row {} has {} fields", line + 1, vals.len())));
            }
            rows.push(vals);
        }
        if rows.len() < 2 {
            return Err(Error::Csv("need at least two rows".into()));
        }
        if ncol == 2 {
            let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let g = uniform_axis(&xs)?;
            let domain = if radial {
                Domain::Radial(RadialGrid::new(g.x_min, g.x_max(), g.n)?)
            } else {
                Domain::Line(g)
            };
            return ScalarField::new(domain, rows.iter().map(|r| r[1]).collect());
        }
        let ny = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
        if ny < 2 || !rows.len().is_multiple_of(ny) {
            return Err(Error::Csv("rows do not form a tensor grid".into()));
        }
        let nx = rows.len() / ny;
        let xs: Vec<f64> = (0..nx).map(|i| rows[i * ny][0]).collect();
        let ys: Vec<f64> = (0..ny).map(|j| rows[j][1]).collect();
        let grid = Grid2D::new(uniform_axis(&xs)?, uniform_axis(&ys)?)?;
        for (k, r) in rows.iter().enumerate() {
            let p = grid.point(k);
            if (r[0] - p[0]).abs() > 1e-9 * grid.h() || (r[1] - p[1]).abs() > 1e-9 * grid.h() {
                return Err(Error::Csv(format!("row {} is out of grid order", k + 1)));
            }
        }
        ScalarField::new(Domain::Plane(grid), rows.iter().map(|r| r[2]).collect())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn uniform_axis(xs: &[f64]) -> Result<Grid1D> {
    let n = xs.len();
    let g = Grid1D::new(xs[0], xs[n - 1], n)?;
    for (i, &x) in xs.iter().enumerate() {
        if (x - g.point(i)).abs() > 1e-9 * g.h {
            return Err(Error::Csv(format!("coordinate {x} breaks uniform spacing")));
        }
    }
    Ok(g)
}

/// Two-component field on a 2D grid. Each component may sit on its own
/// lattice; for the staggered complex the first lives on the x-edges and
/// the second on the y-edges of `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub base: Grid2D,
    pub components: [ScalarField; 2],
}

impl VectorField {
    pub fn new(base: Grid2D, c0: ScalarField, c1: ScalarField) -> Result<Self> {
        c0.domain.plane()?;
        c1.domain.plane()?;
        Ok(Self {
            base,
            components: [c0, c1],
        })
    }

    /// Components on the x-edge and y-edge lattices of `base`.
    pub fn on_edges<F>(base: Grid2D, f: F) -> Result<Self>
    where
        F: Fn(usize, &[f64]) -> f64 + Sync,
    {
        let c0 = ScalarField::sample(Domain::Plane(base.edges_along(0)), |p| f(0, p))?;
        let c1 = ScalarField::sample(Domain::Plane(base.edges_along(1)), |p| f(1, p))?;
        Self::new(base, c0, c1)
    }

    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(|c| inner(c, c).unwrap()).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            base: self.base,
            components: [self.components[0].map(|v| s * v), self.components[1].map(|v| s * v)],
        }
    }
}

/// Forward difference `(f_{i+1} - f_i)/h`; the last row along the axis uses
/// the backward difference. Truncation error is O(h).
pub fn forward_diff(field: &ScalarField, axis: usize) -> Result<ScalarField> {
    let op = forward_diff_operator(&field.domain, axis)?;
    ScalarField::new(field.domain, op.apply(&field.values))
}

/// Matrix of [`forward_diff`].
pub fn forward_diff_operator(domain: &Domain, axis: usize) -> Result<Operator> {
    one_sided_operator(domain, axis, true)
}

/// Backward difference `(f_i - f_{i-1})/h`; the first row uses the forward difference.
pub fn backward_diff_operator(domain: &Domain, axis: usize) -> Result<Operator> {
    one_sided_operator(domain, axis, false)
}

fn one_sided_operator(domain: &Domain, axis: usize, forward: bool) -> Result<Operator> {
    let (n, stride) = domain.axis_layout(axis)?;
    let h = domain.spacing();
    let len = domain.len();
    let mut e = Vec::with_capacity(2 * len);
    for idx in 0..len {
        let i = (idx / stride) % n;
        let (a, b) = if forward {
            if i + 1 < n {
                (idx, idx + stride)
            } else {
                (idx - stride, idx)
            }
        } else if i > 0 {
            (idx - stride, idx)
        } else {
            (idx, idx + stride)
        };
        e.push((idx, a, -1.0 / h));
        e.push((idx, b, 1.0 / h));
    }
    Ok(Operator::from_triplets(len, len, &e))
}

/// Second-order central difference, with second-order one-sided stencils on
/// the two boundary rows along the axis.
pub fn central_diff(field: &ScalarField, axis: usize) -> Result<ScalarField> {
    let (n, stride) = field.domain.axis_layout(axis)?;
    if n < 3 {
        return Err(Error::InvalidGrid("central difference needs 3 points per axis".into()));
    }
    let h = field.domain.spacing();
    let f = &field.values;
    let out = (0..f.len())
        .map(|idx| {
            let i = (idx / stride) % n;
            if i == 0 {
                (-3.0 * f[idx] + 4.0 * f[idx + stride] - f[idx + 2 * stride]) / (2.0 * h)
            } else if i + 1 == n {
                (3.0 * f[idx] - 4.0 * f[idx - stride] + f[idx - 2 * stride]) / (2.0 * h)
            } else {
                (f[idx + stride] - f[idx - stride]) / (2.0 * h)
            }
        })
        .collect();
    ScalarField::new(field.domain, out)
}

/// Second derivative along an axis, three-point in the interior and
/// four-point one-sided on the boundary rows.
pub fn second_diff(field: &ScalarField, axis: usize) -> Result<ScalarField> {
    let (n, stride) = field.domain.axis_layout(axis)?;
    if n < 4 {
        return Err(Error::InvalidGrid("second difference needs 4 points per axis".into()));
    }
    let h2 = field.domain.spacing().powi(2);
    let f = &field.values;
    let s = stride;
    let out = (0..f.len())
        .map(|idx| {
            let i = (idx / s) % n;
            if i == 0 {
                (2.0 * f[idx] - 5.0 * f[idx + s] + 4.0 * f[idx + 2 * s] - f[idx + 3 * s]) / h2
            } else if i + 1 == n {
                (2.0 * f[idx] - 5.0 * f[idx - s] + 4.0 * f[idx - 2 * s] - f[idx - 3 * s]) / h2
            } else {
                (f[idx + s] - 2.0 * f[idx] + f[idx - s]) / h2
            }
        })
        .collect();
    ScalarField::new(field.domain, out)
}

/// Five-point Laplacian (three-point in 1D).
pub fn laplacian(field: &ScalarField) -> Result<ScalarField> {
    let mut out = second_diff(field, 0)?;
    if field.domain.dim() == 2 {
        let yy = second_diff(field, 1)?;
        for (o, v) in out.values.iter_mut().zip(yy.values) {
            *o += v;
        }
    }
    Ok(out)
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// Trapezoid-rule integral over the grid. Radial fields are integrated with
/// the 2D measure `2 pi r dr` on `[r_min, r_max]`.
pub fn quadrature(field: &ScalarField) -> f64 {
    let f = &field.values;
    match field.domain {
        Domain::Line(g) => dot_w(f, &trapezoid_weights(g.n, g.h)),
        Domain::Radial(g) => {
            let w = trapezoid_weights(g.n, g.h);
            (0..g.n)
                .map(|i| w[i] * 2.0 * std::f64::consts::PI * g.point(i) * f[i])
                .sum()
        }
        Domain::Plane(g) => {
            let wx = trapezoid_weights(g.x.n, g.h());
            let wy = trapezoid_weights(g.y.n, g.h());
            (0..f.len())
                .map(|k| {
                    let (i, j) = g.unindex(k);
                    wx[i] * wy[j] * f[k]
                })
                .sum()
        }
    }
}

fn dot_w(f: &[f64], w: &[f64]) -> f64 {
    f.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Lattice inner product `h^d sum f g` (radial: `sum f g 2 pi r h`). With
/// this product the adjoint of every lattice operator is its transpose.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.domain != b.domain {
        return Err(Error::InvalidGrid("inner product of fields on different grids".into()));
    }
    Ok(inner_masked(a, b, None))
}

/// Lattice inner product restricted to the points where `mask` is true.
pub fn inner_masked(a: &ScalarField, b: &ScalarField, mask: Option<&[bool]>) -> f64 {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    match a.domain {
        Domain::Radial(g) => (0..g.n)
            .filter(|&i| keep(i))
            .map(|i| a.values[i] * b.values[i] * 2.0 * std::f64::consts::PI * g.point(i) * g.h)
            .sum(),
        d => {
            let w = d.spacing().powi(d.dim() as i32);
            w * (0..a.values.len())
                .filter(|&i| keep(i))
                .map(|i| a.values[i] * b.values[i])
                .sum::<f64>()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
        assert!(Grid1D::new(1.0, 1.0, 5).is_err());
        assert!(RadialGrid::new(0.0, 1.0, 5).is_err());
    }

    #[test]
    fn centered_grid_avoids_origin() {
        let g = Grid2D::centered(6.0, 24).unwrap();
        for lattice in [g, g.edges_along(0), g.edges_along(1), g.cells()] {
            for k in 0..lattice.len() {
                let p = lattice.point(k);
                assert!(p[0].abs() > 0.1 * g.h() && p[1].abs() > 0.1 * g.h());
            }
        }
    }

    #[test]
    fn half_offset_radial_grid() {
        let g = RadialGrid::half_offset(10.0, 100).unwrap();
        assert!((g.r_min - 0.5 * g.h).abs() < 1e-15);
        assert!((g.r_max() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forward_diff_of_x_squared() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let f = ScalarField::sample(Domain::Line(g), |p| p[0] * p[0]).unwrap();
        let d = forward_diff(&f, 0).unwrap();
        // (x+h)^2 - x^2 over h = 2x + h exactly.
        for i in 0..100 {
            let x = g.point(i);
            assert!((d.values[i] - (2.0 * x + g.h)).abs() < 1e-10);
        }
        assert!(matches!(
            forward_diff(&f, 1),
            Err(Error::AxisOutOfRange { axis: 1, dim: 1 })
        ));
    }

    #[test]
    fn forward_diff_transpose_is_minus_backward_up_to_boundary_rows() {
        let g = Grid1D::new(0.0, 1.0, 9).unwrap();
        let d = Domain::Line(g);
        let ft = forward_diff_operator(&d, 0).unwrap().adjoint().to_dense();
        let b = backward_diff_operator(&d, 0).unwrap().to_dense();
        let n = g.n;
        for i in 0..n {
            for j in 0..n {
                let c = ft[i][j] + b[i][j];
                if i != 0 && i != n - 2 && i != n - 1 {
                    assert_eq!(c, 0.0, "row {i} col {j}");
                }
            }
        }
        // Explicit boundary correction in the first row.
        let h = g.h;
        assert!((ft[0][0] + b[0][0] + 2.0 / h).abs() < 1e-9);
        assert!((ft[0][1] + b[0][1] - 1.0 / h).abs() < 1e-9);
    }

    #[test]
    fn central_and_second_differences_are_second_order() {
        let err = |n: usize| {
            let g = Grid1D::new(0.0, 1.0, n).unwrap();
            let f = ScalarField::sample(Domain::Line(g), |p| p[0].sin()).unwrap();
            let d1 = central_diff(&f, 0).unwrap();
            let d2 = second_diff(&f, 0).unwrap();
            let e1 = (0..n)
                .map(|i| (d1.values[i] - g.point(i).cos()).abs())
                .fold(0.0, f64::max);
            let e2 = (0..n)
                .map(|i| (d2.values[i] + g.point(i).sin()).abs())
                .fold(0.0, f64::max);
            (e1, e2)
        };
        let (a1, a2) = err(41);
        let (b1, b2) = err(81);
        assert!((a1 / b1).log2() > 1.8);
        assert!((a2 / b2).log2() > 1.8);
    }

    #[test]
    fn trapezoid_integrals() {
        let g = Grid2D::square(0.0, 1.0, 51).unwrap();
        let f = ScalarField::sample(Domain::Plane(g), |p| p[0] * p[1]).unwrap();
        assert!((quadrature(&f) - 0.25).abs() < 1e-12);
        let r = RadialGrid::new(1e-6, 1.0, 2001).unwrap();
        let one = ScalarField::sample(Domain::Radial(r), |_| 1.0).unwrap();
        assert!((quadrature(&one) - std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid2D::centered(2.0, 5).unwrap();
        let f = ScalarField::sample(Domain::Plane(g), |p| p[0] - 3.0 * p[1]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x,y,value\n"));
        let back = ScalarField::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.domain.len(), 25);

        let l = ScalarField::sample(Domain::Line(Grid1D::new(-1.0, 1.0, 7).unwrap()), |p| p[0]).unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        assert_eq!(ScalarField::read_csv(&buf[..]).unwrap().values, l.values);
        assert!(ScalarField::read_csv(&b"a,b,c,d\n1,2,3,4\n"[..]).is_err());
    }

    #[test]
    fn nonfinite_values_rejected() {
        let d = Domain::Line(Grid1D::new(0.0, 1.0, 3).unwrap());
        assert!(matches!(
            ScalarField::new(d, vec![0.0, f64::NAN, 1.0]),
            Err(Error::NonFinite { index: 1 })
        ));
    }
}
