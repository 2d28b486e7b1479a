//! Discrete fields on a periodic box standing in for ℝⁿ.
//!
//! Grid points sit at `x_i = (i - N/2) * spacing` along every axis, so the
//! origin is the grid point with multi-index `(N/2, ..., N/2)` and the cell is
//! `[-L/2, L/2)ⁿ`. Values are stored row-major with the last axis fastest.
//! Multi-component fields are stored component-major, one `Vec<f64>` per
//! component.

mod deriv;
mod fft;
mod interp;
pub mod snapshot;

pub use deriv::{DerivativeBackend, DerivativeKind, Differentiator, Op};
pub use fft::FftNd;
pub use interp::{Interpolator, Stencil};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 4;

/// Fixed-size point buffer; only the first `n` entries are meaningful.
pub type Point = [f64; MAX_DIM];

/// Number of independent components of a symmetric 2-tensor in dimension `n`.
pub const fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Storage slot of `T_ij` in upper-triangle lexicographic order.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// The `(i, j)` pair (with `i <= j`) stored in slot `c`.
pub fn sym_pair(n: usize, c: usize) -> (usize, usize) {
    let mut slot = 0;
    for i in 0..n {
        for j in i..n {
            if slot == c {
                return (i, j);
            }
            slot += 1;
        }
    }
    panic!("symmetric slot {c} out of range for n = {n}");
}

/// Discretized periodic domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    n: usize,
    resolution: usize,
    box_length: f64,
}

impl GridSpec {
    pub fn new(n: usize, resolution: usize, box_length: f64) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension {n} outside 2..=4")));
        }
        if resolution < 8 || !resolution.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution {resolution} must be a power of two and at least 8"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {box_length} must be positive")));
        }
        Ok(Self { n, resolution, box_length })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.resolution as f64
    }

    /// Total number of grid points, `resolutionⁿ`.
    pub fn len(&self) -> usize {
        self.resolution.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `spacingⁿ` used by all Riemann sums.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    pub fn sym_len(&self) -> usize {
        sym_len(self.n)
    }

    /// Stride of `axis` in the flat row-major layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution.pow((self.n - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.n).rev() {
            out[axis] = idx % self.resolution;
            idx /= self.resolution;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.n].iter().fold(0, |acc, &i| acc * self.resolution + i)
    }

    /// Coordinate of the `i`-th grid line along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.resolution / 2) as f64) * self.spacing()
    }

    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.n {
            p[a] = self.coord(m[a]);
        }
        p
    }

    /// Flat index of the grid point at the origin.
    pub fn origin_index(&self) -> usize {
        let m = [self.resolution / 2; MAX_DIM];
        self.flat_index(&m)
    }

    /// Minimum-image displacement `x - y` on the periodic cell.
    pub fn displacement(&self, x: &Point, y: &Point) -> Point {
        let l = self.box_length;
        let mut d = [0.0; MAX_DIM];
        for a in 0..self.n {
            let mut v = x[a] - y[a];
            v -= l * (v / l).round();
            d[a] = v;
        }
        d
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        let d = self.displacement(x, y);
        d[..self.n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Radius of the origin-centred ball guaranteed to sit at least
    /// `box_length / 8` away from the cell faces.
    pub fn core_radius(&self) -> f64 {
        self.box_length * 3.0 / 8.0
    }

    /// Sample `f` at every grid point.
    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    pub fn same_as(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

pub(crate) fn check_finite<C: AsRef<[f64]>>(grid: &GridSpec, field: &'static str, comps: &[C]) -> Result<()> {
    for comp in comps {
        if let Some(i) = comp.as_ref().iter().position(|v| !v.is_finite()) {
            let m = grid.multi_index(i);
            return Err(Error::NonFinite { field, index: m[..grid.dim()].to_vec() });
        }
    }
    Ok(())
}

fn check_len(grid: &GridSpec, field: &'static str, comps: &[Vec<f64>], expected: usize) -> Result<()> {
    if comps.len() != expected {
        return Err(Error::InvalidArgument {
            name: field,
            reason: format!("expected {expected} components, got {}", comps.len()),
        });
    }
    if let Some(c) = comps.iter().find(|c| c.len() != grid.len()) {
        return Err(Error::InvalidArgument {
            name: field,
            reason: format!("component has {} values, grid has {}", c.len(), grid.len()),
        });
    }
    Ok(())
}

/// One real value per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let comps = std::slice::from_ref(&values);
        check_len(&grid, "scalar field", comps, 1)?;
        check_finite(&grid, "scalar field", comps)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&Point) -> f64) -> Result<Self> {
        Self::new(grid, grid.sample(f))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Riemann sum `Σ f · spacingⁿ`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// `n` real components per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        check_len(&grid, "vector field", &comps, grid.dim())?;
        check_finite(&grid, "vector field", &comps)?;
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, comps: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn into_comps(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn at(&self, idx: usize) -> Point {
        let mut v = [0.0; MAX_DIM];
        for (a, c) in self.comps.iter().enumerate() {
            v[a] = c[idx];
        }
        v
    }

    /// Largest Euclidean length over the grid.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Symmetric 2-tensor field, upper triangle stored lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl SymTensorField {
    pub fn new(grid: GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        check_len(&grid, "symmetric tensor field", &comps, grid.sym_len())?;
        check_finite(&grid, "symmetric tensor field", &comps)?;
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, comps: vec![vec![0.0; grid.len()]; grid.sym_len()] }
    }

    /// Build from a function returning the full `n×n` matrix at each point;
    /// only the upper triangle is read.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&Point) -> Mat) -> Result<Self> {
        let n = grid.dim();
        let mut comps = vec![vec![0.0; grid.len()]; grid.sym_len()];
        for idx in 0..grid.len() {
            let m = f(&grid.point(idx));
            for i in 0..n {
                for j in i..n {
                    comps[sym_index(n, i, j)][idx] = m[i][j];
                }
            }
        }
        Self::new(grid, comps)
    }

    /// `f(x) * δ_ij`.
    pub fn diagonal_from_fn(grid: GridSpec, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let n = grid.dim();
        Self::from_fn(grid, |x| {
            let v = f(x);
            let mut m = [[0.0; MAX_DIM]; MAX_DIM];
            for (i, row) in m.iter_mut().enumerate().take(n) {
                row[i] = v;
            }
            m
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn comps_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[sym_index(self.grid.dim(), i, j)]
    }

    pub fn into_comps(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Full symmetric matrix at a grid point.
    pub fn at(&self, idx: usize) -> Mat {
        let n = self.grid.dim();
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in i..n {
                let v = self.comps[sym_index(n, i, j)][idx];
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    /// Pointwise `√(Σ_ij h_ij² + δ)` with off-diagonal entries counted twice.
    pub fn pointwise_norm(&self, delta: f64) -> Result<ScalarField> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidArgument {
                name: "delta",
                reason: format!("regularization {delta} must be non-negative"),
            });
        }
        let values = self.norm_squared().into_iter().map(|s| (s + delta).sqrt()).collect();
        Ok(ScalarField { grid: self.grid, values })
    }

    /// Pointwise `Σ_ij h_ij²` (full-matrix sum).
    pub fn norm_squared(&self) -> Vec<f64> {
        let n = self.grid.dim();
        let mut out = vec![0.0; self.grid.len()];
        for (c, comp) in self.comps.iter().enumerate() {
            let (i, j) = sym_pair(n, c);
            let w = if i == j { 1.0 } else { 2.0 };
            for (o, v) in out.iter_mut().zip(comp) {
                *o += w * v * v;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.norm_squared().into_iter().fold(0.0, f64::max).sqrt()
    }

    /// `self + alpha * other`, componentwise.
    pub fn axpy(&self, alpha: f64, other: &SymTensorField) -> Result<SymTensorField> {
        self.grid.same_as(&other.grid)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + alpha * y).collect())
            .collect();
        Ok(SymTensorField { grid: self.grid, comps })
    }

    /// `self + alpha * δ`; turns a perturbation into a metric and back.
    pub fn add_identity(&self, alpha: f64) -> SymTensorField {
        let n = self.grid.dim();
        let mut out = self.clone();
        for i in 0..n {
            for v in out.comps[sym_index(n, i, i)].iter_mut() {
                *v += alpha;
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> SymTensorField {
        let comps = self.comps.iter().map(|c| c.iter().map(|v| alpha * v).collect()).collect();
        SymTensorField { grid: self.grid, comps }
    }

    /// Largest pointwise tensor norm of `self - other`.
    pub fn sup_distance(&self, other: &SymTensorField) -> Result<f64> {
        Ok(self.axpy(-1.0, other)?.sup_norm())
    }

    pub(crate) fn from_parts(grid: GridSpec, comps: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(comps.len(), grid.sym_len());
        Self { grid, comps }
    }
}

/// Rank-3 field `∂_a T_ij`; slot `a * sym_len + c` holds the derivative along
/// `a` of symmetric component `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymGradient {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl SymGradient {
    pub(crate) fn from_parts(grid: GridSpec, comps: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(comps.len(), grid.dim() * grid.sym_len());
        Self { grid, comps }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn comp(&self, a: usize, i: usize, j: usize) -> &[f64] {
        let n = self.grid.dim();
        &self.comps[a * sym_len(n) + sym_index(n, i, j)]
    }

    /// The `n` matrices `∂_a T` at a grid point.
    pub fn at(&self, idx: usize) -> [Mat; MAX_DIM] {
        let n = self.grid.dim();
        let s = sym_len(n);
        let mut out = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for (a, m) in out.iter_mut().enumerate().take(n) {
            for i in 0..n {
                for j in i..n {
                    let v = self.comps[a * s + sym_index(n, i, j)][idx];
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
        }
        out
    }

    /// Pointwise `Σ_a Σ_ij (∂_a T_ij)²`.
    pub fn norm_squared(&self) -> Vec<f64> {
        let n = self.grid.dim();
        let s = sym_len(n);
        let mut out = vec![0.0; self.grid.len()];
        for (slot, comp) in self.comps.iter().enumerate() {
            let (i, j) = sym_pair(n, slot % s);
            let w = if i == j { 1.0 } else { 2.0 };
            for (o, v) in out.iter_mut().zip(comp) {
                *o += w * v * v;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.norm_squared().into_iter().fold(0.0, f64::max).sqrt()
    }
}

/// Dense `MAX_DIM × MAX_DIM` matrix; only the leading `n × n` block is used.
pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

pub(crate) fn identity(n: usize) -> Mat {
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub(crate) fn matmul(n: usize, a: &Mat, b: &Mat) -> Mat {
    let mut c = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_index_is_lexicographic() {
        for n in 2..=4 {
            let mut slot = 0;
            for i in 0..n {
                for j in i..n {
                    assert_eq!(sym_index(n, i, j), slot);
                    assert_eq!(sym_index(n, j, i), slot);
                    assert_eq!(sym_pair(n, slot), (i, j));
                    slot += 1;
                }
            }
            assert_eq!(slot, sym_len(n));
        }
    }

    #[test]
    fn grid_invariants() {
        let g = GridSpec::new(3, 16, 2.0).unwrap();
        assert_eq!(g.spacing(), 2.0 / 16.0);
        assert_eq!(g.len(), 4096);
        assert!(GridSpec::new(2, 12, 1.0).is_err());
        assert!(GridSpec::new(2, 4, 1.0).is_err());
        assert!(GridSpec::new(5, 8, 1.0).is_err());
        assert!(GridSpec::new(2, 8, -1.0).is_err());
        let o = g.point(g.origin_index());
        assert_eq!(&o[..3], &[0.0, 0.0, 0.0]);
        for idx in [0, 17, 4095] {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
    }

    #[test]
    fn pointwise_norm_examples() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let zero = SymTensorField::zeros(g);
        assert!(zero.pointwise_norm(0.0).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(zero.pointwise_norm(4.0).unwrap().values().iter().all(|&v| v == 2.0));
        let h = SymTensorField::from_fn(g, |_| {
            let mut m = [[0.0; MAX_DIM]; MAX_DIM];
            m[0][0] = 3.0;
            m[1][1] = 4.0;
            m
        })
        .unwrap();
        assert!(h.pointwise_norm(0.0).unwrap().values().iter().all(|&v| v == 5.0));
        assert!(h.pointwise_norm(-1.0).is_err());
    }

    #[test]
    fn off_diagonal_counts_twice() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let h = SymTensorField::from_fn(g, |_| {
            let mut m = [[0.0; MAX_DIM]; MAX_DIM];
            m[0][1] = 1.0;
            m[1][0] = 1.0;
            m
        })
        .unwrap();
        assert!((h.sup_norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected_with_location() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let mut v = vec![0.0; 64];
        v[9] = f64::NAN;
        match ScalarField::new(g, v) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, vec![1, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
