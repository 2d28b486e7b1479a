use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::{check_finite, sym_len, sym_pair, FftNd, GridSpec, ScalarField, SymGradient, SymTensorField, VectorField};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeKind {
    Spectral,
    Central4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivativeBackend {
    pub kind: DerivativeKind,
    /// 2/3-rule truncation of nonlinear products. Ignored by `Central4`.
    pub dealias: bool,
}

impl Default for DerivativeBackend {
    fn default() -> Self {
        Self { kind: DerivativeKind::Spectral, dealias: true }
    }
}

impl DerivativeBackend {
    pub fn spectral() -> Self {
        Self::default()
    }

    pub fn central4() -> Self {
        Self { kind: DerivativeKind::Central4, dealias: false }
    }

    pub fn dealiasing(&self) -> bool {
        self.dealias && self.kind == DerivativeKind::Spectral
    }
}

/// Linear derivative operator applied to a scalar component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    D1(usize),
    D2(usize, usize),
    Laplacian,
}

/// Derivative operators for one grid and backend.
///
/// Every operator is diagonal in Fourier space. The spectral backend uses the
/// exact multipliers `ik` (Nyquist mode zeroed for odd derivatives) and `-k²`;
/// `Central4` applies the periodic fourth-order stencils in physical space and
/// exposes their Fourier symbols for the exponential stepper.
#[derive(Clone, Debug)]
pub struct Differentiator {
    grid: GridSpec,
    backend: DerivativeBackend,
    fft: FftNd,
    /// Per axis, the imaginary part of the first-derivative symbol at every mode.
    d1: Arc<Vec<Vec<f64>>>,
    /// Per axis, the second-derivative symbol at every mode.
    d2: Arc<Vec<Vec<f64>>>,
    keep: Arc<Vec<bool>>,
}

/// Signed wavenumber index of FFT bin `m` (Nyquist maps to `-N/2`).
fn signed(m: usize, n: usize) -> isize {
    if m < n / 2 {
        m as isize
    } else {
        m as isize - n as isize
    }
}

impl Differentiator {
    pub fn new(grid: GridSpec, backend: DerivativeBackend) -> Self {
        let n = grid.resolution();
        let dx = grid.spacing();
        let k0 = 2.0 * PI / grid.box_length();
        let (t1, t2): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|m| {
                let s = signed(m, n);
                let k = k0 * s as f64;
                match backend.kind {
                    DerivativeKind::Spectral => {
                        let d1 = if 2 * s.unsigned_abs() == n { 0.0 } else { k };
                        (d1, -k * k)
                    }
                    DerivativeKind::Central4 => {
                        let th = k * dx;
                        let d1 = (8.0 * th.sin() - (2.0 * th).sin()) / (6.0 * dx);
                        let d2 = (-2.0 * (2.0 * th).cos() + 32.0 * th.cos() - 30.0) / (12.0 * dx * dx);
                        (d1, d2)
                    }
                }
            })
            .unzip();
        let dim = grid.dim();
        let mut d1 = vec![vec![0.0; grid.len()]; dim];
        let mut d2 = vec![vec![0.0; grid.len()]; dim];
        let mut keep = vec![true; grid.len()];
        let third = (n / 3) as isize;
        for idx in 0..grid.len() {
            let mi = grid.multi_index(idx);
            for a in 0..dim {
                d1[a][idx] = t1[mi[a]];
                d2[a][idx] = t2[mi[a]];
                if signed(mi[a], n).abs() > third {
                    keep[idx] = false;
                }
            }
        }
        Self { grid, backend, fft: FftNd::new(grid), d1: Arc::new(d1), d2: Arc::new(d2), keep: Arc::new(keep) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn backend(&self) -> DerivativeBackend {
        self.backend
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    /// Fourier symbol of `∂_a` divided by `i`.
    pub fn d1_symbol(&self, axis: usize) -> &[f64] {
        &self.d1[axis]
    }

    /// Fourier symbol of the backend Laplacian at every mode.
    pub fn laplacian_symbol(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for d2 in self.d2.iter() {
            for (o, v) in out.iter_mut().zip(d2) {
                *o += v;
            }
        }
        out
    }

    /// Exact `|k|²` at every mode, independent of the backend.
    pub fn k_squared(&self) -> Vec<f64> {
        let n = self.grid.resolution();
        let k0 = 2.0 * PI / self.grid.box_length();
        (0..self.grid.len())
            .map(|idx| {
                let mi = self.grid.multi_index(idx);
                (0..self.grid.dim()).map(|a| (k0 * signed(mi[a], n) as f64).powi(2)).sum()
            })
            .collect()
    }

    /// Zero every mode outside the 2/3-rule box when dealiasing is enabled.
    pub fn dealias_spectrum(&self, spec: &mut [Complex64]) {
        if !self.backend.dealiasing() {
            return;
        }
        for (v, &k) in spec.iter_mut().zip(self.keep.iter()) {
            if !k {
                *v = Complex64::default();
            }
        }
    }

    /// Multiply a spectrum by the symbol of `op`.
    pub fn apply_symbol(&self, spec: &mut [Complex64], op: Op) {
        match op {
            Op::D1(a) => {
                for (v, &s) in spec.iter_mut().zip(self.d1[a].iter()) {
                    *v = Complex64::new(-s * v.im, s * v.re);
                }
            }
            Op::D2(a, b) if a == b => {
                for (v, &s) in spec.iter_mut().zip(self.d2[a].iter()) {
                    *v *= s;
                }
            }
            Op::D2(a, b) => {
                for ((v, &sa), &sb) in spec.iter_mut().zip(self.d1[a].iter()).zip(self.d1[b].iter()) {
                    *v *= -sa * sb;
                }
            }
            Op::Laplacian => {
                let lap = self.laplacian_symbol();
                for (v, s) in spec.iter_mut().zip(lap) {
                    *v *= s;
                }
            }
        }
    }

    /// Apply `ops[k].1` to `inputs[ops[k].0]` for every `k`.
    pub fn apply_many(&self, inputs: &[&[f64]], ops: &[(usize, Op)]) -> Vec<Vec<f64>> {
        match self.backend.kind {
            DerivativeKind::Spectral => {
                let spectra = self.fft.forward_many(inputs);
                let mut out = Vec::with_capacity(ops.len());
                for pair in ops.chunks(2) {
                    let specs: Vec<Vec<Complex64>> = pair
                        .iter()
                        .map(|&(i, op)| {
                            let mut s = spectra[i].clone();
                            self.apply_symbol(&mut s, op);
                            s
                        })
                        .collect();
                    out.extend(self.fft.inverse_many(&specs));
                }
                out
            }
            DerivativeKind::Central4 => ops.iter().map(|&(i, op)| self.stencil(inputs[i], op)).collect(),
        }
    }

    pub fn apply(&self, f: &[f64], op: Op) -> Vec<f64> {
        self.apply_many(&[f], &[(0, op)]).pop().unwrap()
    }

    fn stencil(&self, f: &[f64], op: Op) -> Vec<f64> {
        let dx = self.grid.spacing();
        let first = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
        let second = [(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];
        match op {
            Op::D1(a) => self.stencil_axis(f, a, &first, 1.0 / dx),
            Op::D2(a, b) if a == b => self.stencil_axis(f, a, &second, 1.0 / (dx * dx)),
            Op::D2(a, b) => {
                let fa = self.stencil_axis(f, a, &first, 1.0 / dx);
                self.stencil_axis(&fa, b, &first, 1.0 / dx)
            }
            Op::Laplacian => {
                let mut out = vec![0.0; f.len()];
                for a in 0..self.grid.dim() {
                    let d = self.stencil_axis(f, a, &second, 1.0 / (dx * dx));
                    for (o, v) in out.iter_mut().zip(d) {
                        *o += v;
                    }
                }
                out
            }
        }
    }

    fn stencil_axis(&self, f: &[f64], axis: usize, weights: &[(isize, f64)], scale: f64) -> Vec<f64> {
        let n = self.grid.resolution();
        let stride = self.grid.stride(axis);
        let block = n * stride;
        let mut out = vec![0.0; f.len()];
        for (src, dst) in f.chunks(block).zip(out.chunks_mut(block)) {
            for k in 0..n {
                let row = &mut dst[k * stride..(k + 1) * stride];
                for &(off, w) in weights {
                    let kk = (k as isize + off).rem_euclid(n as isize) as usize;
                    let from = &src[kk * stride..(kk + 1) * stride];
                    for (o, v) in row.iter_mut().zip(from) {
                        *o += w * v;
                    }
                }
                for o in row.iter_mut() {
                    *o *= scale;
                }
            }
        }
        out
    }

    /// `∂_a f` for every axis.
    pub fn gradient(&self, f: &ScalarField) -> Result<VectorField> {
        self.grid.same_as(f.grid())?;
        check_finite(&self.grid, "gradient input", &[f.values()])?;
        let ops: Vec<_> = (0..self.grid.dim()).map(|a| (0, Op::D1(a))).collect();
        VectorField::new(self.grid, self.apply_many(&[f.values()], &ops))
    }

    /// `∂_a h_ij` for every axis and component.
    pub fn gradient_sym(&self, h: &SymTensorField) -> Result<SymGradient> {
        self.grid.same_as(h.grid())?;
        check_finite(&self.grid, "gradient input", h.comps())?;
        Ok(SymGradient::from_parts(self.grid, self.gradient_raw(h.comps())))
    }

    /// Component-major `∂_a c` for each input `c`: slot `a * inputs.len() + c`.
    pub fn gradient_raw(&self, comps: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let inputs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
        let ops: Vec<_> =
            (0..self.grid.dim()).flat_map(|a| (0..comps.len()).map(move |c| (c, Op::D1(a)))).collect();
        self.apply_many(&inputs, &ops)
    }

    /// Second derivatives `∂_a ∂_b c` for `a <= b`, slot `sym_index(a, b) * inputs.len() + c`.
    pub fn hessian_raw(&self, comps: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.grid.dim();
        let inputs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
        let ops: Vec<_> = (0..sym_len(n))
            .flat_map(|s| {
                let (a, b) = sym_pair(n, s);
                (0..comps.len()).map(move |c| (c, Op::D2(a, b)))
            })
            .collect();
        self.apply_many(&inputs, &ops)
    }

    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.same_as(f.grid())?;
        ScalarField::new(self.grid, self.apply(f.values(), Op::Laplacian))
    }

    pub fn laplacian_sym(&self, h: &SymTensorField) -> Result<SymTensorField> {
        self.grid.same_as(h.grid())?;
        check_finite(&self.grid, "laplacian input", h.comps())?;
        let inputs: Vec<&[f64]> = h.comps().iter().map(|c| c.as_slice()).collect();
        let ops: Vec<_> = (0..inputs.len()).map(|c| (c, Op::Laplacian)).collect();
        Ok(SymTensorField::from_parts(self.grid, self.apply_many(&inputs, &ops)))
    }

    /// `Σ_a ∂_a v^a`.
    pub fn divergence(&self, v: &VectorField) -> Result<ScalarField> {
        self.grid.same_as(v.grid())?;
        let inputs: Vec<&[f64]> = v.comps().iter().map(|c| c.as_slice()).collect();
        let ops: Vec<_> = (0..inputs.len()).map(|a| (a, Op::D1(a))).collect();
        let parts = self.apply_many(&inputs, &ops);
        let mut out = vec![0.0; self.grid.len()];
        for p in parts {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        ScalarField::new(self.grid, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(grid: GridSpec, mode: f64) -> ScalarField {
        let l = grid.box_length();
        ScalarField::from_fn(grid, |x| (2.0 * PI * mode * x[0] / l).sin()).unwrap()
    }

    #[test]
    fn spectral_single_mode_is_exact() {
        let grid = GridSpec::new(2, 16, 3.0).unwrap();
        let d = Differentiator::new(grid, DerivativeBackend::spectral());
        let k = 2.0 * PI * 3.0 / 3.0;
        let g = d.gradient(&sine(grid, 3.0)).unwrap();
        let lap = d.laplacian(&sine(grid, 3.0)).unwrap();
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            assert!((g.comp(0)[idx] - k * (k * x[0]).cos()).abs() < 1e-12 * k);
            assert!(g.comp(1)[idx].abs() < 1e-12);
            assert!((lap.values()[idx] + k * k * (k * x[0]).sin()).abs() < 1e-12 * k * k);
        }
    }

    #[test]
    fn central4_stencil_matches_its_symbol() {
        let grid = GridSpec::new(2, 16, 1.0).unwrap();
        let d = Differentiator::new(grid, DerivativeBackend::central4());
        let f: Vec<f64> = (0..grid.len()).map(|i| ((i * 37) % 23) as f64).collect();
        for op in [Op::D1(0), Op::D1(1), Op::D2(0, 0), Op::D2(0, 1), Op::Laplacian] {
            let direct = d.apply(&f, op);
            let mut spec = d.fft().forward_real(&f);
            d.apply_symbol(&mut spec, op);
            let via = d.fft().inverse_real(spec);
            for (a, b) in direct.iter().zip(&via) {
                assert!((a - b).abs() < 1e-9, "{op:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        for backend in [DerivativeBackend::spectral(), DerivativeBackend::central4()] {
            let grid = GridSpec::new(3, 8, 1.0).unwrap();
            let d = Differentiator::new(grid, backend);
            let f = ScalarField::from_fn(grid, |_| 2.5).unwrap();
            assert!(d.gradient(&f).unwrap().sup_norm() < 1e-12);
            assert!(d.laplacian(&f).unwrap().values().iter().all(|v| v.abs() < 1e-11));
        }
    }

    #[test]
    fn dealias_keeps_low_modes_only() {
        let grid = GridSpec::new(2, 12usize.next_power_of_two(), 1.0).unwrap();
        let d = Differentiator::new(grid, DerivativeBackend::spectral());
        let mut spec = vec![Complex64::new(1.0, 0.0); grid.len()];
        d.dealias_spectrum(&mut spec);
        let kept = spec.iter().filter(|v| v.re != 0.0).count();
        // |m| <= 5 on each axis of a 16-point grid: 11 modes per axis.
        assert_eq!(kept, 11 * 11);
    }
}
