use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::GridSpec;

/// n-dimensional complex FFT on a cubic periodic grid.
///
/// Forward transforms are unnormalized; inverse transforms divide by the
/// number of grid points. Two real fields can share one complex transform
/// (`forward_pair` / `inverse_pair`), which halves the cost of the spectral
/// derivative pipeline.
#[derive(Clone)]
pub struct FftNd {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Flat index of the wavevector `-k` for every flat index `k`.
    negated: Arc<Vec<u32>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("grid", &self.grid).finish()
    }
}

impl FftNd {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.resolution();
        let negated = (0..grid.len())
            .map(|idx| {
                let mut m = grid.multi_index(idx);
                for v in m.iter_mut().take(grid.dim()) {
                    *v = (n - *v) % n;
                }
                grid.flat_index(&m) as u32
            })
            .collect();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            negated: Arc::new(negated),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.resolution();
        let total = self.grid.len();
        debug_assert_eq!(data.len(), total);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // Strided axes go through small tiles of lines so the gather stays in cache.
        const TILE: usize = 16;
        let mut lines = vec![Complex64::default(); TILE * n];
        for axis in 0..self.grid.dim() {
            let stride = self.grid.stride(axis);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            for chunk in data.chunks_mut(block) {
                let mut j0 = 0;
                while j0 < stride {
                    let w = TILE.min(stride - j0);
                    let tile = &mut lines[..w * n];
                    for k in 0..n {
                        let row = &chunk[k * stride + j0..k * stride + j0 + w];
                        for (j, &v) in row.iter().enumerate() {
                            tile[j * n + k] = v;
                        }
                    }
                    plan.process_with_scratch(tile, &mut scratch);
                    for k in 0..n {
                        let row = &mut chunk[k * stride + j0..k * stride + j0 + w];
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = tile[j * n + k];
                        }
                    }
                    j0 += w;
                }
            }
        }
    }

    pub fn forward_inplace(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse_inplace(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, f: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_inplace(&mut data);
        data
    }

    /// Spectra of two real fields from a single complex transform.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward_inplace(&mut z);
        let mut fa = vec![Complex64::default(); z.len()];
        let mut fb = vec![Complex64::default(); z.len()];
        for (k, (oa, ob)) in fa.iter_mut().zip(fb.iter_mut()).enumerate() {
            let zk = z[k];
            let zn = z[self.negated[k] as usize].conj();
            *oa = (zk + zn) * 0.5;
            // (zk - zn) / 2i
            let d = (zk - zn) * 0.5;
            *ob = Complex64::new(d.im, -d.re);
        }
        (fa, fb)
    }

    /// Real part of the inverse transform.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_inplace(&mut spec);
        spec.into_iter().map(|v| v.re).collect()
    }

    /// Inverse transform of two Hermitian spectra via one complex transform.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<Complex64> =
            a.iter().zip(b).map(|(&x, &y)| x + Complex64::new(-y.im, y.re)).collect();
        self.inverse_inplace(&mut z);
        z.into_iter().map(|v| (v.re, v.im)).unzip()
    }

    pub fn forward_many(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(fields.len());
        let mut chunks = fields.chunks_exact(2);
        for pair in &mut chunks {
            let (a, b) = self.forward_pair(pair[0], pair[1]);
            out.push(a);
            out.push(b);
        }
        if let [last] = chunks.remainder() {
            out.push(self.forward_real(last));
        }
        out
    }

    pub fn inverse_many(&self, spectra: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        let mut chunks = spectra.chunks_exact(2);
        for pair in &mut chunks {
            let (a, b) = self.inverse_pair(&pair[0], &pair[1]);
            out.push(a);
            out.push(b);
        }
        if let [last] = chunks.remainder() {
            out.push(self.inverse_real(last.clone()));
        }
        out
    }
}
