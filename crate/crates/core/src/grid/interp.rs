use super::{GridSpec, Point, MAX_DIM};

/// Periodic tensor-product cubic Lagrange interpolation (4 nodes per axis).
#[derive(Clone, Copy, Debug)]
pub struct Interpolator {
    grid: GridSpec,
}

/// Node indices and weights for one evaluation point, reusable across fields.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    nodes: [[usize; 4]; MAX_DIM],
    weights: [[f64; 4]; MAX_DIM],
}

impl Interpolator {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid }
    }

    pub fn stencil(&self, x: &Point) -> Stencil {
        let n = self.grid.resolution();
        let mut nodes = [[0; 4]; MAX_DIM];
        let mut weights = [[0.0; 4]; MAX_DIM];
        for a in 0..self.grid.dim() {
            let u = x[a] / self.grid.spacing() + (n / 2) as f64;
            let i0 = u.floor();
            let t = u - i0;
            let i0 = i0 as i64;
            for (o, node) in nodes[a].iter_mut().enumerate() {
                *node = (i0 - 1 + o as i64).rem_euclid(n as i64) as usize;
            }
            weights[a] = [
                -t * (t - 1.0) * (t - 2.0) / 6.0,
                (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                -(t + 1.0) * t * (t - 2.0) / 2.0,
                (t + 1.0) * t * (t - 1.0) / 6.0,
            ];
        }
        Stencil { nodes, weights }
    }

    pub fn eval(&self, s: &Stencil, f: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let count = 4usize.pow(dim as u32);
        let mut acc = 0.0;
        for c in 0..count {
            let mut rest = c;
            let mut idx = 0;
            let mut w = 1.0;
            for a in 0..dim {
                let o = rest % 4;
                rest /= 4;
                idx = idx * self.grid.resolution() + s.nodes[a][o];
                w *= s.weights[a][o];
            }
            acc += w * f[idx];
        }
        acc
    }

    pub fn sample(&self, f: &[f64], x: &Point) -> f64 {
        self.eval(&self.stencil(x), f)
    }
}
