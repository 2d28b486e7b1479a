//! Flux `∫_{S_r} (∂_j g_ij - ∂_i g_jj) dAⁱ` through coordinate spheres.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{sym_index, Differentiator, Interpolator, Point, SymTensorField, MAX_DIM};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p0 = 1.0;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Unit normals and surface weights on the unit sphere in `n = 2, 3`.
fn sphere_rule(n: usize) -> Vec<(Point, f64)> {
    let mut out = Vec::new();
    if n == 2 {
        let m = 128;
        for k in 0..m {
            let a = 2.0 * PI * k as f64 / m as f64;
            let mut x = [0.0; MAX_DIM];
            x[0] = a.cos();
            x[1] = a.sin();
            out.push((x, 2.0 * PI / m as f64));
        }
    } else {
        let (zs, ws) = gauss_legendre(32);
        let m = 64;
        for (z, w) in zs.iter().zip(&ws) {
            let s = (1.0 - z * z).sqrt();
            for k in 0..m {
                let a = 2.0 * PI * k as f64 / m as f64;
                let mut x = [0.0; MAX_DIM];
                x[0] = s * a.cos();
                x[1] = s * a.sin();
                x[2] = *z;
                out.push((x, w * 2.0 * PI / m as f64));
            }
        }
    }
    out
}

/// Flux through the sphere of each radius, centred at the origin; no
/// normalization factor is applied.
pub fn adm_mass(h: &SymTensorField, radii: &[f64], diff: &Differentiator) -> Result<Vec<f64>> {
    let grid = *h.grid();
    grid.same_as(diff.grid())?;
    let n = grid.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::arg("h", format!("sphere quadrature is available for n = 2, 3, not {n}")));
    }
    let limit = grid.box_length() / 2.0 - 4.0 * grid.spacing();
    for &r in radii {
        if !(r > 0.0) || r > limit {
            return Err(Error::arg("radii", format!("r = {r} must lie in (0, {limit}]")));
        }
    }
    let s = grid.sym_len();
    let grad = diff.gradient_raw(h.comps());
    let d = |a: usize, i: usize, j: usize| &grad[a * s + sym_index(n, i, j)];
    let flux: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..grid.len())
                .map(|idx| (0..n).map(|j| d(j, i, j)[idx] - d(i, j, j)[idx]).sum())
                .collect()
        })
        .collect();
    let interp = Interpolator::new(grid);
    let rule = sphere_rule(n);
    Ok(radii
        .iter()
        .map(|&r| {
            let area = r.powi(n as i32 - 1);
            rule.iter()
                .map(|(nu, w)| {
                    let mut x = [0.0; MAX_DIM];
                    for a in 0..n {
                        x[a] = r * nu[a];
                    }
                    let st = interp.stencil(&x);
                    (0..n).map(|i| interp.eval(&st, &flux[i]) * nu[i]).sum::<f64>() * w * area
                })
                .sum()
        })
        .collect())
}
