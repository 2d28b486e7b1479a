//! Pointwise tensor algebra of the perturbation equation
//! `(∂_t - Δ)h = Q₀[h] + ∇·Q₁[h]` for `g = δ + h` on a flat background.

mod curvature;
pub mod linalg;

pub use curvature::{curvature, ricci, scalar_curvature, Curvature};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    identity, sym_index, sym_len, Differentiator, Mat, Op, ScalarField, SymGradient, SymTensorField, VectorField,
    MAX_DIM,
};

/// Smallest admissible elimination pivot of `δ + h`.
pub const MIN_PIVOT: f64 = 1e-6;

/// Inverse metric and derivatives of `h`, computed once per state.
#[derive(Clone, Debug)]
pub struct GeometryCache {
    diff: Differentiator,
    h: SymTensorField,
    g_inv: SymTensorField,
    grad_h: SymGradient,
    hess_h: Option<Vec<Vec<f64>>>,
}

impl GeometryCache {
    pub fn new(h: &SymTensorField, diff: &Differentiator) -> Result<Self> {
        diff.grid().same_as(h.grid())?;
        let g_inv = inverse_metric(h)?;
        let grad_h = diff.gradient_sym(h)?;
        Ok(Self { diff: diff.clone(), h: h.clone(), g_inv, grad_h, hess_h: None })
    }

    /// Also cache `∂_a ∂_b h_ij`, needed by the second-order forms.
    pub fn with_hessian(h: &SymTensorField, diff: &Differentiator) -> Result<Self> {
        let mut c = Self::new(h, diff)?;
        c.hess_h = Some(diff.hessian_raw(h.comps()));
        Ok(c)
    }

    pub fn h(&self) -> &SymTensorField {
        &self.h
    }

    pub fn g_inv(&self) -> &SymTensorField {
        &self.g_inv
    }

    pub fn grad_h(&self) -> &SymGradient {
        &self.grad_h
    }

    pub fn differentiator(&self) -> &Differentiator {
        &self.diff
    }

    /// `∂_a ∂_b h` as full matrices at one point, `a <= b` in symmetric order.
    fn hess_at(&self, idx: usize) -> Option<Vec<Mat>> {
        let hess = self.hess_h.as_ref()?;
        let n = self.h.grid().dim();
        let s = sym_len(n);
        Some(
            (0..s)
                .map(|ab| {
                    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
                    for i in 0..n {
                        for j in i..n {
                            let v = hess[ab * s + sym_index(n, i, j)][idx];
                            m[i][j] = v;
                            m[j][i] = v;
                        }
                    }
                    m
                })
                .collect(),
        )
    }

    /// `max |(δ + h) g_inv - δ|` over the grid.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.h.grid().dim();
        let id = identity(n);
        (0..self.h.grid().len())
            .map(|idx| {
                let mut g = self.h.at(idx);
                for (i, row) in g.iter_mut().enumerate().take(n) {
                    row[i] += 1.0;
                }
                let p = crate::grid::matmul(n, &g, &self.g_inv.at(idx));
                (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (p[i][j] - id[i][j]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Pointwise `(δ + h)⁻¹`, refusing points where `δ + h` is not safely positive definite.
pub fn inverse_metric(h: &SymTensorField) -> Result<SymTensorField> {
    let grid = *h.grid();
    let n = grid.dim();
    let mut comps = vec![vec![0.0; grid.len()]; grid.sym_len()];
    for idx in 0..grid.len() {
        let mut g = h.at(idx);
        for (i, row) in g.iter_mut().enumerate().take(n) {
            row[i] += 1.0;
        }
        let piv = linalg::leading_pivots(n, &g);
        let bad = piv[..n].iter().any(|&p| !(p > MIN_PIVOT));
        let inv = if bad { None } else { linalg::invert(n, &g) };
        let Some(inv) = inv else {
            let m = grid.multi_index(idx);
            return Err(Error::NotPositiveDefinite {
                index: m[..n].to_vec(),
                min_eigenvalue: linalg::sym_eigenvalues(n, &g)[0],
            });
        };
        for i in 0..n {
            for j in i..n {
                comps[sym_index(n, i, j)][idx] = 0.5 * (inv[i][j] + inv[j][i]);
            }
        }
    }
    Ok(SymTensorField::from_parts(grid, comps))
}

/// `Q₀` at one point from the inverse metric `gi` and the slices `m[a] = ∂_a h`.
pub fn q0_point(n: usize, gi: &Mat, m: &[Mat; MAX_DIM]) -> Mat {
    // Fixed sizes let the compiler unroll the small loops.
    match n {
        1 => q0_fixed::<1>(gi, m),
        2 => q0_fixed::<2>(gi, m),
        3 => q0_fixed::<3>(gi, m),
        _ => q0_fixed::<MAX_DIM>(gi, m),
    }
}

#[inline(always)]
fn q0_fixed<const N: usize>(gi: &Mat, m: &[Mat; MAX_DIM]) -> Mat {
    let n = N;
    let mul = |a: &Mat, b: &Mat| {
        let mut c = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..N {
            for j in 0..N {
                let mut acc = 0.0;
                for k in 0..N {
                    acc += a[i][k] * b[k][j];
                }
                c[i][j] = acc;
            }
        }
        c
    };
    // p[a] = M_a g⁻¹, s[a] = g⁻¹ M_a g⁻¹, mr[a] = Σ_b g^{ab} M_b.
    let mut p = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    let mut s = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    let mut mr = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for a in 0..n {
        p[a] = mul(&m[a], gi);
        s[a] = mul(gi, &p[a]);
        for b in 0..n {
            let w = gi[a][b];
            for i in 0..n {
                for j in 0..n {
                    mr[a][i][j] += w * m[b][i][j];
                }
            }
        }
    }
    // Σ_a M_a g⁻¹ Mr^a
    let mut t3 = [[0.0; MAX_DIM]; MAX_DIM];
    for a in 0..n {
        let x = mul(&p[a], &mr[a]);
        for i in 0..n {
            for j in 0..n {
                t3[i][j] += x[i][j];
            }
        }
    }
    // v^b = Σ_a (g⁻¹ M_a g⁻¹)^{ab} = -∂_a g^{ab}
    let mut v = [0.0; MAX_DIM];
    for a in 0..n {
        for b in 0..n {
            v[b] += s[a][a][b];
        }
    }
    // t4[i][j] = Σ_{b,q} (S_j)_{qb} (M_b)_{iq}
    let mut t4 = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                for q in 0..n {
                    acc += s[j][q][b] * m[b][i][q];
                }
            }
            t4[i][j] = acc;
        }
    }
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for j in i..n {
            let mut t1 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    t1 += s[i][a][b] * m[j][a][b];
                }
            }
            let mut t2 = 0.0;
            for a in 0..n {
                for q in 0..n {
                    t2 += p[a][j][q] * p[q][i][a];
                }
            }
            let mut t6 = 0.0;
            for b in 0..n {
                t6 += v[b] * m[b][i][j];
            }
            let val = 0.5 * t1 + t2 - t3[i][j] - t4[i][j] - t4[j][i] + t6;
            out[i][j] = val;
            out[j][i] = val;
        }
    }
    out
}

fn pointwise_sym(cache: &GeometryCache, f: impl Fn(usize, &Mat, &[Mat; MAX_DIM]) -> Mat) -> SymTensorField {
    let grid = *cache.h.grid();
    let n = grid.dim();
    let mut comps = vec![vec![0.0; grid.len()]; grid.sym_len()];
    for idx in 0..grid.len() {
        let out = f(idx, &cache.g_inv.at(idx), &cache.grad_h.at(idx));
        for i in 0..n {
            for j in i..n {
                comps[sym_index(n, i, j)][idx] = out[i][j];
            }
        }
    }
    SymTensorField::from_parts(grid, comps)
}

/// Quadratic gradient nonlinearity `Q₀[h]`.
pub fn q0(cache: &GeometryCache) -> SymTensorField {
    let n = cache.h.grid().dim();
    pointwise_sym(cache, |_, gi, m| q0_point(n, gi, m))
}

/// `Q₁[h]^a_ij = (g^{ab} - δ^{ab}) ∂_b h_ij`, stored like a gradient.
pub fn q1(cache: &GeometryCache) -> SymGradient {
    let grid = *cache.h.grid();
    let n = grid.dim();
    let s = sym_len(n);
    let grad = cache.grad_h.comps();
    let gi = cache.g_inv.comps();
    let mut comps = vec![vec![0.0; grid.len()]; n * s];
    for a in 0..n {
        for b in 0..n {
            let w = &gi[sym_index(n, a, b)];
            let delta = if a == b { 1.0 } else { 0.0 };
            for c in 0..s {
                let src = &grad[b * s + c];
                for ((o, &wv), &dv) in comps[a * s + c].iter_mut().zip(w).zip(src) {
                    *o += (wv - delta) * dv;
                }
            }
        }
    }
    SymGradient::from_parts(grid, comps)
}

/// Spectrum of `∇_a Q₁^a` per symmetric component.
pub fn div_q1_spectra(cache: &GeometryCache, q1: &SymGradient) -> Vec<Vec<Complex64>> {
    let d = &cache.diff;
    let n = cache.h.grid().dim();
    let s = sym_len(n);
    let inputs: Vec<&[f64]> = q1.comps().iter().map(|c| c.as_slice()).collect();
    let spectra = d.fft().forward_many(&inputs);
    let mut out = vec![vec![Complex64::default(); cache.h.grid().len()]; s];
    for (slot, mut spec) in spectra.into_iter().enumerate() {
        d.apply_symbol(&mut spec, Op::D1(slot / s));
        for (o, v) in out[slot % s].iter_mut().zip(spec) {
            *o += v;
        }
    }
    out
}

/// `∇_a Q₁[h]^a_ij`.
pub fn div_q1(cache: &GeometryCache) -> SymTensorField {
    let q = q1(cache);
    let d = &cache.diff;
    let n = cache.h.grid().dim();
    let s = sym_len(n);
    let inputs: Vec<&[f64]> = q.comps().iter().map(|c| c.as_slice()).collect();
    let ops: Vec<_> = (0..n * s).map(|slot| (slot, Op::D1(slot / s))).collect();
    let parts = d.apply_many(&inputs, &ops);
    let mut comps = vec![vec![0.0; cache.h.grid().len()]; s];
    for (slot, part) in parts.into_iter().enumerate() {
        for (o, v) in comps[slot % s].iter_mut().zip(part) {
            *o += v;
        }
    }
    SymTensorField::from_parts(*cache.h.grid(), comps)
}

/// Bianchi vector `X^i = g^{ij} g^{pq} (-∂_p h_qj + ½ ∂_j h_pq)`.
pub fn bianchi_vector(cache: &GeometryCache) -> VectorField {
    let grid = *cache.h.grid();
    let n = grid.dim();
    let mut comps = vec![vec![0.0; grid.len()]; n];
    for idx in 0..grid.len() {
        let gi = cache.g_inv.at(idx);
        let m = cache.grad_h.at(idx);
        let mut w = [0.0; MAX_DIM];
        for (j, wj) in w.iter_mut().enumerate().take(n) {
            for p in 0..n {
                for q in 0..n {
                    *wj += gi[p][q] * (-m[p][q][j] + 0.5 * m[j][p][q]);
                }
            }
        }
        for (i, comp) in comps.iter_mut().enumerate() {
            comp[idx] = (0..n).map(|j| gi[i][j] * w[j]).sum();
        }
    }
    VectorField::new(grid, comps).expect("finite inputs give finite output")
}

/// `Δh + Q₀[h] + ∇·Q₁[h]`.
pub fn rdt_rhs(cache: &GeometryCache) -> SymTensorField {
    let lap = cache.diff.laplacian_sym(&cache.h).expect("cache fields share one grid");
    let q = q0(cache);
    let dq = div_q1(cache);
    let comps = lap
        .comps()
        .iter()
        .zip(q.comps())
        .zip(dq.comps())
        .map(|((a, b), c)| a.iter().zip(b).zip(c).map(|((x, y), z)| x + y + z).collect())
        .collect();
    SymTensorField::from_parts(*cache.h.grid(), comps)
}

/// Shi's form `g^{ab} ∂_a ∂_b h_ij + ½ g^{ab} g^{pq}(…)`, evaluated without
/// splitting off the flat Laplacian.
pub fn rdt_rhs_shi(cache: &GeometryCache) -> Result<SymTensorField> {
    let n = cache.h.grid().dim();
    if cache.hess_h.is_none() {
        return Err(Error::arg("cache", "second derivatives not cached; use GeometryCache::with_hessian"));
    }
    Ok(pointwise_sym(cache, |idx, gi, m| {
        let hess = cache.hess_at(idx).expect("checked above");
        // Q₀ without its -∂_a g^{ab} ∂_b h term is exactly the bracket.
        let mut out = q0_point(n, gi, m);
        let mut v = [0.0; MAX_DIM];
        for a in 0..n {
            let s = crate::grid::matmul(n, gi, &crate::grid::matmul(n, &m[a], gi));
            for b in 0..n {
                v[b] += s[a][b];
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += gi[a][b] * hess[sym_index(n, a, b)][i][j];
                    }
                    acc -= v[a] * m[a][i][j];
                }
                out[i][j] += acc;
            }
        }
        out
    }))
}

/// DeTurck form `-2 Ric(g) - L_X g` with `X` the Bianchi vector.
pub fn rdt_rhs_deturck(cache: &GeometryCache) -> Result<SymTensorField> {
    let grid = *cache.h.grid();
    let n = grid.dim();
    let g = cache.h.add_identity(1.0);
    let ric = ricci(&g, &cache.diff)?;
    let x = bianchi_vector(cache);
    let dx = cache.diff.gradient_raw(x.comps());
    let mut out = vec![vec![0.0; grid.len()]; grid.sym_len()];
    for idx in 0..grid.len() {
        let gm = g.at(idx);
        let m = cache.grad_h.at(idx);
        let xv = x.at(idx);
        // dxm[i][k] = ∂_i X^k
        let mut dxm = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in dxm.iter_mut().enumerate().take(n) {
            for (k, v) in row.iter_mut().enumerate().take(n) {
                *v = dx[i * n + k][idx];
            }
        }
        for i in 0..n {
            for j in i..n {
                let mut lie = 0.0;
                for k in 0..n {
                    lie += xv[k] * m[k][i][j] + gm[k][j] * dxm[i][k] + gm[i][k] * dxm[j][k];
                }
                let c = sym_index(n, i, j);
                out[c][idx] = -2.0 * ric.comps()[c][idx] - lie;
            }
        }
    }
    Ok(SymTensorField::from_parts(grid, out))
}

/// Largest discrepancies of the alternative right-hand-side forms, relative to
/// the sup norm of the primary form.
#[derive(Clone, Copy, Debug)]
pub struct RhsConsistency {
    pub scale: f64,
    pub shi: f64,
    pub deturck: f64,
}

/// Evaluate all three right-hand-side forms and report their agreement.
pub fn rhs_consistency(cache: &GeometryCache) -> Result<RhsConsistency> {
    let primary = rdt_rhs(cache);
    let scale = primary.sup_norm();
    let rel = |d: f64| if scale > 0.0 { d / scale } else { d };
    let shi = rel(primary.sup_distance(&rdt_rhs_shi(cache)?)?);
    let deturck = rel(primary.sup_distance(&rdt_rhs_deturck(cache)?)?);
    Ok(RhsConsistency { scale, shi, deturck })
}

/// Pointwise `|Q₀|`, `|Q₁|`, `|h|`, `|∇h|` for the structural bounds.
pub fn structural_norms(cache: &GeometryCache) -> [ScalarField; 4] {
    let grid = *cache.h.grid();
    let sf = |v: Vec<f64>| ScalarField::new(grid, v.into_iter().map(f64::sqrt).collect()).expect("finite");
    [
        sf(q0(cache).norm_squared()),
        sf(q1(cache).norm_squared()),
        sf(cache.h.norm_squared()),
        sf(cache.grad_h.norm_squared()),
    ]
}
