//! Christoffel-based curvature of a metric field `g`.

use super::inverse_metric;
use crate::error::Result;
use crate::grid::{sym_index, sym_len, Differentiator, Mat, ScalarField, SymTensorField, MAX_DIM};

type T3 = [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM];
type T4 = [[[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];

/// Ricci tensor, scalar curvature and, on request, the norms `|Ric|_g`, `|Rm|_g`.
#[derive(Clone, Debug)]
pub struct Curvature {
    pub ricci: SymTensorField,
    pub scalar: ScalarField,
    pub ricci_norm: Option<ScalarField>,
    pub riemann_norm: Option<ScalarField>,
}

/// Ricci tensor `R_{σν}` and, on request, `R^ρ_{σμν}` stored as `rm[ρ][σ][μ][ν]`.
fn curvature_point(n: usize, gi: &Mat, dg: &T3, ddg: &[Mat], full: bool) -> (Mat, Option<T4>) {
    match n {
        1 => curvature_fixed::<1>(gi, dg, ddg, full),
        2 => curvature_fixed::<2>(gi, dg, ddg, full),
        3 => curvature_fixed::<3>(gi, dg, ddg, full),
        _ => curvature_fixed::<MAX_DIM>(gi, dg, ddg, full),
    }
}

#[inline(always)]
fn curvature_fixed<const N: usize>(gi: &Mat, dg: &T3, ddg: &[Mat], full: bool) -> (Mat, Option<T4>) {
    let n = N;
    let mut g1 = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                g1[l][i][j] = 0.5 * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
            }
        }
    }
    let mut gam = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                gam[k][i][j] = (0..n).map(|l| gi[k][l] * g1[l][i][j]).sum();
            }
        }
    }
    // dgam[m][k][i][j] = ∂_m Γ^k_ij
    let mut dgam: T4 = [[[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for m in 0..n {
        let d2 = |a: usize, b: usize, c: usize| ddg[sym_index(n, m, a)][b][c];
        let mut dgi = [[0.0; MAX_DIM]; MAX_DIM];
        for k in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc -= gi[k][a] * dg[m][a][b] * gi[b][l];
                    }
                }
                dgi[k][l] = acc;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        let dg1 = 0.5 * (d2(i, j, l) + d2(j, i, l) - d2(l, i, j));
                        acc += dgi[k][l] * g1[l][i][j] + gi[k][l] * dg1;
                    }
                    dgam[m][k][i][j] = acc;
                }
            }
        }
    }
    let mut rc = [[0.0; MAX_DIM]; MAX_DIM];
    for sg in 0..n {
        for nu in 0..n {
            let mut v = 0.0;
            for r in 0..n {
                v += dgam[r][r][nu][sg] - dgam[nu][r][r][sg];
                for l in 0..n {
                    v += gam[r][r][l] * gam[l][nu][sg] - gam[r][nu][l] * gam[l][r][sg];
                }
            }
            rc[sg][nu] = v;
        }
    }
    if !full {
        return (rc, None);
    }
    let mut rm: T4 = [[[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for r in 0..n {
        for s in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let mut v = dgam[mu][r][nu][s] - dgam[nu][r][mu][s];
                    for l in 0..n {
                        v += gam[r][mu][l] * gam[l][nu][s] - gam[r][nu][l] * gam[l][mu][s];
                    }
                    rm[r][s][mu][nu] = v;
                }
            }
        }
    }
    (rc, Some(rm))
}

/// Raise (or lower) slot `slot` of a rank-4 array with the matrix `m`.
fn contract_slot(n: usize, t: &T4, m: &Mat, slot: usize) -> T4 {
    let mut out: T4 = [[[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let idx = [a, b, c, d];
                    let mut acc = 0.0;
                    for e in 0..n {
                        let mut j = idx;
                        j[slot] = e;
                        acc += m[idx[slot]][e] * t[j[0]][j[1]][j[2]][j[3]];
                    }
                    out[a][b][c][d] = acc;
                }
            }
        }
    }
    out
}

/// Curvature of the metric field `g` (not the perturbation).
pub fn curvature(g: &SymTensorField, d: &Differentiator, with_norms: bool) -> Result<Curvature> {
    let grid = *g.grid();
    grid.same_as(d.grid())?;
    let n = grid.dim();
    let s = sym_len(n);
    let h = g.add_identity(-1.0);
    let g_inv = inverse_metric(&h)?;
    let grad = d.gradient_raw(h.comps());
    let hess = d.hessian_raw(h.comps());
    let mut ric = vec![vec![0.0; grid.len()]; s];
    let mut scalar = vec![0.0; grid.len()];
    let mut ric_norm = vec![0.0; if with_norms { grid.len() } else { 0 }];
    let mut rm_norm = vec![0.0; if with_norms { grid.len() } else { 0 }];
    let unpack = |slot_base: usize, idx: usize, src: &[Vec<f64>]| {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in i..n {
                let v = src[slot_base + sym_index(n, i, j)][idx];
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    };
    for idx in 0..grid.len() {
        let gi = g_inv.at(idx);
        let mut dg = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for (a, slice) in dg.iter_mut().enumerate().take(n) {
            *slice = unpack(a * s, idx, &grad);
        }
        let mut ddg = [[[0.0; MAX_DIM]; MAX_DIM]; sym_len(MAX_DIM)];
        for (ab, m) in ddg.iter_mut().enumerate().take(s) {
            *m = unpack(ab * s, idx, &hess);
        }
        let (rc, rm) = curvature_point(n, &gi, &dg, &ddg, with_norms);
        let mut rs = 0.0;
        for i in 0..n {
            for j in 0..n {
                rs += gi[i][j] * 0.5 * (rc[i][j] + rc[j][i]);
            }
        }
        scalar[idx] = rs;
        for i in 0..n {
            for j in i..n {
                ric[sym_index(n, i, j)][idx] = 0.5 * (rc[i][j] + rc[j][i]);
            }
        }
        if with_norms {
            // |Ric|² = tr(g⁻¹ Ric g⁻¹ Ric)
            let a = crate::grid::matmul(n, &gi, &rc);
            let mut rn = 0.0;
            for i in 0..n {
                for j in 0..n {
                    rn += a[i][j] * a[j][i];
                }
            }
            ric_norm[idx] = rn.max(0.0).sqrt();
            let gm = g.at(idx);
            let rm = rm.expect("full tensor requested with norms");
            let lowered = contract_slot(n, &rm, &gm, 0);
            let mut raised = rm;
            for slot in 1..4 {
                raised = contract_slot(n, &raised, &gi, slot);
            }
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for e in 0..n {
                            acc += lowered[a][b][c][e] * raised[a][b][c][e];
                        }
                    }
                }
            }
            rm_norm[idx] = acc.max(0.0).sqrt();
        }
    }
    let ricci = SymTensorField::new(grid, ric)?;
    let scalar = ScalarField::new(grid, scalar)?;
    let (ricci_norm, riemann_norm) = if with_norms {
        (Some(ScalarField::new(grid, ric_norm)?), Some(ScalarField::new(grid, rm_norm)?))
    } else {
        (None, None)
    };
    Ok(Curvature { ricci, scalar, ricci_norm, riemann_norm })
}

pub fn ricci(g: &SymTensorField, d: &Differentiator) -> Result<SymTensorField> {
    Ok(curvature(g, d, false)?.ricci)
}

pub fn scalar_curvature(g: &SymTensorField, d: &Differentiator) -> Result<ScalarField> {
    Ok(curvature(g, d, false)?.scalar)
}
