//! Recovering Ricci flow from a DeTurck trajectory by integrating
//! `∂_t Φ = X(Φ)` and pulling the metric back along `Φ`.

use super::FlowState;
use crate::error::{Error, Result};
use crate::geometry::{bianchi_vector, curvature, GeometryCache};
use crate::grid::{sym_index, Differentiator, GridSpec, Interpolator, Point, SymTensorField, VectorField, MAX_DIM};

#[derive(Clone, Debug)]
pub struct DiffeoOutcome {
    pub times: Vec<f64>,
    /// Pulled-back metrics `g̃ = Φ*g` (full metric, not the perturbation).
    pub metrics: Vec<SymTensorField>,
    /// `Φ_t(x) - x` at every grid point.
    pub displacements: Vec<VectorField>,
    pub warnings: Vec<String>,
}

fn in_core(grid: &GridSpec, p: &Point) -> bool {
    let c = grid.core_radius();
    p[..grid.dim()].iter().all(|v| v.abs() < c)
}

/// Integrate particles from every grid point through the velocity fields
/// `fields[k]` given at `times[k]`, linear in time between slices, with one
/// classical Runge-Kutta step per interval.
pub fn transport(grid: &GridSpec, times: &[f64], fields: &[VectorField]) -> Result<(Vec<VectorField>, Vec<String>)> {
    if times.len() != fields.len() || times.is_empty() {
        return Err(Error::arg("fields", "one velocity field per time slice is required"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::arg("times", "slice times must be strictly increasing"));
    }
    let n = grid.dim();
    let it = Interpolator::new(*grid);
    let dx = grid.spacing();
    let mut disp = vec![vec![0.0; grid.len()]; n];
    let mut out = vec![VectorField::new(*grid, disp.clone())?];
    let mut escaped = 0usize;
    let mut warnings = Vec::new();
    let starts: Vec<Point> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let started_in_core: Vec<bool> = starts.iter().map(|p| in_core(grid, p)).collect();
    let mut gone = vec![false; grid.len()];
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let (a, b) = (&fields[k], &fields[k + 1]);
        let vmax = a.sup_norm().max(b.sup_norm());
        if vmax * dt > dx {
            return Err(Error::Cfl(format!(
                "max|X|·Δt = {:.3e} exceeds the spacing {dx:.3e} at t = {:.4e}",
                vmax * dt,
                times[k]
            )));
        }
        let mid: Vec<Vec<f64>> =
            a.comps().iter().zip(b.comps()).map(|(x, y)| x.iter().zip(y).map(|(u, v)| 0.5 * (u + v)).collect()).collect();
        let velocity = |f: &[Vec<f64>], p: &Point| {
            let s = it.stencil(p);
            let mut v = [0.0; MAX_DIM];
            for (c, comp) in f.iter().enumerate() {
                v[c] = it.eval(&s, comp);
            }
            v
        };
        let shift = |p: &Point, v: &[f64; MAX_DIM], h: f64| {
            let mut q = *p;
            for c in 0..n {
                q[c] += h * v[c];
            }
            q
        };
        for idx in 0..grid.len() {
            let mut y = starts[idx];
            for c in 0..n {
                y[c] += disp[c][idx];
            }
            let k1 = velocity(a.comps(), &y);
            let k2 = velocity(&mid, &shift(&y, &k1, 0.5 * dt));
            let k3 = velocity(&mid, &shift(&y, &k2, 0.5 * dt));
            let k4 = velocity(b.comps(), &shift(&y, &k3, dt));
            for c in 0..n {
                disp[c][idx] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                y[c] = starts[idx][c] + disp[c][idx];
            }
            if started_in_core[idx] && !gone[idx] && !in_core(grid, &y) {
                gone[idx] = true;
                escaped += 1;
            }
        }
        out.push(VectorField::new(*grid, disp.clone())?);
    }
    if escaped > 0 {
        warnings.push(format!("{escaped} particles left the safe core (within box_length/8 of the cell boundary)"));
    }
    Ok((out, warnings))
}

/// `g̃_ij(x) = ∂_iΦ^a ∂_jΦ^b g_ab(Φ(x))` with `Φ(x) = x + disp(x)`.
pub fn pullback(g: &SymTensorField, disp: &VectorField, diff: &Differentiator) -> Result<SymTensorField> {
    let grid = *g.grid();
    grid.same_as(disp.grid())?;
    let n = grid.dim();
    let it = Interpolator::new(grid);
    // jac[i * n + a] = ∂_i disp^a
    let jac = diff.gradient_raw(disp.comps());
    let mut comps = vec![vec![0.0; grid.len()]; grid.sym_len()];
    for idx in 0..grid.len() {
        let mut y = grid.point(idx);
        for c in 0..n {
            y[c] += disp.comp(c)[idx];
        }
        let s = it.stencil(&y);
        let mut gy = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..n {
            for b in a..n {
                let v = it.eval(&s, g.comp(a, b));
                gy[a][b] = v;
                gy[b][a] = v;
            }
        }
        let mut j = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for a in 0..n {
                j[i][a] = jac[i * n + a][idx] + if i == a { 1.0 } else { 0.0 };
            }
        }
        for i in 0..n {
            for k in i..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += j[i][a] * j[k][b] * gy[a][b];
                    }
                }
                comps[sym_index(n, i, k)][idx] = acc;
            }
        }
    }
    SymTensorField::new(grid, comps)
}

/// Pull back the stored DeTurck states with `t ≥ t0` to a Ricci flow, with
/// `Φ_{t0} = id`.
pub fn diffeo_flow(states: &[FlowState], t0: f64, diff: &Differentiator) -> Result<DiffeoOutcome> {
    let used: Vec<&FlowState> = states.iter().filter(|s| s.t >= t0 - 1e-12).collect();
    if used.len() < 2 {
        return Err(Error::InsufficientData("at least two slices at or after t0 are required".into()));
    }
    let grid = *used[0].h.grid();
    let times: Vec<f64> = used.iter().map(|s| s.t).collect();
    let fields = used
        .iter()
        .map(|s| Ok(bianchi_vector(&GeometryCache::new(&s.h, diff)?)))
        .collect::<Result<Vec<_>>>()?;
    let (displacements, warnings) = transport(&grid, &times, &fields)?;
    let metrics = used
        .iter()
        .zip(&displacements)
        .map(|(s, d)| pullback(&s.h.add_identity(1.0), d, diff))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiffeoOutcome { times, metrics, displacements, warnings })
}

/// `sup|∂_t g̃ + 2 Ric(g̃)|` at every interior slice, with a centered time difference.
pub fn ricci_flow_residual(out: &DiffeoOutcome, diff: &Differentiator) -> Result<Vec<(f64, f64)>> {
    let mut res = Vec::new();
    for k in 1..out.metrics.len().saturating_sub(1) {
        let dt = out.times[k + 1] - out.times[k - 1];
        let ric = curvature(&out.metrics[k], diff, false)?.ricci;
        let r = out.metrics[k + 1].axpy(-1.0, &out.metrics[k - 1])?.scaled(1.0 / dt).axpy(2.0, &ric)?;
        res.push((out.times[k], r.sup_norm()));
    }
    Ok(res)
}
