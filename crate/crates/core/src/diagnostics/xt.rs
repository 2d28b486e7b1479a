//! Discretized Koch–Lamm norm of a stored trajectory.

use super::{check_times, sublattice_centers, RadialConvolver};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grid::Differentiator;

/// Sampling of the suprema over radii and centres.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct XtConfig {
    /// Radii to sample; empty means a geometric ladder of ratio `√2` from four
    /// grid spacings up to `min(√t_last, box_length/4)`.
    pub radii: Vec<f64>,
    /// Centre indices; empty means the stride `resolution/8` sublattice.
    pub centers: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XtRadius {
    pub radius: f64,
    /// `sup_x R^{-n/2} ‖∇h‖_{L²(B_R(x) × (0,R²))}`.
    pub l2_term: f64,
    /// `sup_x R^{2/(n+4)} ‖∇h‖_{L^{n+4}(B_R(x) × (R²/2,R²))}`.
    pub lq_term: f64,
    /// Largest sum of both terms over centres.
    pub combined: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct XtReport {
    /// `sup_t ‖h_t‖_∞`.
    pub sup_term: f64,
    pub radii: Vec<XtRadius>,
    /// Radii dropped for having fewer than three slices in `(R²/2, R²)`.
    pub skipped: Vec<f64>,
    pub norm: f64,
}

/// `∫_a^b` of the piecewise-linear interpolant of `(times, values)`.
fn window_integral(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let at = |t: f64| {
        let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[k - 1], times[k]);
        values[k - 1] + (values[k] - values[k - 1]) * (t - t0) / (t1 - t0)
    };
    let mut knots = vec![a];
    knots.extend(times.iter().copied().filter(|&t| t > a && t < b));
    knots.push(b);
    knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (at(w[0]) + at(w[1]))).sum()
}

pub fn xt_norm(states: &[FlowState], cfg: &XtConfig, diff: &Differentiator) -> Result<XtReport> {
    if states.len() < 2 {
        return Err(Error::InsufficientData("the X_T norm needs at least two slices".into()));
    }
    let grid = *diff.grid();
    for s in states {
        grid.same_as(s.h.grid())?;
    }
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    check_times(&times)?;
    let t_last = times[times.len() - 1];
    let n = grid.dim() as f64;
    let q = n + 4.0;
    let r_max = t_last.sqrt().min(grid.box_length() / 4.0);
    let radii: Vec<f64> = if cfg.radii.is_empty() {
        std::iter::successors(Some(4.0 * grid.spacing()), |r| Some(r * std::f64::consts::SQRT_2))
            .take_while(|&r| r <= r_max * (1.0 + 1e-12))
            .collect()
    } else {
        for &r in &cfg.radii {
            if !(r > 0.0) || r * r > t_last * (1.0 + 1e-12) || 2.0 * r >= grid.box_length() / 2.0 {
                return Err(Error::arg("radii", format!("R = {r} needs 0 < R² ≤ {t_last} and 2R < box_length/2")));
            }
        }
        cfg.radii.clone()
    };
    let centers = if cfg.centers.is_empty() { sublattice_centers(&grid) } else { cfg.centers.clone() };

    let balls: Vec<RadialConvolver> =
        radii.iter().map(|&r| RadialConvolver::new(grid, move |d| if d <= r { 1.0 } else { 0.0 })).collect();
    // local[r][c][k]: ball integrals of |∇h|² and |∇h|^{n+4} at centre c, slice k.
    let mut l2 = vec![vec![vec![0.0; states.len()]; centers.len()]; radii.len()];
    let mut lq = l2.clone();
    let mut sup_term = 0.0f64;
    for (k, s) in states.iter().enumerate() {
        sup_term = sup_term.max(s.h.sup_norm());
        let g2 = diff.gradient_sym(&s.h)?.norm_squared();
        let gq: Vec<f64> = g2.iter().map(|v| v.powf(0.5 * q)).collect();
        for (ri, ball) in balls.iter().enumerate() {
            let a = ball.apply(&g2);
            let b = ball.apply(&gq);
            for (ci, &c) in centers.iter().enumerate() {
                l2[ri][ci][k] = a[c];
                lq[ri][ci][k] = b[c];
            }
        }
    }

    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        let r2 = r * r;
        let inside = times.iter().filter(|&&t| t > 0.5 * r2 && t < r2 * (1.0 + 1e-12)).count();
        if inside < 3 {
            skipped.push(r);
            continue;
        }
        let (mut best_l2, mut best_lq, mut best) = (0.0f64, 0.0f64, 0.0f64);
        for ci in 0..centers.len() {
            let a = r.powf(-0.5 * n) * window_integral(&times, &l2[ri][ci], times[0], r2).max(0.0).sqrt();
            let b = r.powf(2.0 / q) * window_integral(&times, &lq[ri][ci], 0.5 * r2, r2).max(0.0).powf(1.0 / q);
            best_l2 = best_l2.max(a);
            best_lq = best_lq.max(b);
            best = best.max(a + b);
        }
        out.push(XtRadius { radius: r, l2_term: best_l2, lq_term: best_lq, combined: best });
    }
    let norm = sup_term + out.iter().map(|x| x.combined).fold(0.0, f64::max);
    Ok(XtReport { sup_term, radii: out, skipped, norm })
}
