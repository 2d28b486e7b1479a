//! `‖f‖_∞ ≤ C(n,p) ‖f‖_p^{p/(n+p)} ‖∇f‖_∞^{n/(n+p)}` for compactly supported `f`.

use std::f64::consts::PI;

use super::{check_p, lp_power, sup_norm, Magnitude};
use crate::error::{Error, Result};
use crate::grid::{Differentiator, GridSpec, ScalarField, SymTensorField};

/// Volume of the unit ball in `ℝⁿ`.
pub fn unit_ball_volume(n: usize) -> f64 {
    // π^{n/2} / Γ(n/2 + 1) via the two-step recursion ω_n = 2π/n ω_{n-2}.
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// `((p+1)⋯(p+n) / (ω_n n!))^{1/(n+p)}`.
pub fn interpolation_constant(n: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::arg("n", "dimension must be positive"));
    }
    let mut ratio = 1.0 / unit_ball_volume(n);
    for k in 1..=n {
        ratio *= (p + k as f64) / k as f64;
    }
    Ok(ratio.powf(1.0 / (n as f64 + p)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpolationReport {
    /// `‖f‖_∞`.
    pub lhs: f64,
    pub rhs: f64,
    pub constant_used: f64,
    pub holds: bool,
}

/// Reject fields that reach within four spacings of the cell faces.
fn check_support(grid: &GridSpec, mags: &[f64]) -> Result<()> {
    let scale = mags.iter().copied().fold(0.0, f64::max);
    let res = grid.resolution();
    for (i, &m) in mags.iter().enumerate() {
        if m <= 1e-12 * scale {
            continue;
        }
        let mi = grid.multi_index(i);
        if mi[..grid.dim()].iter().any(|&k| k < 4 || k + 4 >= res) {
            return Err(Error::arg("f", "support reaches the box boundary; the inequality is for ℝⁿ"));
        }
    }
    Ok(())
}

fn report(grid: &GridSpec, lhs: f64, lp: f64, grad_sup: f64, p: f64) -> Result<InterpolationReport> {
    let n = grid.dim() as f64;
    let c = interpolation_constant(grid.dim(), p)?;
    let rhs = c * lp.powf(1.0 / (n + p)) * grad_sup.powf(n / (n + p));
    Ok(InterpolationReport { lhs, rhs, constant_used: c, holds: lhs <= rhs * (1.0 + 1e-12) })
}

pub fn interpolation_check(f: &ScalarField, p: f64, diff: &Differentiator) -> Result<InterpolationReport> {
    check_p(p)?;
    let grid = *f.grid();
    check_support(&grid, &f.magnitudes())?;
    let grad = diff.gradient(f)?;
    report(&grid, sup_norm(f), lp_power(f, p)?, sup_norm(&grad), p)
}

/// Same check for `|h|`, using `|∇|h|| ≤ |∇h|` for the Lipschitz bound.
pub fn interpolation_check_tensor(h: &SymTensorField, p: f64, diff: &Differentiator) -> Result<InterpolationReport> {
    check_p(p)?;
    let grid = *h.grid();
    check_support(&grid, &h.magnitudes())?;
    let grad = diff.gradient_sym(h)?;
    report(&grid, sup_norm(h), lp_power(h, p)?, sup_norm(&grad), p)
}
