//! Quantities monitored along a trajectory: norms, local masses, space-time
//! gradient integrals, decay fits and the inequality checks built on them.

mod adm;
mod interpolation;
mod xt;

pub use adm::{adm_mass, gauss_legendre};
pub use interpolation::{
    interpolation_check, interpolation_check_tensor, interpolation_constant, unit_ball_volume, InterpolationReport,
};
pub use xt::{xt_norm, XtConfig, XtReport};

use std::io::Write;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::geometry::{curvature, div_q1, q0, rdt_rhs, GeometryCache};
use crate::grid::{
    sym_pair, DerivativeBackend, Differentiator, FftNd, GridSpec, ScalarField, SymGradient, SymTensorField,
    VectorField,
};

/// Pointwise size of a field: `|f|` for scalars, the Euclidean length for
/// vectors and the full-matrix Frobenius norm for tensors.
pub trait Magnitude {
    fn grid(&self) -> &GridSpec;
    fn magnitudes(&self) -> Vec<f64>;
}

impl Magnitude for ScalarField {
    fn grid(&self) -> &GridSpec {
        ScalarField::grid(self)
    }
    fn magnitudes(&self) -> Vec<f64> {
        self.values().iter().map(|v| v.abs()).collect()
    }
}

impl Magnitude for VectorField {
    fn grid(&self) -> &GridSpec {
        VectorField::grid(self)
    }
    fn magnitudes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid().len()];
        for c in self.comps() {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v * v;
            }
        }
        out.into_iter().map(f64::sqrt).collect()
    }
}

impl Magnitude for SymTensorField {
    fn grid(&self) -> &GridSpec {
        SymTensorField::grid(self)
    }
    fn magnitudes(&self) -> Vec<f64> {
        self.norm_squared().into_iter().map(f64::sqrt).collect()
    }
}

impl Magnitude for SymGradient {
    fn grid(&self) -> &GridSpec {
        SymGradient::grid(self)
    }
    fn magnitudes(&self) -> Vec<f64> {
        self.norm_squared().into_iter().map(f64::sqrt).collect()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::arg("p", format!("exponent must be a finite number ≥ 1, got {p}")));
    }
    Ok(())
}

/// `Σ |f|ᵖ · spacingⁿ`.
pub fn lp_power(f: &impl Magnitude, p: f64) -> Result<f64> {
    check_p(p)?;
    let dv = f.grid().cell_volume();
    Ok(f.magnitudes().iter().map(|m| m.powf(p)).sum::<f64>() * dv)
}

pub fn lp_norm(f: &impl Magnitude, p: f64) -> Result<f64> {
    Ok(lp_power(f, p)?.powf(1.0 / p))
}

pub fn sup_norm(f: &impl Magnitude) -> f64 {
    f.magnitudes().into_iter().fold(0.0, f64::max)
}

/// `ψ(u) = exp(-1/u)` and its first two derivatives.
fn psi(u: f64) -> (f64, f64, f64) {
    let e = (-1.0 / u).exp();
    let iu = 1.0 / u;
    (e, e * iu * iu, e * (iu.powi(4) - 2.0 * iu.powi(3)))
}

/// `σ(u) = ψ(u) / (ψ(u) + ψ(1-u))`, a C∞ step from 0 to 1 on `[0, 1]`,
/// with its first two derivatives.
pub(crate) fn smooth_step(u: f64) -> (f64, f64, f64) {
    if u <= 1e-3 {
        return (0.0, 0.0, 0.0);
    }
    if u >= 1.0 - 1e-3 {
        return (1.0, 0.0, 0.0);
    }
    let (a, a1, a2) = psi(u);
    let (b, b1, b2) = psi(1.0 - u);
    // d/du of ψ(1-u) flips the sign of odd derivatives
    let (bu, buu) = (-b1, b2);
    let d = a + b;
    let d1 = a1 + bu;
    let num = a1 * b - a * bu;
    let num1 = a2 * b - a * buu;
    (a / d, num / (d * d), (num1 * d - 2.0 * num * d1) / (d * d * d))
}

/// Radial cutoff `η(x) = s(2 - |x|/R)` with `s = σ²` and `σ` a C∞
/// smoothstep, so `η ≡ 1` on `B_R`, `η = 0` outside `B_{2R}` and `√η = σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    radius: f64,
}

impl Cutoff {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::arg("radius", format!("must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `(η, ∂_r η, ∂_r² η)` at distance `r` from the centre.
    pub fn radial(&self, r: f64) -> (f64, f64, f64) {
        let u = 2.0 - r / self.radius;
        if u >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        if u <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let (s, s1, s2) = smooth_step(u);
        let k = 1.0 / self.radius;
        (s * s, -2.0 * s * s1 * k, 2.0 * (s1 * s1 + s * s2) * k * k)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.radial(r).0
    }

    /// `Δη` in `n` dimensions.
    pub fn laplacian(&self, r: f64, n: usize) -> f64 {
        let (_, d1, d2) = self.radial(r);
        if d1 == 0.0 {
            return d2;
        }
        d2 + (n as f64 - 1.0) * d1 / r
    }

    /// `sup |∇√η| = σ'(1/2) / R`.
    pub fn sqrt_gradient_bound(&self) -> f64 {
        2.0 / self.radius
    }
}

/// Flat indices of the sublattice with stride `resolution / 8` used for
/// suprema over centres.
pub fn sublattice_centers(grid: &GridSpec) -> Vec<usize> {
    let stride = (grid.resolution() / 8).max(1);
    (0..grid.len())
        .filter(|&i| {
            let m = grid.multi_index(i);
            m[..grid.dim()].iter().all(|v| v % stride == 0)
        })
        .collect()
}

/// Periodic convolution with a radial kernel, `(k ∗ f)(x) = ∫ k(|x - y|) f(y) dy`.
#[derive(Clone, Debug)]
pub(crate) struct RadialConvolver {
    fft: FftNd,
    spectrum: Vec<Complex64>,
    dv: f64,
}

impl RadialConvolver {
    pub(crate) fn new(grid: GridSpec, kernel: impl Fn(f64) -> f64) -> Self {
        let fft = FftNd::new(grid);
        let base = grid.point(0);
        let k = grid.sample(|x| {
            let d = grid.displacement(x, &base);
            kernel(d[..grid.dim()].iter().map(|v| v * v).sum::<f64>().sqrt())
        });
        let spectrum = fft.forward_real(&k);
        Self { fft, spectrum, dv: grid.cell_volume() }
    }

    pub(crate) fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut s = self.fft.forward_real(f);
        for (v, k) in s.iter_mut().zip(&self.spectrum) {
            *v *= *k * self.dv;
        }
        self.fft.inverse_real(s)
    }
}

fn check_local_radius(grid: &GridSpec, radius: f64) -> Result<()> {
    if 2.0 * radius >= grid.box_length() / 2.0 {
        return Err(Error::arg(
            "radius",
            format!("2R = {} must stay below box_length/2 = {}", 2.0 * radius, grid.box_length() / 2.0),
        ));
    }
    Ok(())
}

fn powers(h: &SymTensorField, p: f64) -> Vec<f64> {
    h.norm_squared().into_iter().map(|s| s.powf(0.5 * p)).collect()
}

/// `A(t,R) = max_x ∫ η_{R,x} |h|ᵖ` over the given centres.
pub fn local_mass(h: &SymTensorField, p: f64, radius: f64, centers: &[usize]) -> Result<f64> {
    check_p(p)?;
    let grid = *h.grid();
    check_local_radius(&grid, radius)?;
    let eta = Cutoff::new(radius)?;
    let conv = RadialConvolver::new(grid, |r| eta.value(r));
    let m = conv.apply(&powers(h, p));
    Ok(centers.iter().map(|&c| m[c]).fold(0.0, f64::max))
}

/// Number of radius-1 balls used to cover the annulus `1 ≤ |x| ≤ 2`: the balls
/// circumscribe the cells of a cubic lattice of spacing `2/√n` that meet it.
pub fn annulus_cover_count(n: usize) -> usize {
    let s = 2.0 / (n as f64).sqrt();
    let reach = (3.0 / s).ceil() as i64 + 1;
    let side = (2 * reach + 1) as usize;
    let mut count = 0;
    for flat in 0..side.pow(n as u32) {
        let mut rest = flat;
        let (mut near, mut far) = (0.0, 0.0);
        for _ in 0..n {
            let c = (rest % side) as i64 - reach;
            rest /= side;
            let (lo, hi) = ((c as f64 - 0.5) * s, (c as f64 + 0.5) * s);
            let nearest = if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
            near += nearest * nearest;
            far += lo.abs().max(hi.abs()).powi(2);
        }
        if near.sqrt() <= 2.0 && far.sqrt() >= 1.0 {
            count += 1;
        }
    }
    count
}

/// `∫|∇h|²` by Parseval with the backend's first-derivative symbols.
pub fn grad_l2_squared(h: &SymTensorField, diff: &Differentiator) -> Result<f64> {
    let grid = *h.grid();
    grid.same_as(diff.grid())?;
    let n = grid.dim();
    let inputs: Vec<&[f64]> = h.comps().iter().map(|c| c.as_slice()).collect();
    let spectra = diff.fft().forward_many(&inputs);
    let mut k2 = vec![0.0; grid.len()];
    for a in 0..n {
        for (o, s) in k2.iter_mut().zip(diff.d1_symbol(a)) {
            *o += s * s;
        }
    }
    let mut total = 0.0;
    for (c, spec) in spectra.iter().enumerate() {
        let (i, j) = sym_pair(n, c);
        let w = if i == j { 1.0 } else { 2.0 };
        total += w * spec.iter().zip(&k2).map(|(v, k)| v.norm_sqr() * k).sum::<f64>();
    }
    Ok(total * grid.cell_volume() / grid.len() as f64)
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::arg("times", "sample times must be strictly increasing"));
    }
    Ok(())
}

/// Space-time gradient integral against its bound `2∫|h₀|ᵖ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientBound {
    /// Trapezoidal `∫₀ᵀ ∫|∇h|²`.
    pub integral: f64,
    /// `2∫|h₀|ᵖ`.
    pub bound: f64,
    /// `½∫|h₀|²`, the heat-equation value for `T → ∞`.
    pub linear_value: f64,
    pub holds: bool,
}

pub fn spacetime_grad_l2(states: &[FlowState], p: f64, diff: &Differentiator) -> Result<GradientBound> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::arg("p", format!("the gradient bound needs p in [1, 2], got {p}")));
    }
    let first = states.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    check_times(&times)?;
    let g = states.iter().map(|s| grad_l2_squared(&s.h, diff)).collect::<Result<Vec<_>>>()?;
    let integral = trapezoid(&times, &g);
    let bound = 2.0 * lp_power(&first.h, p)?;
    let linear_value = 0.5 * lp_power(&first.h, 2.0)?;
    Ok(GradientBound { integral, bound, linear_value, holds: integral <= bound })
}

/// One interior slice of [`barrier_monitor`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierStep {
    pub t: f64,
    pub sup_h: f64,
    /// Centred `d/dt ∫η|h|ᵖ`.
    pub dlp_dt: f64,
    /// `∫_{B_2R \ B_R} |h|ᵖ`.
    pub annulus_p: f64,
    /// `∫η|∇h|²`.
    pub grad_eta: f64,
    /// Centred `d/dt ∫η|h|²`.
    pub dl2_dt: f64,
    pub annulus_2: f64,
    /// `½∫Δη |h|²`.
    pub flux: f64,
    /// `∫η⟨h, Q₀ + ∇·Q₁⟩`.
    pub nonlinear: f64,
    /// `|½ d/dt ∫η|h|² + ∫η|∇h|² - flux - nonlinear|` relative to the largest term.
    pub imbalance: f64,
}

/// Local estimates around the origin with the smallest constants that make
/// them hold step by step.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierReport {
    pub p: f64,
    pub radius: f64,
    pub steps: Vec<BarrierStep>,
    /// `d/dt ∫η|h|ᵖ ≤ C₁(1+p)/R² ∫_annulus |h|ᵖ` (only for `p ≥ 2`).
    pub c1: Option<f64>,
    /// `d/dt ∫η|h|ᵖ ≤ C₂/R² ∫_annulus |h|ᵖ + C₂∫η|∇h|²` (only for `p ≤ 2`).
    pub c2: Option<f64>,
    /// `½ d/dt ∫η|h|² ≤ (-½ + C₃ sup|h|) ∫η|∇h|² + C₃/R² ∫_annulus |h|²`.
    pub c3: f64,
    pub max_imbalance: f64,
}

fn fitted(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

pub fn barrier_monitor(states: &[FlowState], p: f64, radius: f64, diff: &Differentiator) -> Result<BarrierReport> {
    check_p(p)?;
    if states.len() < 3 {
        return Err(Error::InsufficientData("centred differences need at least three slices".into()));
    }
    let grid = *states[0].h.grid();
    grid.same_as(diff.grid())?;
    check_local_radius(&grid, radius)?;
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    check_times(&times)?;
    let n = grid.dim();
    let dv = grid.cell_volume();
    let eta = Cutoff::new(radius)?;
    let origin = [0.0; crate::grid::MAX_DIM];
    let r: Vec<f64> = (0..grid.len()).map(|i| grid.distance(&grid.point(i), &origin)).collect();
    let w: Vec<f64> = r.iter().map(|&x| eta.value(x)).collect();
    let lap: Vec<f64> = r.iter().map(|&x| eta.laplacian(x, n)).collect();
    let ring: Vec<bool> = r.iter().map(|&x| x >= radius && x <= 2.0 * radius).collect();
    let weighted = |f: &[f64], wt: &[f64]| f.iter().zip(wt).map(|(a, b)| a * b).sum::<f64>() * dv;
    let annulus = |f: &[f64]| f.iter().zip(&ring).filter(|(_, &m)| m).map(|(a, _)| a).sum::<f64>() * dv;

    let mut lp = Vec::with_capacity(states.len());
    let mut l2 = Vec::with_capacity(states.len());
    for s in states {
        let sq = s.h.norm_squared();
        let pw: Vec<f64> = sq.iter().map(|v| v.powf(0.5 * p)).collect();
        lp.push(weighted(&pw, &w));
        l2.push(weighted(&sq, &w));
    }
    let mut steps = Vec::new();
    for k in 1..states.len() - 1 {
        let s = &states[k];
        let dt = times[k + 1] - times[k - 1];
        let sq = s.h.norm_squared();
        let pw: Vec<f64> = sq.iter().map(|v| v.powf(0.5 * p)).collect();
        let cache = GeometryCache::new(&s.h, diff)?;
        let grad = cache.grad_h().norm_squared();
        let nl = q0(&cache).axpy(1.0, &div_q1(&cache))?;
        let mut inner = vec![0.0; grid.len()];
        for (c, (hc, nc)) in s.h.comps().iter().zip(nl.comps()).enumerate() {
            let (i, j) = sym_pair(n, c);
            let f = if i == j { 1.0 } else { 2.0 };
            for ((o, a), b) in inner.iter_mut().zip(hc).zip(nc) {
                *o += f * a * b;
            }
        }
        let dl2_dt = (l2[k + 1] - l2[k - 1]) / dt;
        let grad_eta = weighted(&grad, &w);
        let flux = 0.5 * weighted(&sq, &lap);
        let nonlinear = weighted(&inner, &w);
        let gap = (0.5 * dl2_dt + grad_eta - flux - nonlinear).abs();
        let scale = (0.5 * dl2_dt.abs()).max(grad_eta).max(flux.abs()).max(nonlinear.abs());
        steps.push(BarrierStep {
            t: s.t,
            sup_h: s.h.sup_norm(),
            dlp_dt: (lp[k + 1] - lp[k - 1]) / dt,
            annulus_p: annulus(&pw),
            grad_eta,
            dl2_dt,
            annulus_2: annulus(&sq),
            flux,
            nonlinear,
            imbalance: if scale > 0.0 { gap / scale } else { 0.0 },
        });
    }
    let r2 = radius * radius;
    let c1 = (p >= 2.0)
        .then(|| steps.iter().map(|s| fitted(s.dlp_dt, (1.0 + p) / r2 * s.annulus_p)).fold(0.0, f64::max));
    let c2 = (p <= 2.0)
        .then(|| steps.iter().map(|s| fitted(s.dlp_dt, s.annulus_p / r2 + s.grad_eta)).fold(0.0, f64::max));
    let c3 = steps
        .iter()
        .map(|s| fitted(0.5 * s.dl2_dt + 0.5 * s.grad_eta, s.sup_h * s.grad_eta + s.annulus_2 / r2))
        .fold(0.0, f64::max);
    let max_imbalance = steps.iter().map(|s| s.imbalance).fold(0.0, f64::max);
    Ok(BarrierReport { p, radius, steps, c1, c2, c3, max_imbalance })
}

/// Outcome of comparing `u(t)` with `n(t) exp(∫f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GronwallReport {
    pub holds: bool,
    /// `max (u - bound) / bound`, zero when the bound holds everywhere.
    pub max_violation: f64,
}

/// Check the conclusion `u(t) ≤ n(t) exp(∫_{t₀}^t f)` of Grönwall's lemma
/// with trapezoidal quadrature of `∫f`.
pub fn gronwall_check(times: &[f64], u: &[f64], n_fn: &[f64], f: &[f64]) -> Result<GronwallReport> {
    if u.len() != times.len() || n_fn.len() != times.len() || f.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "series lengths {} / {} / {} differ from {} times",
            u.len(),
            n_fn.len(),
            f.len(),
            times.len()
        )));
    }
    check_times(times)?;
    if n_fn.iter().any(|&v| !(v > 0.0)) || n_fn.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::arg("n", "must be positive and nondecreasing"));
    }
    if u.iter().chain(f).any(|&v| !(v >= 0.0)) {
        return Err(Error::arg("u, f", "must be nonnegative"));
    }
    let mut integral = 0.0;
    let mut worst = 0.0f64;
    for k in 0..times.len() {
        if k > 0 {
            integral += 0.5 * (times[k] - times[k - 1]) * (f[k] + f[k - 1]);
        }
        let bound = n_fn[k] * integral.exp();
        worst = worst.max((u[k] - bound) / bound);
    }
    let max_violation = worst.max(0.0);
    Ok(GronwallReport { holds: max_violation <= 1e-12, max_violation })
}

/// Least-squares power law `y ≈ c tᵃ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Fit `log y` against `log t` over the samples with `t` in `window`.
pub fn decay_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::GridMismatch(format!("{} times but {} values", times.len(), values.len())));
    }
    let inside = |t: f64| t >= window.0 && t <= window.1;
    let pts: Vec<(f64, f64)> = times.iter().zip(values).filter(|(&t, _)| inside(t)).map(|(&t, &v)| (t, v)).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!("{} samples in the fit window, at least 10 needed", pts.len())));
    }
    // a window edge counts as covered when samples lie on both sides of it
    let lo = if times.iter().any(|&t| t < window.0) { window.0 } else { pts[0].0 };
    let hi = if times.iter().any(|&t| t > window.1) { window.1 } else { pts[pts.len() - 1].0 };
    if !(lo > 0.0) || hi < 10.0 * lo * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!("fit window [{lo}, {hi}] spans less than one decade")));
    }
    if let Some(&(t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::arg("values", format!("nonpositive value {v} at t = {t}")));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 1e-24 * (1.0 + my * my) * m { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit { exponent: slope, prefactor: icpt.exp(), r2, samples: pts.len() })
}

/// Fitted decay of `sup|∇^α ∂_t^k h|` for one order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeDecay {
    pub alpha: usize,
    pub k: usize,
    /// `-n/(2p) - |α|/2 - k`.
    pub expected: f64,
    /// `None` when the quantity vanishes identically (not applicable).
    pub fit: Option<DecayFit>,
}

/// Orders `(|α|, k)` covered by [`derivative_decay_check`].
pub const DECAY_ORDERS: [(usize, usize); 5] = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)];

/// Time derivatives are taken from the flow's right-hand side.
pub fn derivative_decay_check(
    states: &[FlowState],
    p: f64,
    diff: &Differentiator,
    window: (f64, f64),
) -> Result<Vec<DerivativeDecay>> {
    check_p(p)?;
    let used: Vec<&FlowState> = states.iter().filter(|s| s.t >= window.0 && s.t <= window.1).collect();
    let n = diff.grid().dim() as f64;
    let mut sups = vec![Vec::with_capacity(used.len()); DECAY_ORDERS.len()];
    for s in &used {
        let cache = GeometryCache::new(&s.h, diff)?;
        let rhs = rdt_rhs(&cache);
        let second = diff.hessian_raw(s.h.comps());
        let grad_rhs = diff.gradient_sym(&rhs)?;
        sups[0].push(s.h.sup_norm());
        sups[1].push(cache.grad_h().sup_norm());
        sups[2].push(hessian_sup(diff.grid(), &second));
        sups[3].push(rhs.sup_norm());
        sups[4].push(grad_rhs.sup_norm());
    }
    let times: Vec<f64> = used.iter().map(|s| s.t).collect();
    let scale = sups[0].iter().copied().fold(0.0, f64::max);
    DECAY_ORDERS
        .iter()
        .zip(sups)
        .map(|(&(alpha, k), v)| {
            let expected = -n / (2.0 * p) - alpha as f64 / 2.0 - k as f64;
            let negligible = v.iter().all(|&x| x <= 1e-13 * scale.max(f64::MIN_POSITIVE));
            let fit = if negligible && (alpha, k) != (0, 0) { None } else { Some(decay_fit(&times, &v, window)?) };
            Ok(DerivativeDecay { alpha, k, expected, fit })
        })
        .collect()
}

/// `sup √(Σ_ab Σ_ij (∂_a∂_b h_ij)²)` from [`Differentiator::hessian_raw`] output.
fn hessian_sup(grid: &GridSpec, hess: &[Vec<f64>]) -> f64 {
    let n = grid.dim();
    let s = grid.sym_len();
    let mut acc = vec![0.0; grid.len()];
    for (slot, comp) in hess.iter().enumerate() {
        let (a, b) = sym_pair(n, slot / s);
        let (i, j) = sym_pair(n, slot % s);
        let w = (if a == b { 1.0 } else { 2.0 }) * (if i == j { 1.0 } else { 2.0 });
        for (o, v) in acc.iter_mut().zip(comp) {
            *o += w * v * v;
        }
    }
    acc.into_iter().fold(0.0, f64::max).sqrt()
}

/// What [`SeriesBuilder`] records.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsConfig {
    /// Exponents for `‖h‖_p`; the first one is also used for `A(t,R)`.
    pub p_list: Vec<f64>,
    /// Radii for `A(t,R)`.
    pub radii: Vec<f64>,
    /// Full records (curvature, local masses) every this many steps.
    pub every: usize,
    pub backend: DerivativeBackend,
    /// Restrict `min_R`, `max_R` to the origin ball of this radius.
    pub curvature_radius: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { p_list: vec![1.0], radii: Vec::new(), every: 1, backend: DerivativeBackend::default(), curvature_radius: None }
    }
}

/// Cheap quantities tracked at every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub sup_h: f64,
    pub l2_h: f64,
    pub grad_l2: f64,
    pub grad_l2_cumulative: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step_index: usize,
    pub sup_h: f64,
    pub l1_h: f64,
    pub l2_h: f64,
    /// `‖h‖_p` for each configured `p`.
    pub lp_h: Vec<f64>,
    pub min_r: f64,
    pub max_r: f64,
    /// `∫|R|`.
    pub l1_r: f64,
    pub grad_l2_cumulative: f64,
    /// `A(t,R)` for each configured radius.
    pub a_r: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSeries {
    pub p_list: Vec<f64>,
    pub radii: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSeries {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "sup_h", "l1_h", "l2_h", "lp_h"].iter().map(|s| s.to_string()).collect();
        h.extend((2..=self.p_list.len()).map(|k| format!("lp_h_{k}")));
        h.extend(["min_R", "max_R", "l1_R", "grad_l2_cum"].iter().map(|s| s.to_string()));
        h.extend((1..=self.radii.len()).map(|k| format!("A_R{k}")));
        h
    }

    /// One row per full record; floats in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.records {
            let mut row = vec![r.t, r.sup_h, r.l1_h, r.l2_h];
            row.extend(&r.lp_h);
            row.extend([r.min_r, r.max_r, r.l1_r, r.grad_l2_cumulative]);
            row.extend(&r.a_r);
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accumulates a [`DiagnosticsSeries`] from states fed in time order.
pub struct SeriesBuilder {
    cfg: DiagnosticsConfig,
    grid: GridSpec,
    diff: Differentiator,
    centers: Vec<usize>,
    masses: Vec<RadialConvolver>,
    core: Option<Vec<bool>>,
    series: DiagnosticsSeries,
    last_index: Option<usize>,
}

impl SeriesBuilder {
    pub fn new(grid: GridSpec, cfg: DiagnosticsConfig) -> Result<Self> {
        if cfg.p_list.is_empty() {
            return Err(Error::config("p_list", "at least one exponent is required"));
        }
        for &p in &cfg.p_list {
            check_p(p)?;
        }
        if cfg.every == 0 {
            return Err(Error::config("every", "record stride must be positive"));
        }
        let masses = cfg
            .radii
            .iter()
            .map(|&r| {
                check_local_radius(&grid, r)?;
                let eta = Cutoff::new(r)?;
                Ok(RadialConvolver::new(grid, move |x| eta.value(x)))
            })
            .collect::<Result<Vec<_>>>()?;
        let origin = [0.0; crate::grid::MAX_DIM];
        let core = cfg
            .curvature_radius
            .map(|rad| (0..grid.len()).map(|i| grid.distance(&grid.point(i), &origin) <= rad).collect());
        let series =
            DiagnosticsSeries { p_list: cfg.p_list.clone(), radii: cfg.radii.clone(), steps: Vec::new(), records: Vec::new() };
        Ok(Self {
            diff: Differentiator::new(grid, cfg.backend),
            centers: sublattice_centers(&grid),
            grid,
            cfg,
            masses,
            core,
            series,
            last_index: None,
        })
    }

    pub fn observe(&mut self, s: &FlowState) -> Result<()> {
        self.grid.same_as(s.h.grid())?;
        let grad_l2 = grad_l2_squared(&s.h, &self.diff)?;
        let cumulative = match self.series.steps.last() {
            Some(prev) if s.t > prev.t => prev.grad_l2_cumulative + 0.5 * (s.t - prev.t) * (prev.grad_l2 + grad_l2),
            Some(_) => return Err(Error::arg("state", "states must be fed in increasing time order")),
            None => 0.0,
        };
        self.series.steps.push(StepRecord {
            t: s.t,
            sup_h: s.h.sup_norm(),
            l2_h: lp_norm(&s.h, 2.0)?,
            grad_l2,
            grad_l2_cumulative: cumulative,
        });
        if s.step_index % self.cfg.every == 0 {
            self.record(s)?;
        }
        Ok(())
    }

    fn record(&mut self, s: &FlowState) -> Result<()> {
        let step = *self.series.steps.last().expect("observe pushes a step first");
        let curv = curvature(&s.h.add_identity(1.0), &self.diff, false)?;
        let r = curv.scalar.values();
        let in_core = |i: &usize| self.core.as_ref().map_or(true, |c| c[*i]);
        let (min_r, max_r) = (0..r.len())
            .filter(in_core)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| (lo.min(r[i]), hi.max(r[i])));
        let p0 = self.cfg.p_list[0];
        let pw = powers(&s.h, p0);
        let a_r = self.masses.iter().map(|m| {
            let conv = m.apply(&pw);
            self.centers.iter().map(|&c| conv[c]).fold(0.0, f64::max)
        });
        let rec = DiagnosticsRecord {
            t: s.t,
            step_index: s.step_index,
            sup_h: step.sup_h,
            l1_h: lp_norm(&s.h, 1.0)?,
            l2_h: step.l2_h,
            lp_h: self.cfg.p_list.iter().map(|&p| lp_norm(&s.h, p)).collect::<Result<_>>()?,
            min_r,
            max_r,
            l1_r: lp_norm(&curv.scalar, 1.0)?,
            grad_l2_cumulative: step.grad_l2_cumulative,
            a_r: a_r.collect(),
        };
        self.series.records.push(rec);
        self.last_index = Some(s.step_index);
        Ok(())
    }

    /// Close the series, adding a full record for `last` if it was skipped.
    pub fn finish(mut self, last: &FlowState) -> Result<DiagnosticsSeries> {
        if self.last_index != Some(last.step_index) {
            if self.series.steps.last().map(|s| s.t) != Some(last.t) {
                self.observe(last)?;
            }
            if self.last_index != Some(last.step_index) {
                self.record(last)?;
            }
        }
        Ok(self.series)
    }
}
