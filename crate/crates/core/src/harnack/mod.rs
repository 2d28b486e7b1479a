//! L-length and reduced distance on an evolving background, heat-kernel
//! lower bounds, and the curvature probes built on them.

mod kernel;
mod rigidity;

pub use kernel::{kernel_lower_bound_check, write_probe_csv, KernelConfig, KernelReport, Probe, ProbeResult};
pub use rigidity::{borderline_l1_check, rigidity_probe, BorderlineEntry, BorderlineReport, RigidityReport, Verdict};

use crate::diagnostics::{decay_fit, lp_norm, DecayFit};
use crate::error::{Error, Result};
use crate::flow::{DiffeoOutcome, FlowState};
use crate::geometry::curvature;
use crate::grid::{Differentiator, GridSpec, Interpolator, Mat, Point, SymTensorField, MAX_DIM};

/// Metric slices `g̃_t` with their scalar curvature, interpolated cubically in
/// space and linearly in time.
#[derive(Clone, Debug)]
pub struct Background {
    grid: GridSpec,
    times: Vec<f64>,
    metrics: Vec<SymTensorField>,
    scalar: Vec<Vec<f64>>,
    lambda: f64,
    interp: Interpolator,
}

impl Background {
    /// `metrics` are full metrics; `p` fixes `λ = n/(2p)`.
    pub fn new(times: Vec<f64>, metrics: Vec<SymTensorField>, p: f64, diff: &Differentiator) -> Result<Self> {
        if times.is_empty() || times.len() != metrics.len() {
            return Err(Error::arg("metrics", "one metric slice per time is required"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("times", "background slices must be strictly increasing in time"));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::arg("p", format!("exponent must be ≥ 1, got {p}")));
        }
        let grid = *diff.grid();
        let scalar = metrics
            .iter()
            .map(|g| {
                grid.same_as(g.grid())?;
                Ok(curvature(g, diff, false)?.scalar.into_values())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            times,
            metrics,
            scalar,
            lambda: grid.dim() as f64 / (2.0 * p),
            interp: Interpolator::new(grid),
        })
    }

    /// Euclidean metric held fixed on `[t_start, t_end]`.
    pub fn flat(grid: GridSpec, t_start: f64, t_end: f64, p: f64) -> Result<Self> {
        let g = SymTensorField::zeros(grid).add_identity(1.0);
        let diff = Differentiator::new(grid, Default::default());
        Self::new(vec![t_start, t_end], vec![g.clone(), g], p, &diff)
    }

    pub fn from_diffeo(out: &DiffeoOutcome, p: f64, diff: &Differentiator) -> Result<Self> {
        Self::new(out.times.clone(), out.metrics.clone(), p, diff)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn metrics(&self) -> &[SymTensorField] {
        &self.metrics
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Slice index `k` and weight `θ` with `t = (1-θ) t_k + θ t_{k+1}`.
    pub(crate) fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (first, last) = (self.times[0], self.times[self.times.len() - 1]);
        let tol = 1e-12 * (1.0 + last.abs());
        if t < first - tol || t > last + tol {
            return Err(Error::arg("t", format!("time {t} outside the background range [{first}, {last}]")));
        }
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1) - 1;
        let th = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Ok((k, th))
    }

    /// `(R, g)` at `(x, t)`.
    pub fn sample(&self, x: &Point, t: f64) -> Result<(f64, Mat)> {
        let (k, th) = self.bracket(t)?;
        let st = self.interp.stencil(x);
        let n = self.grid.dim();
        let at = |j: usize| {
            let mut g = [[0.0; MAX_DIM]; MAX_DIM];
            for a in 0..n {
                for b in a..n {
                    let v = self.interp.eval(&st, self.metrics[j].comp(a, b));
                    g[a][b] = v;
                    g[b][a] = v;
                }
            }
            (self.interp.eval(&st, &self.scalar[j]), g)
        };
        let (r0, g0) = at(k);
        if th == 0.0 || k + 1 == self.times.len() {
            return Ok((r0, g0));
        }
        let (r1, g1) = at(k + 1);
        let mut g = g0;
        for a in 0..n {
            for b in 0..n {
                g[a][b] = (1.0 - th) * g0[a][b] + th * g1[a][b];
            }
        }
        Ok(((1.0 - th) * r0 + th * r1, g))
    }
}

/// Curve `γ: [s, t] → ℝⁿ` through `nodes.len()` positions at uniform times,
/// from `γ(s) = y` to `γ(t) = x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeCurve {
    pub s: f64,
    pub t: f64,
    pub nodes: Vec<Point>,
}

impl SpaceTimeCurve {
    /// Straight line with node times uniform in `√(t - t')`, which resolves the
    /// `√(t - t')` behavior of minimizers near `x`.
    pub fn straight(x: Point, t: f64, y: Point, s: f64, segments: usize) -> Result<Self> {
        if !(t > s) {
            return Err(Error::arg("t", format!("need t > s, got t = {t}, s = {s}")));
        }
        if segments < 8 {
            return Err(Error::arg("segments", format!("at least 8 segments, got {segments}")));
        }
        let nodes = (0..=segments)
            .map(|k| {
                let a = node_fraction(k, segments);
                let mut p = [0.0; MAX_DIM];
                for i in 0..MAX_DIM {
                    p[i] = (1.0 - a) * y[i] + a * x[i];
                }
                p
            })
            .collect();
        Ok(Self { s, t, nodes })
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Time of node `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.s + (self.t - self.s) * node_fraction(k, self.segments())
    }

    /// Length of segment `k` in time.
    fn step(&self, k: usize) -> f64 {
        self.time(k + 1) - self.time(k)
    }

    /// `∫ √(t - t') dt'` over each segment, exact.
    fn weights(&self) -> Vec<f64> {
        (0..self.segments())
            .map(|k| {
                let hi = (self.t - self.time(k)).max(0.0);
                let lo = (self.t - self.time(k + 1)).max(0.0);
                2.0 / 3.0 * (hi.powf(1.5) - lo.powf(1.5))
            })
            .collect()
    }
}

/// `(t_k - s) / (t - s)` for node times with `√(t - t_k)` uniform.
fn node_fraction(k: usize, segments: usize) -> f64 {
    let u = 1.0 - k as f64 / segments as f64;
    1.0 - u * u
}

fn check_core(bg: &Background, nodes: &[Point]) -> Result<()> {
    let core = bg.grid.core_radius();
    let n = bg.grid.dim();
    for p in nodes {
        if p[..n].iter().map(|v| v * v).sum::<f64>().sqrt() > core {
            return Err(Error::arg("curve", format!("node {:?} leaves the box core of radius {core}", &p[..n])));
        }
    }
    Ok(())
}

/// Per-segment `(R, g)` at the segment midpoint in space and time.
fn segment_terms(curve: &SpaceTimeCurve, bg: &Background, k: usize) -> Result<(f64, Mat, Point)> {
    let n = bg.grid.dim();
    let dt = curve.step(k);
    let (a, b) = (&curve.nodes[k], &curve.nodes[k + 1]);
    let mut mid = [0.0; MAX_DIM];
    let mut d = [0.0; MAX_DIM];
    for i in 0..n {
        mid[i] = 0.5 * (a[i] + b[i]);
        d[i] = (b[i] - a[i]) / dt;
    }
    let (r, g) = bg.sample(&mid, curve.time(k) + 0.5 * dt)?;
    Ok((r, g, d))
}

fn quad(n: usize, g: &Mat, v: &Point) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[i][j] * v[i] * v[j];
        }
    }
    acc
}

/// `∫_s^t √(t - t') (R(γ, t') + |γ̇|²_{g(t')}) dt'` by the midpoint rule with
/// the `√(t - t')` weight integrated exactly on each segment.
pub fn l_length(curve: &SpaceTimeCurve, bg: &Background) -> Result<f64> {
    check_core(bg, &curve.nodes)?;
    let n = bg.grid.dim();
    curve
        .weights()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let (r, g, d) = segment_terms(curve, bg, k)?;
            Ok(w * (r + quad(n, &g, &d)))
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMode {
    StraightLine,
    Optimize,
}

/// Settings for [`reduced_distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveSettings {
    pub segments: usize,
    pub max_iters: usize,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self { segments: 1024, max_iters: 500 }
    }
}

/// Reduced distance with the curve actually used.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDistance {
    pub straight: f64,
    /// Equals `straight` in straight-line mode.
    pub value: f64,
    pub iterations: usize,
    pub curve: SpaceTimeCurve,
}

/// `∂/∂x` of `(R, g)` at `(x, t)` by central differences of the interpolant.
fn sample_gradient(bg: &Background, x: &Point, t: f64) -> Result<([f64; MAX_DIM], [Mat; MAX_DIM])> {
    let n = bg.grid.dim();
    let h = 1e-3 * bg.grid.spacing();
    let mut dr = [0.0; MAX_DIM];
    let mut dg = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for a in 0..n {
        let (mut xp, mut xm) = (*x, *x);
        xp[a] += h;
        xm[a] -= h;
        let (rp, gp) = bg.sample(&xp, t)?;
        let (rm, gm) = bg.sample(&xm, t)?;
        dr[a] = (rp - rm) / (2.0 * h);
        for i in 0..n {
            for j in 0..n {
                dg[a][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
            }
        }
    }
    Ok((dr, dg))
}

/// Solve a symmetric tridiagonal system in place (Thomas algorithm).
fn thomas(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut b = diag[0];
    rhs[0] /= b;
    for i in 1..m {
        c[i - 1] = off[i - 1] / b;
        b = diag[i] - off[i - 1] * c[i - 1];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / b;
    }
    for i in (0..m - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

fn gradient(curve: &SpaceTimeCurve, bg: &Background, w: &[f64]) -> Result<Vec<Point>> {
    let n = bg.grid.dim();
    let m = curve.segments();
    let mut grad = vec![[0.0; MAX_DIM]; m + 1];
    for k in 0..m {
        let dt = curve.step(k);
        let (_, g, d) = segment_terms(curve, bg, k)?;
        let mut mid = [0.0; MAX_DIM];
        for i in 0..n {
            mid[i] = 0.5 * (curve.nodes[k][i] + curve.nodes[k + 1][i]);
        }
        let (dr, dg) = sample_gradient(bg, &mid, curve.time(k) + 0.5 * dt)?;
        for a in 0..n {
            let gd: f64 = (0..n).map(|j| g[a][j] * d[j]).sum();
            // d/dP of |P_{k+1} - P_k|²_g / dt² and of the midpoint samples
            let pos = 0.5 * (dr[a] + quad(n, &dg[a], &d));
            grad[k][a] += w[k] * (pos - 2.0 * gd / dt);
            grad[k + 1][a] += w[k] * (pos + 2.0 * gd / dt);
        }
    }
    Ok(grad)
}

/// `l_{(x,t)}(y,s) = L(γ) / (2√(t-s))` for the straight line, or the smaller
/// of that and a preconditioned gradient descent over interior nodes.
pub fn reduced_distance(
    x: Point,
    t: f64,
    y: Point,
    s: f64,
    bg: &Background,
    mode: DistanceMode,
    settings: CurveSettings,
) -> Result<ReducedDistance> {
    let line = SpaceTimeCurve::straight(x, t, y, s, settings.segments)?;
    let scale = 1.0 / (2.0 * (t - s).sqrt());
    let l_line = l_length(&line, bg)?;
    let straight = l_line * scale;
    if mode == DistanceMode::StraightLine {
        return Ok(ReducedDistance { straight, value: straight, iterations: 0, curve: line });
    }
    let n = bg.grid.dim();
    let m = line.segments();
    let w = line.weights();
    // flat-space Hessian in each coordinate: tridiagonal over interior nodes
    let c: Vec<f64> = (0..m).map(|k| 2.0 * w[k] / line.step(k).powi(2)).collect();
    let diag: Vec<f64> = (1..m).map(|j| c[j - 1] + c[j]).collect();
    let off: Vec<f64> = (1..m - 1).map(|j| -c[j]).collect();
    let mut curve = line.clone();
    let mut value = l_line;
    let mut alpha = 1.0;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        iterations += 1;
        let grad = gradient(&curve, bg, &w)?;
        let mut dir = vec![[0.0; MAX_DIM]; m + 1];
        for a in 0..n {
            let mut rhs: Vec<f64> = (1..m).map(|j| grad[j][a]).collect();
            thomas(&diag, &off, &mut rhs);
            for (j, v) in rhs.into_iter().enumerate() {
                dir[j + 1][a] = v;
            }
        }
        let mut accepted = false;
        while alpha > 1e-10 {
            let mut trial = curve.clone();
            for (p, d) in trial.nodes.iter_mut().zip(&dir) {
                for a in 0..n {
                    p[a] -= alpha * d[a];
                }
            }
            match l_length(&trial, bg) {
                Ok(v) if v < value => {
                    let gain = value - v;
                    curve = trial;
                    value = v;
                    accepted = gain > 1e-14 * value.abs().max(1e-300);
                    alpha = (2.0 * alpha).min(1.0);
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }
    let opt = value * scale;
    if opt < straight {
        Ok(ReducedDistance { straight, value: opt, iterations, curve })
    } else {
        Ok(ReducedDistance { straight, value: straight, iterations, curve: line })
    }
}

/// Curvature-decay, bilipschitz and kernel constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarnackConstants {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub lambda: f64,
    pub t0: f64,
    /// `‖h₀‖_p`.
    pub lp_norm: f64,
    /// Measured `sup|h|` used for the metric-equivalence factor.
    pub epsilon: f64,
}

impl HarnackConstants {
    /// `C₃ = 2C₂‖h₀‖_p / (λ t₀^λ)`, `C₄ = e^{-C₃/4}`, `C₅ = e^{C₃}(1 + nε)/3`.
    pub fn from_c2(c2: f64, lp_norm: f64, lambda: f64, t0: f64, n: usize, epsilon: f64) -> Result<Self> {
        if !(c2 >= 0.0 && lp_norm >= 0.0 && lambda > 0.0 && t0 > 0.0 && epsilon >= 0.0) {
            return Err(Error::arg("constants", "need C₂, ‖h₀‖_p, ε ≥ 0 and λ, t₀ > 0"));
        }
        let c3 = 2.0 * c2 * lp_norm / (lambda * t0.powf(lambda));
        let c4 = (-c3 / 4.0).exp();
        let c5 = c3.exp() * (1.0 + n as f64 * epsilon) / 3.0;
        let out = Self { c2, c3, c4, c5, lambda, t0, lp_norm, epsilon };
        assert!((out.c4 - (-out.c3 / 4.0).exp()).abs() <= 1e-15 * out.c4.max(1.0));
        if !(c3.is_finite() && c4 > 0.0 && c5.is_finite() && c5 > 0.0) {
            return Err(Error::arg("constants", format!("derived constants are not finite and positive: {out:?}")));
        }
        Ok(out)
    }
}

/// Result of [`measure_c2`].
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureDecay {
    /// Smallest `C₂` with `max(|R|, |Rc|, |Rm|) ≤ C₂‖h₀‖_p / t^{1+λ}` for `t ≥ t₀`.
    pub c2: f64,
    pub lp_norm: f64,
    pub lambda: f64,
    pub times: Vec<f64>,
    /// `sup_x max(|R|, |Rc|, |Rm|)` at each time.
    pub curvature_sup: Vec<f64>,
    /// Power-law fit of `curvature_sup`, when the series is nonzero.
    pub fit: Option<DecayFit>,
}

/// Measure `C₂` on states at `t ≥ t₀`; `h₀` is the first state. Curvature
/// norms are invariant under the diffeomorphisms relating the two flows.
pub fn measure_c2(states: &[FlowState], p: f64, t0: f64, diff: &Differentiator) -> Result<CurvatureDecay> {
    let first = states.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    if !(t0 > 0.0) {
        return Err(Error::arg("t0", format!("must be positive, got {t0}")));
    }
    let used: Vec<&FlowState> = states.iter().filter(|s| s.t >= t0 * (1.0 - 1e-12)).collect();
    let t_last = used.last().map_or(0.0, |s| s.t);
    if used.len() < 2 || t_last < 10.0 * t0 * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!("states after t0 = {t0} span less than one decade")));
    }
    let n = diff.grid().dim();
    let lambda = n as f64 / (2.0 * p);
    let lp = lp_norm(&first.h, p)?;
    let mut times = Vec::with_capacity(used.len());
    let mut sups = Vec::with_capacity(used.len());
    for s in &used {
        let c = curvature(&s.h.add_identity(1.0), diff, true)?;
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let m = sup(c.scalar.values())
            .max(sup(c.ricci_norm.as_ref().expect("norms requested").values()))
            .max(sup(c.riemann_norm.as_ref().expect("norms requested").values()));
        times.push(s.t);
        sups.push(m);
    }
    let peak = sups.iter().copied().fold(0.0, f64::max);
    let c2 = if peak == 0.0 {
        0.0
    } else {
        times.iter().zip(&sups).map(|(t, v)| v * t.powf(1.0 + lambda) / lp).fold(0.0, f64::max)
    };
    let fit = if peak > 0.0 { decay_fit(&times, &sups, (t0, t_last)).ok() } else { None };
    Ok(CurvatureDecay { c2, lp_norm: lp, lambda, times, curvature_sup: sups, fit })
}

#[cfg(test)]
mod tests;
