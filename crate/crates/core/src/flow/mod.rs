//! Time integration of `(∂_t - Δ)h = Q₀[h] + ∇·Q₁[h]`.

mod diffeo;
mod duhamel;

pub use diffeo::{diffeo_flow, pullback, ricci_flow_residual, transport, DiffeoOutcome};
pub use duhamel::{duhamel_iterate, solve_window, WindowSolution};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{div_q1_spectra, q0, q1, GeometryCache};
use crate::grid::{DerivativeBackend, Differentiator, GridSpec, ScalarField, SymTensorField};

/// Limit on `sup|h|` beyond which a state is treated as blown up.
pub const BLOW_UP: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub h: SymTensorField,
    pub step_index: usize,
}

impl FlowState {
    pub fn initial(h: SymTensorField) -> Self {
        Self { t: 0.0, h, step_index: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Imex,
    Duhamel,
}

/// Exponential Euler or the second-order exponential (Lawson) Runge-Kutta variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImexOrder {
    Euler,
    Rk2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `dt = safety · spacing² / (2n)`.
    Cfl(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DuhamelConfig {
    /// Window length; `None` uses `0.05 · L² / (4π²)`.
    pub window: Option<f64>,
    /// Quadrature intervals per window.
    pub slices: usize,
    pub max_iters: usize,
    pub contraction_tol: f64,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        Self { window: None, slices: 16, max_iters: 30, contraction_tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub order: ImexOrder,
    pub dt_policy: DtPolicy,
    pub t_end: f64,
    pub duhamel: DuhamelConfig,
    pub backend: DerivativeBackend,
    /// Keep every `store_every`-th state in the returned trajectory (0: only the ends).
    pub store_every: usize,
    /// Largest `sup|h₀|` accepted by the Duhamel scheme.
    pub smallness: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Imex,
            order: ImexOrder::Euler,
            dt_policy: DtPolicy::Cfl(0.9),
            t_end: 1.0,
            duhamel: DuhamelConfig::default(),
            backend: DerivativeBackend::default(),
            store_every: 0,
            smallness: 0.1,
        }
    }
}

/// `L² / (4π²)`, the decay time of the slowest nonconstant mode.
pub fn box_diffusion_time(grid: &GridSpec) -> f64 {
    let l = grid.box_length();
    l * l / (4.0 * std::f64::consts::PI * std::f64::consts::PI)
}

impl FlowConfig {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", format!("must be positive, got {}", self.t_end)));
        }
        match self.dt_policy {
            DtPolicy::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return Err(Error::config("dt", format!("must be positive, got {dt}")));
            }
            DtPolicy::Fixed(dt) if dt > cfl_limit(grid) => {
                return Err(Error::Cfl(format!("dt = {dt} exceeds spacing²/(2n) = {}", cfl_limit(grid))));
            }
            DtPolicy::Cfl(s) if !(s > 0.0 && s <= 1.0) => {
                return Err(Error::config("safety", format!("must lie in (0, 1], got {s}")));
            }
            _ => {}
        }
        if self.scheme == Scheme::Duhamel {
            let w = self.window(grid);
            if !(w > 0.0) || w > self.t_end {
                return Err(Error::config("duhamel.window", format!("window {w} must lie in (0, t_end]")));
            }
            if self.duhamel.slices < 4 {
                return Err(Error::config("duhamel.slices", "at least 4 quadrature slices are required"));
            }
        }
        Ok(())
    }

    pub fn dt(&self, grid: &GridSpec) -> f64 {
        match self.dt_policy {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl(s) => s * cfl_limit(grid),
        }
    }

    pub fn window(&self, grid: &GridSpec) -> f64 {
        self.duhamel.window.unwrap_or(0.05 * box_diffusion_time(grid)).min(self.t_end)
    }
}

/// Explicit-term cap `spacing² / (2n)`.
pub fn cfl_limit(grid: &GridSpec) -> f64 {
    grid.spacing().powi(2) / (2.0 * grid.dim() as f64)
}

fn multiply(spec: &mut [Complex64], factor: &[f64]) {
    for (v, f) in spec.iter_mut().zip(factor) {
        *v *= *f;
    }
}

/// Componentwise `e^{τΔ}` via the exact multiplier `e^{-|k|²τ}`.
pub fn heat_convolve_comps(diff: &Differentiator, comps: &[Vec<f64>], tau: f64) -> Result<Vec<Vec<f64>>> {
    if !(tau > 0.0) {
        return Err(Error::arg("tau", format!("must be positive, got {tau}")));
    }
    let factor: Vec<f64> = diff.k_squared().iter().map(|k2| (-k2 * tau).exp()).collect();
    let inputs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
    let mut spectra = diff.fft().forward_many(&inputs);
    for s in spectra.iter_mut() {
        multiply(s, &factor);
    }
    Ok(diff.fft().inverse_many(&spectra))
}

pub fn heat_convolve(h: &SymTensorField, tau: f64) -> Result<SymTensorField> {
    let diff = Differentiator::new(*h.grid(), DerivativeBackend::spectral());
    SymTensorField::new(*h.grid(), heat_convolve_comps(&diff, h.comps(), tau)?)
}

pub fn heat_convolve_scalar(f: &ScalarField, tau: f64) -> Result<ScalarField> {
    let diff = Differentiator::new(*f.grid(), DerivativeBackend::spectral());
    let mut out = heat_convolve_comps(&diff, &[f.values().to_vec()], tau)?;
    ScalarField::new(*f.grid(), out.pop().unwrap())
}

/// Exponential integrator for the perturbation equation.
#[derive(Clone, Debug)]
pub struct Stepper {
    diff: Differentiator,
    symbol: Vec<f64>,
    cached: Option<(f64, Vec<f64>)>,
}

impl Stepper {
    pub fn new(grid: GridSpec, backend: DerivativeBackend) -> Self {
        let diff = Differentiator::new(grid, backend);
        let symbol = diff.laplacian_symbol();
        Self { diff, symbol, cached: None }
    }

    pub fn differentiator(&self) -> &Differentiator {
        &self.diff
    }

    /// Fourier symbol of the linear operator.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub(crate) fn propagator(&mut self, dt: f64) -> &[f64] {
        if self.cached.as_ref().map(|c| c.0) != Some(dt) {
            let e = self.symbol.iter().map(|l| (l * dt).exp()).collect();
            self.cached = Some((dt, e));
        }
        &self.cached.as_ref().unwrap().1
    }

    /// Spectrum of `Q₀[h] + ∇·Q₁[h]`, dealiased when the backend asks for it.
    pub fn nonlinear(&self, h: &SymTensorField) -> Result<Vec<Vec<Complex64>>> {
        let cache = GeometryCache::new(h, &self.diff)?;
        let q = q0(&cache);
        let inputs: Vec<&[f64]> = q.comps().iter().map(|c| c.as_slice()).collect();
        let mut spectra = self.diff.fft().forward_many(&inputs);
        let div = div_q1_spectra(&cache, &q1(&cache));
        for (s, d) in spectra.iter_mut().zip(div) {
            for (a, b) in s.iter_mut().zip(d) {
                *a += b;
            }
            self.diff.dealias_spectrum(s);
        }
        Ok(spectra)
    }

    fn forward(&self, h: &SymTensorField) -> Vec<Vec<Complex64>> {
        let inputs: Vec<&[f64]> = h.comps().iter().map(|c| c.as_slice()).collect();
        self.diff.fft().forward_many(&inputs)
    }

    fn inverse(&self, spectra: &[Vec<Complex64>]) -> Result<SymTensorField> {
        SymTensorField::new(*self.diff.grid(), self.diff.fft().inverse_many(spectra))
    }

    /// One exponential step of size `dt`.
    pub fn step(&mut self, state: &FlowState, dt: f64, order: ImexOrder) -> Result<FlowState> {
        let nl = self.nonlinear(&state.h)?;
        let mut hat = self.forward(&state.h);
        let e = self.propagator(dt).to_vec();
        let h_new = match order {
            ImexOrder::Euler => {
                for (s, n) in hat.iter_mut().zip(&nl) {
                    for ((v, nv), ev) in s.iter_mut().zip(n).zip(&e) {
                        *v = (*v + nv * dt) * ev;
                    }
                }
                self.inverse(&hat)?
            }
            ImexOrder::Rk2 => {
                let mut stage = hat.clone();
                for (s, n) in stage.iter_mut().zip(&nl) {
                    for ((v, nv), ev) in s.iter_mut().zip(n).zip(&e) {
                        *v = (*v + nv * dt) * ev;
                    }
                }
                let ha = self.inverse(&stage)?;
                check_blow_up(&ha, state.t + dt)?;
                let nl2 = self.nonlinear(&ha)?;
                for ((s, n1), n2) in hat.iter_mut().zip(&nl).zip(&nl2) {
                    for (((v, a), b), ev) in s.iter_mut().zip(n1).zip(n2).zip(&e) {
                        *v = (*v + a * (0.5 * dt)) * ev + b * (0.5 * dt);
                    }
                }
                self.inverse(&hat)?
            }
        };
        check_blow_up(&h_new, state.t + dt)?;
        Ok(FlowState { t: state.t + dt, h: h_new, step_index: state.step_index + 1 })
    }
}

/// Alias kept for the operation name used throughout the docs.
pub fn step_imex(stepper: &mut Stepper, state: &FlowState, dt: f64, order: ImexOrder) -> Result<FlowState> {
    stepper.step(state, dt, order)
}

pub(crate) fn check_blow_up(h: &SymTensorField, t: f64) -> Result<()> {
    let sup = h.sup_norm();
    if sup >= BLOW_UP || !sup.is_finite() {
        return Err(Error::BlowUp { t, sup });
    }
    Ok(())
}

/// Stored states of a run.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&FlowState> {
        self.states.last()
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub final_state: FlowState,
    pub steps: usize,
    /// Per window, the successive contraction ratios of the Duhamel iteration.
    pub contraction: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Radius of the smallest origin-centred ball outside which `|h₀|` stays below
/// `10⁻³ · sup|h₀|`.
pub fn effective_support_radius(h: &SymTensorField) -> f64 {
    let grid = h.grid();
    let norms = h.norm_squared();
    let sup = norms.iter().copied().fold(0.0, f64::max);
    if sup == 0.0 {
        return 0.0;
    }
    let origin = [0.0; crate::grid::MAX_DIM];
    norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-6 * sup)
        .map(|(i, _)| grid.distance(&grid.point(i), &origin))
        .fold(0.0, f64::max)
}

/// Warning text when diffusion over `t_end` would carry the data into the outer
/// quarter of the box.
pub fn support_warning(h0: &SymTensorField, t_end: f64) -> Option<String> {
    let reach = 2.0 * t_end.sqrt() + effective_support_radius(h0);
    let limit = h0.grid().box_length() / 4.0;
    (reach >= limit).then(|| {
        format!("diffusion length 2√t_end plus support radius is {reach:.3}, not below box_length/4 = {limit:.3}")
    })
}

/// Advance `h0` to `cfg.t_end`, calling `observe` on every computed state
/// (including the initial one).
pub fn run_flow(
    h0: &SymTensorField,
    cfg: &FlowConfig,
    mut observe: impl FnMut(&FlowState) -> Result<()>,
) -> Result<RunOutcome> {
    let grid = *h0.grid();
    cfg.validate(&grid)?;
    check_blow_up(h0, 0.0)?;
    let mut warnings: Vec<String> = support_warning(h0, cfg.t_end).into_iter().collect();
    let mut state = FlowState::initial(h0.clone());
    let mut stored = vec![state.clone()];
    observe(&state)?;
    let keep = |s: &FlowState| cfg.store_every > 0 && s.step_index % cfg.store_every == 0;
    let mut contraction = Vec::new();
    let t_end = cfg.t_end;
    match cfg.scheme {
        Scheme::Imex => {
            let mut stepper = Stepper::new(grid, cfg.backend);
            let dt = cfg.dt(&grid);
            let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
            let dt = t_end / steps as f64;
            for _ in 0..steps {
                state = stepper.step(&state, dt, cfg.order)?;
                observe(&state)?;
                if keep(&state) {
                    stored.push(state.clone());
                }
            }
        }
        Scheme::Duhamel => {
            if h0.sup_norm() > cfg.smallness {
                return Err(Error::arg(
                    "h0",
                    format!("sup|h0| = {} exceeds the Duhamel smallness threshold {}", h0.sup_norm(), cfg.smallness),
                ));
            }
            let diff = Differentiator::new(grid, cfg.backend);
            let window = cfg.window(&grid);
            let windows = (t_end / window - 1e-9).ceil().max(1.0) as usize;
            let window = t_end / windows as f64;
            for _ in 0..windows {
                let sol = solve_window(&state.h, window, &cfg.duhamel, &diff)?;
                if !sol.converged {
                    warnings.push(format!(
                        "Duhamel window at t = {:.4e} stopped after {} iterations (last update {:.3e})",
                        state.t,
                        sol.iterations,
                        sol.updates.last().copied().unwrap_or(f64::NAN)
                    ));
                }
                contraction.push(sol.ratios.clone());
                let ds = window / cfg.duhamel.slices as f64;
                let t0 = state.t;
                for (k, h) in sol.slices.into_iter().enumerate().skip(1) {
                    check_blow_up(&h, t0 + k as f64 * ds)?;
                    state = FlowState { t: t0 + k as f64 * ds, h, step_index: state.step_index + 1 };
                    observe(&state)?;
                    if keep(&state) {
                        stored.push(state.clone());
                    }
                }
            }
        }
    }
    if stored.last().map(|s| s.step_index) != Some(state.step_index) {
        stored.push(state.clone());
    }
    Ok(RunOutcome {
        steps: state.step_index,
        final_state: state,
        trajectory: Trajectory { states: stored },
        contraction,
        warnings,
    })
}
