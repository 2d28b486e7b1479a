//! Fixed-point form `h = S[h₀] + V[h]` on a short window.
//!
//! Time is discretized into `M` equal intervals. On each interval the source
//! `Q₀ + ∇·Q₁` is frozen at the midpoint state (the mean of the two end
//! slices) and integrated against the heat semigroup exactly, giving
//! `V̂_k = E(Δs) V̂_{k-1} + φ(Δs) N̂_{k-1}` with `φ = (e^{LΔs} - 1)/L`. The
//! divergence term is applied to `Q₁` in Fourier space, which is the
//! convolution `∇K ∗ Q₁`.

use rustfft::num_complex::Complex64;

use super::{DuhamelConfig, Stepper};
use crate::error::{Error, Result};
use crate::grid::{Differentiator, SymTensorField};

#[derive(Clone, Debug)]
pub struct WindowSolution {
    /// `M + 1` slices at `s_k = k T / M`.
    pub slices: Vec<SymTensorField>,
    pub iterations: usize,
    /// `max_k sup|F^{j}(s_k) - F^{j-1}(s_k)|` per iteration.
    pub updates: Vec<f64>,
    /// Ratios of successive updates.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

fn linear_factors(stepper: &Stepper, ds: f64) -> (Vec<f64>, Vec<f64>) {
    stepper
        .symbol()
        .iter()
        .map(|&l| {
            let e = (l * ds).exp();
            // (e^{l ds} - 1)/l, with the l → 0 limit ds.
            let phi = if (l * ds).abs() < 1e-8 { ds * (1.0 + 0.5 * l * ds) } else { (e - 1.0) / l };
            (e, phi)
        })
        .unzip()
}

fn heat_slices(stepper: &Stepper, h0: &SymTensorField, m: usize, e: &[f64]) -> Vec<Vec<Vec<Complex64>>> {
    let fft = stepper.differentiator().fft();
    let inputs: Vec<&[f64]> = h0.comps().iter().map(|c| c.as_slice()).collect();
    let mut cur = fft.forward_many(&inputs);
    let mut out = vec![cur.clone()];
    for _ in 0..m {
        for s in cur.iter_mut() {
            for (v, f) in s.iter_mut().zip(e) {
                *v *= *f;
            }
        }
        out.push(cur.clone());
    }
    out
}

fn apply_map(
    stepper: &Stepper,
    s_hat: &[Vec<Vec<Complex64>>],
    guess: &[SymTensorField],
    e: &[f64],
    phi: &[f64],
) -> Result<Vec<SymTensorField>> {
    let grid = *guess[0].grid();
    let fft = stepper.differentiator().fft();
    let sl = grid.sym_len();
    let mut v = vec![vec![Complex64::default(); grid.len()]; sl];
    let mut out = Vec::with_capacity(guess.len());
    out.push(SymTensorField::new(grid, fft.inverse_many(&s_hat[0]))?);
    for k in 1..guess.len() {
        let mid = guess[k - 1].axpy(1.0, &guess[k])?.scaled(0.5);
        let nl = stepper.nonlinear(&mid)?;
        for (vc, nc) in v.iter_mut().zip(&nl) {
            for (((x, nv), ev), pv) in vc.iter_mut().zip(nc).zip(e).zip(phi) {
                *x = *x * *ev + nv * *pv;
            }
        }
        let total: Vec<Vec<Complex64>> = s_hat[k]
            .iter()
            .zip(&v)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        out.push(SymTensorField::new(grid, fft.inverse_many(&total))?);
    }
    Ok(out)
}

/// One application of the fixed-point map to `guess`, a trajectory of
/// `M + 1` equally spaced slices on `[0, window]`.
pub fn duhamel_iterate(
    h0: &SymTensorField,
    guess: &[SymTensorField],
    window: f64,
    diff: &Differentiator,
) -> Result<Vec<SymTensorField>> {
    if guess.len() < 5 {
        return Err(Error::arg(
            "guess",
            format!("{} quadrature intervals given, at least 4 are required", guess.len().saturating_sub(1)),
        ));
    }
    if !(window > 0.0) {
        return Err(Error::arg("window", format!("must be positive, got {window}")));
    }
    for g in guess {
        h0.grid().same_as(g.grid())?;
    }
    let m = guess.len() - 1;
    let stepper = Stepper::new(*h0.grid(), diff.backend());
    let (e, phi) = linear_factors(&stepper, window / m as f64);
    let s_hat = heat_slices(&stepper, h0, m, &e);
    apply_map(&stepper, &s_hat, guess, &e, &phi)
}

fn max_distance(a: &[SymTensorField], b: &[SymTensorField]) -> Result<f64> {
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        d = d.max(x.sup_distance(y)?);
    }
    Ok(d)
}

/// Iterate the fixed-point map from `S[h₀]` until the update falls below the
/// tolerance or the iteration budget is spent.
pub fn solve_window(h0: &SymTensorField, window: f64, cfg: &DuhamelConfig, diff: &Differentiator) -> Result<WindowSolution> {
    let m = cfg.slices;
    if m < 4 {
        return Err(Error::arg("slices", format!("{m} quadrature intervals given, at least 4 are required")));
    }
    let grid = *h0.grid();
    let stepper = Stepper::new(grid, diff.backend());
    let (e, phi) = linear_factors(&stepper, window / m as f64);
    let s_hat = heat_slices(&stepper, h0, m, &e);
    let fft = diff.fft();
    let mut cur = s_hat
        .iter()
        .map(|s| SymTensorField::new(grid, fft.inverse_many(s)))
        .collect::<Result<Vec<_>>>()?;
    let scale = h0.sup_norm().max(f64::MIN_POSITIVE);
    let mut updates = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let next = apply_map(&stepper, &s_hat, &cur, &e, &phi)?;
        let d = max_distance(&next, &cur)?;
        updates.push(d);
        cur = next;
        if d <= cfg.contraction_tol * scale {
            converged = true;
            break;
        }
    }
    // Ratios near round-off carry no information about the map.
    let floor = 1e-13 * scale;
    let ratios = updates.windows(2).filter(|w| w[1] > floor).map(|w| w[1] / w[0]).collect();
    Ok(WindowSolution { slices: cur, iterations: updates.len(), updates, ratios, converged })
}
