//! Total scalar curvature in the borderline case and the floor/ceiling
//! comparison behind the rigidity argument.

use super::HarnackConstants;
use crate::diagnostics::lp_norm;
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::geometry::scalar_curvature;
use crate::grid::Differentiator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BorderlineEntry {
    /// Requested checkpoint.
    pub t0: f64,
    /// Time of the state actually used (the nearest stored one).
    pub t_used: f64,
    /// `∫R(g_{t₀}) dx` over the box.
    pub l1_r: f64,
    /// Smallest `C₇` with `∫R < C₇‖h₀‖_p exp(C₇‖h₀‖_p / t₀^{n/2-1})`.
    pub c7: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BorderlineReport {
    pub p: f64,
    pub lp_norm: f64,
    pub entries: Vec<BorderlineEntry>,
    /// `∫R` does not increase with `t₀` across the checkpoints.
    pub nonincreasing: bool,
    /// `(max - min) / max |∫R|` over the checkpoints.
    pub spread: f64,
}

/// Solve `c a exp(c a / s) = target` for `c ≥ 0`.
fn solve_c7(a: f64, s: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if a <= 0.0 {
        return f64::INFINITY;
    }
    let f = |c: f64| c * a * (c * a / s).exp() - target;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `∫R(g_{t₀})` at each checkpoint for `p = n/(n-2)`, `n ≥ 3`.
pub fn borderline_l1_check(
    states: &[FlowState],
    checkpoints: &[f64],
    diff: &Differentiator,
) -> Result<BorderlineReport> {
    let n = diff.grid().dim();
    if n < 3 {
        return Err(Error::arg("n", "the borderline exponent n/(n-2) needs n ≥ 3"));
    }
    let first = states.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let p = n as f64 / (n as f64 - 2.0);
    let lp = lp_norm(&first.h, p)?;
    let mut entries = Vec::with_capacity(checkpoints.len());
    for &t0 in checkpoints {
        if !(t0 > 0.0) {
            return Err(Error::arg("checkpoints", format!("t0 must be positive, got {t0}")));
        }
        let s = states
            .iter()
            .min_by(|a, b| (a.t - t0).abs().total_cmp(&(b.t - t0).abs()))
            .expect("nonempty");
        let r = scalar_curvature(&s.h.add_identity(1.0), diff)?;
        let l1_r = r.integral();
        let c7 = solve_c7(lp, t0.powf(n as f64 / 2.0 - 1.0), l1_r);
        entries.push(BorderlineEntry { t0, t_used: s.t, l1_r, c7 });
    }
    let mut sorted = entries.clone();
    sorted.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    let nonincreasing = sorted.windows(2).all(|w| w[1].l1_r <= w[0].l1_r * (1.0 + 1e-12) + 1e-14);
    let vals: Vec<f64> = entries.iter().map(|e| e.l1_r).collect();
    let big = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spread = if big > 0.0 {
        (vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min)) / big
    } else {
        0.0
    };
    Ok(BorderlineReport { p, lp_norm: lp, entries, nonincreasing, spread })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Flat,
    DecayingTowardFlat,
    InconsistentGlobally,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Flat => "flat",
            Verdict::DecayingTowardFlat => "decaying toward flat",
            Verdict::InconsistentGlobally => "inconsistent with p < n/(n-2) globally",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidityReport {
    pub times: Vec<f64>,
    /// `sup R(g_t) · (t - t₀)^{n/2}`.
    pub floor: Vec<f64>,
    /// `C₂‖h₀‖_p (t - t₀)^{n/2} / t^{1+λ}`.
    pub ceiling: Vec<f64>,
    /// Smallest floor value over the run.
    pub c6: f64,
    /// Log-log slope of the floor over the second half of the run.
    pub floor_slope: Option<f64>,
    /// Time at which the ceiling falls below `c6` (extrapolated past the run).
    pub crossing_time: Option<f64>,
    pub verdict: Verdict,
}

/// Below this `sup|R|` the run counts as flat.
const FLAT_NOISE: f64 = 1e-10;
/// A floor decaying no faster than `t^{-1/4}` is treated as a plateau.
const PLATEAU_SLOPE: f64 = -0.25;

/// Compare the measured floor `sup R (t-t₀)^{n/2}` with the decay ceiling
/// implied by `C₂`. For states after `t₀` only.
pub fn rigidity_probe(states: &[FlowState], constants: &HarnackConstants, diff: &Differentiator) -> Result<RigidityReport> {
    let n = diff.grid().dim() as f64;
    let t0 = constants.t0;
    let used: Vec<&FlowState> = states.iter().filter(|s| s.t > t0).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientData(format!("fewer than three states after t0 = {t0}")));
    }
    let mut times = Vec::with_capacity(used.len());
    let mut floor = Vec::with_capacity(used.len());
    let mut ceiling = Vec::with_capacity(used.len());
    let mut sup_abs = 0.0f64;
    let amp = constants.c2 * constants.lp_norm;
    let ceil_at = |t: f64| amp * (t - t0).powf(n / 2.0) / t.powf(1.0 + constants.lambda);
    for s in &used {
        let r = scalar_curvature(&s.h.add_identity(1.0), diff)?;
        sup_abs = sup_abs.max(r.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        times.push(s.t);
        floor.push(r.max() * (s.t - t0).powf(n / 2.0));
        ceiling.push(ceil_at(s.t));
    }
    let c6 = floor.iter().copied().fold(f64::INFINITY, f64::min);
    let half = times.len() / 2;
    let positive = floor[half..].iter().all(|&v| v > 0.0);
    let floor_slope = if positive && times.len() - half >= 2 {
        let (t, f) = (&times[half..], &floor[half..]);
        let m = t.len() as f64;
        let xs: Vec<f64> = t.iter().map(|v| (v - t0).ln()).collect();
        let ys: Vec<f64> = f.iter().map(|v| v.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    // the ceiling decays like t^{n/2-1-λ} once t ≫ t₀
    let crossing_time = if c6 > 0.0 && 1.0 + constants.lambda > n / 2.0 {
        let mut lo = times[times.len() - 1];
        if ceil_at(lo) <= c6 {
            times.iter().copied().find(|&t| ceil_at(t) <= c6)
        } else {
            let mut hi = 2.0 * lo;
            while ceil_at(hi) > c6 && hi < 1e300 {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ceil_at(mid) > c6 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(hi)
        }
    } else {
        None
    };
    let verdict = if sup_abs <= FLAT_NOISE {
        Verdict::Flat
    } else if floor_slope.is_some_and(|s| s > PLATEAU_SLOPE) {
        Verdict::InconsistentGlobally
    } else {
        Verdict::DecayingTowardFlat
    };
    Ok(RigidityReport { times, floor, ceiling, c6, floor_slope, crossing_time, verdict })
}

#[cfg(test)]
pub(super) fn solve_c7_for_tests(a: f64, s: f64, target: f64) -> f64 {
    solve_c7(a, s, target)
}
