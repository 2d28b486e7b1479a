//! Initial-data generators.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::diagnostics::{lp_norm, smooth_step};
use crate::error::{Error, Result};
use crate::geometry::scalar_curvature;
use crate::grid::{sym_pair, Differentiator, GridSpec, Mat, Point, SymTensorField, MAX_DIM};

/// Generators refuse data with `sup|h| ≥ SUP_LIMIT`.
pub const SUP_LIMIT: f64 = 0.45;

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    /// `δ_ij`.
    Diagonal,
    /// Only `h_01 = h_10`.
    OffDiagonal,
    /// One value per stored component, in storage order.
    Components(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Zero,
    /// `h = A e^{-r²/2w²} P`.
    GaussianBump { amplitude: f64, width: f64, pattern: Pattern },
    /// `g = e^{2φ} δ` with `φ = A e^{-r²/2w²}`, `n = 2`.
    Conformal2d { amplitude: f64, width: f64 },
    /// `g = u^{4/(n-2)} δ`, `u = 1 + m (r² + a²)^{-(n-2)/2}`, tapered to the
    /// flat metric across [`taper_band`].
    RegularizedSchwarzschild { mass: f64, core: f64 },
    /// Random Fourier modes with `|k| ≤ cutoff`, scaled to `sup|h| = amplitude`.
    /// Coefficients come from xoshiro256** seeded with `seed`.
    RandomBandlimited { amplitude: f64, cutoff: f64, seed: u64 },
}

impl InitialData {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialData::Zero => "zero",
            InitialData::GaussianBump { .. } => "gaussian_bump",
            InitialData::Conformal2d { .. } => "conformal2d",
            InitialData::RegularizedSchwarzschild { .. } => "regularized_schwarzschild",
            InitialData::RandomBandlimited { .. } => "random_bandlimited",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            InitialData::RandomBandlimited { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    /// Parameter checks that do not need the generated field.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.dim();
        match self {
            InitialData::Zero | InitialData::GaussianBump { .. } => {}
            InitialData::Conformal2d { .. } if n != 2 => {
                return Err(Error::config("init.kind", format!("conformal2d needs n = 2, got {n}")));
            }
            InitialData::Conformal2d { .. } => {}
            InitialData::RegularizedSchwarzschild { mass, .. } => {
                if n < 3 {
                    return Err(Error::config("init.kind", format!("regularized_schwarzschild needs n ≥ 3, got {n}")));
                }
                if *mass < 0.0 {
                    return Err(Error::config("init.mass", format!("must be nonnegative, got {mass}")));
                }
            }
            InitialData::RandomBandlimited { amplitude, cutoff, .. } => {
                if *amplitude < 0.0 {
                    return Err(Error::config("init.amplitude", format!("must be nonnegative, got {amplitude}")));
                }
                let m = max_mode(grid, *cutoff);
                if m == 0 {
                    return Err(Error::config("init.cutoff", format!("{cutoff} is below the lowest wavenumber 2π/L")));
                }
                if 2 * m >= grid.resolution() {
                    return Err(Error::config("init.cutoff", format!("{cutoff} reaches the Nyquist wavenumber of the grid")));
                }
            }
        }
        Ok(())
    }

    fn shrink_key(&self) -> &'static str {
        match self {
            InitialData::RegularizedSchwarzschild { .. } => "init.mass",
            _ => "init.amplitude",
        }
    }
}

/// Summary of generated data, recomputable from `h₀` alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub kind: &'static str,
    pub seed: Option<u64>,
    pub sup: f64,
    /// `(p, ‖h₀‖_p)` for each configured exponent.
    pub lp: Vec<(f64, f64)>,
    pub min_r: f64,
    pub max_r: f64,
    /// `min R(g₀)` over the origin ball of radius `box_length/4`.
    pub min_r_core: f64,
}

/// Inner and outer radius of the Schwarzschild taper, centred on `box_length/3`.
pub fn taper_band(grid: &GridSpec) -> (f64, f64) {
    let l = grid.box_length();
    (l / 4.0, 5.0 * l / 12.0)
}

/// Scalar curvature of `e^{2φ}δ` in 2D: `-2 e^{-2φ} Δφ`.
pub fn conformal2d_scalar(amplitude: f64, width: f64, r: f64) -> f64 {
    let w2 = width * width;
    let phi = amplitude * (-r * r / (2.0 * w2)).exp();
    let lap = phi * (r * r / (w2 * w2) - 2.0 / w2);
    -2.0 * (-2.0 * phi).exp() * lap
}

/// Scalar curvature of the untapered conformal Schwarzschild metric,
/// `-4(n-1)/(n-2) u^{-(n+2)/(n-2)} Δu`.
pub fn schwarzschild_scalar(n: usize, mass: f64, core: f64, r: f64) -> f64 {
    let nf = n as f64;
    let s = r * r + core * core;
    let u = 1.0 + mass * s.powf(-(nf - 2.0) / 2.0);
    let lap = -(nf - 2.0) * nf * mass * core * core * s.powf(-(nf + 2.0) / 2.0);
    -4.0 * (nf - 1.0) / (nf - 2.0) * u.powf(-(nf + 2.0) / (nf - 2.0)) * lap
}

fn radius(n: usize, x: &Point) -> f64 {
    x[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn max_mode(grid: &GridSpec, cutoff: f64) -> usize {
    (cutoff * grid.box_length() / (2.0 * PI)).floor().max(0.0) as usize
}

fn pattern_matrix(n: usize, pattern: &Pattern) -> Mat {
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    match pattern {
        Pattern::Diagonal => {
            for (i, row) in m.iter_mut().enumerate().take(n) {
                row[i] = 1.0;
            }
        }
        Pattern::OffDiagonal => {
            m[0][1] = 1.0;
            m[1][0] = 1.0;
        }
        Pattern::Components(vals) => {
            for (c, &v) in vals.iter().enumerate() {
                let (i, j) = sym_pair(n, c);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
    }
    m
}

fn bandlimited(grid: &GridSpec, amplitude: f64, cutoff: f64, seed: u64) -> Result<SymTensorField> {
    let n = grid.dim();
    let m = max_mode(grid, cutoff) as i64;
    let k0 = 2.0 * PI / grid.box_length();
    // one representative of each ±k pair, in lexicographic order
    let mut modes = Vec::new();
    let side = (2 * m + 1) as usize;
    for code in 0..side.pow(n as u32) {
        let mut rest = code;
        let mut k = [0i64; MAX_DIM];
        for v in k.iter_mut().take(n) {
            *v = (rest % side) as i64 - m;
            rest /= side;
        }
        let first = k[..n].iter().copied().find(|&v| v != 0);
        let norm = k0 * (k[..n].iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt();
        if first.is_some_and(|v| v > 0) && norm <= cutoff {
            modes.push(k);
        }
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let s = grid.sym_len();
    let coeffs: Vec<Vec<(f64, f64)>> =
        (0..s).map(|_| modes.iter().map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect();
    let mut comps = vec![vec![0.0; grid.len()]; s];
    let mut phase = vec![0.0; grid.len()];
    for (mi, k) in modes.iter().enumerate() {
        for (idx, ph) in phase.iter_mut().enumerate() {
            let x = grid.point(idx);
            *ph = k0 * (0..n).map(|a| k[a] as f64 * x[a]).sum::<f64>();
        }
        for (comp, co) in comps.iter_mut().zip(&coeffs) {
            let (a, b) = co[mi];
            for (v, ph) in comp.iter_mut().zip(&phase) {
                *v += a * ph.cos() + b * ph.sin();
            }
        }
    }
    let h = SymTensorField::new(*grid, comps)?;
    let sup = h.sup_norm();
    Ok(if sup > 0.0 { h.scaled(amplitude / sup) } else { h })
}

/// Build `h₀` and its provenance record.
pub fn generate(init: &InitialData, grid: GridSpec, p_list: &[f64], diff: &Differentiator) -> Result<(SymTensorField, Provenance)> {
    init.validate(&grid)?;
    let n = grid.dim();
    let h = match init {
        InitialData::Zero => SymTensorField::zeros(grid),
        InitialData::GaussianBump { amplitude, width, pattern } => {
            let p = pattern_matrix(n, pattern);
            SymTensorField::from_fn(grid, |x| {
                let e = amplitude * (-radius(n, x).powi(2) / (2.0 * width * width)).exp();
                let mut m = p;
                for row in m.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= e;
                    }
                }
                m
            })?
        }
        InitialData::Conformal2d { amplitude, width } => SymTensorField::diagonal_from_fn(grid, |x| {
            let phi = amplitude * (-radius(n, x).powi(2) / (2.0 * width * width)).exp();
            (2.0 * phi).exp() - 1.0
        })?,
        InitialData::RegularizedSchwarzschild { mass, core } => {
            let (lo, hi) = taper_band(&grid);
            let nf = n as f64;
            SymTensorField::diagonal_from_fn(grid, |x| {
                let r = radius(n, x);
                let u = 1.0 + mass * (r * r + core * core).powf(-(nf - 2.0) / 2.0);
                let chi = 1.0 - smooth_step((r - lo) / (hi - lo)).0;
                chi * (u.powf(4.0 / (nf - 2.0)) - 1.0)
            })?
        }
        InitialData::RandomBandlimited { amplitude, cutoff, seed } => bandlimited(&grid, *amplitude, *cutoff, *seed)?,
    };
    let sup = h.sup_norm();
    if !(sup < SUP_LIMIT) {
        return Err(Error::config(
            init.shrink_key(),
            format!("generated sup|h| = {sup:.6} is not below {SUP_LIMIT}; shrink {}", init.shrink_key()),
        ));
    }
    let prov = provenance(init, &h, p_list, diff)?;
    Ok((h, prov))
}

/// Recompute the provenance quantities of `h`.
pub fn provenance(init: &InitialData, h: &SymTensorField, p_list: &[f64], diff: &Differentiator) -> Result<Provenance> {
    let grid = *h.grid();
    let r = scalar_curvature(&h.add_identity(1.0), diff)?;
    let core = grid.box_length() / 4.0;
    let origin = [0.0; MAX_DIM];
    let min_r_core = r
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.distance(&grid.point(*i), &origin) <= core)
        .fold(f64::INFINITY, |m, (_, v)| m.min(*v));
    Ok(Provenance {
        kind: init.kind(),
        seed: init.seed(),
        sup: h.sup_norm(),
        lp: p_list.iter().map(|&p| Ok((p, lp_norm(h, p)?))).collect::<Result<_>>()?,
        min_r: r.min(),
        max_r: r.max(),
        min_r_core,
    })
}
