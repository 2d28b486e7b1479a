//! Shared fixtures for unit tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::grid::{GridSpec, SymTensorField};

pub(crate) fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Sum of a few low Fourier modes per component, scaled to sup-norm `amp`.
pub(crate) fn bandlimited(grid: GridSpec, amp: f64, kmax: i32, seed: u64) -> SymTensorField {
    let mut r = rng(seed);
    let n = grid.dim();
    let l = grid.box_length();
    let comps: Vec<Vec<f64>> = (0..grid.sym_len())
        .map(|_| {
            let modes: Vec<([i32; 4], f64, f64)> = (0..4)
                .map(|_| {
                    let mut k = [0; 4];
                    for v in k.iter_mut().take(n) {
                        *v = r.gen_range(-kmax..=kmax);
                    }
                    (k, r.gen_range(-1.0..1.0), r.gen_range(0.0..2.0 * PI))
                })
                .collect();
            grid.sample(|x| {
                modes
                    .iter()
                    .map(|(k, c, ph)| {
                        let arg: f64 = (0..n).map(|a| k[a] as f64 * x[a]).sum::<f64>() * 2.0 * PI / l;
                        c * (arg + ph).cos()
                    })
                    .sum()
            })
        })
        .collect();
    let h = SymTensorField::new(grid, comps).unwrap();
    let s = h.sup_norm();
    h.scaled(amp / s)
}
