use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use rdtlab::diagnostics::{decay_fit, lp_norm, Cutoff};
use rdtlab::flow::{heat_convolve_scalar, run_flow, FlowConfig};
use rdtlab::geometry::scalar_curvature;
use rdtlab::grid::snapshot::Snapshot;
use rdtlab::grid::{sym_index, sym_len, sym_pair, DerivativeBackend, Differentiator, GridSpec, ScalarField, SymTensorField};

fn field(grid: GridSpec, coeffs: &[f64]) -> SymTensorField {
    // a few low modes per component, periodic on the cell
    let l = grid.box_length();
    let comps = (0..grid.sym_len())
        .map(|c| {
            grid.sample(|x| {
                let k = 2.0 * std::f64::consts::PI / l;
                let a = coeffs[c % coeffs.len()];
                let b = coeffs[(c + 1) % coeffs.len()];
                a * (k * x[0]).sin() * (k * x[1]).cos() + b * (2.0 * k * x[1] + x[0] * k).cos()
            })
        })
        .collect();
    SymTensorField::new(grid, comps).unwrap()
}

proptest! {
    #[test]
    fn sym_slots_are_a_bijection(n in 1usize..=4) {
        for c in 0..sym_len(n) {
            let (i, j) = sym_pair(n, c);
            prop_assert!(i <= j);
            prop_assert_eq!(sym_index(n, i, j), c);
            prop_assert_eq!(sym_index(n, j, i), c);
        }
    }

    #[test]
    fn snapshots_round_trip(n in 2usize..=3, time in -1e3f64..1e3, seed in any::<u64>()) {
        let grid = GridSpec::new(n, 8, 3.5).unwrap();
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let comps: Vec<Vec<f64>> = (0..grid.sym_len())
            .map(|_| (0..grid.len()).map(|_| rng.gen::<f64>().ln() * rng.gen_range(-1e3..1e3)).collect())
            .collect();
        let snap = Snapshot::from_field(&SymTensorField::new(grid, comps).unwrap(), time);
        let bytes = snap.encode();
        let back = Snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &snap);
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn lp_norms_are_homogeneous(p in 1.0f64..4.0, lambda in -5.0f64..5.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let grid = GridSpec::new(2, 16, 6.0).unwrap();
        let h = field(grid, &[a, b, 0.3]);
        let base = lp_norm(&h, p).unwrap();
        let scaled = lp_norm(&h.scaled(lambda), p).unwrap();
        prop_assert!((scaled - lambda.abs() * base).abs() <= 1e-12 * (1.0 + base * lambda.abs()));
    }

    #[test]
    fn heat_is_a_contracting_semigroup(a in 0.01f64..1.0, b in 0.01f64..1.0, c0 in -1.0f64..1.0) {
        let grid = GridSpec::new(2, 16, 6.0).unwrap();
        let f = ScalarField::from_fn(grid, |x| c0 * (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp() + 0.1 * x[0].sin()).unwrap();
        let two = heat_convolve_scalar(&heat_convolve_scalar(&f, a).unwrap(), b).unwrap();
        let one = heat_convolve_scalar(&f, a + b).unwrap();
        let gap = two.values().iter().zip(one.values()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-12);
        prop_assert!(lp_norm(&one, 2.0).unwrap() <= lp_norm(&f, 2.0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn constant_metrics_are_flat(n in 2usize..=3, d in 0.5f64..2.0, off in -0.3f64..0.3) {
        let grid = GridSpec::new(n, 8, 4.0).unwrap();
        let diff = Differentiator::new(grid, DerivativeBackend::spectral());
        let g = SymTensorField::from_fn(grid, |_| {
            let mut m = [[0.0; 4]; 4];
            for i in 0..n {
                m[i][i] = d + i as f64 * 0.1;
            }
            m[0][1] = off;
            m[1][0] = off;
            m
        })
        .unwrap();
        let r = scalar_curvature(&g, &diff).unwrap();
        prop_assert!(r.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn power_laws_fit_exactly(a in -3.0f64..0.5, c in 0.1f64..10.0, t0 in 0.01f64..5.0) {
        let t: Vec<f64> = (0..40).map(|k| t0 * 10f64.powf(k as f64 / 30.0)).collect();
        let v: Vec<f64> = t.iter().map(|t| c * t.powf(a)).collect();
        let f = decay_fit(&t, &v, (t0, t0 * 10.0)).unwrap();
        prop_assert!((f.exponent - a).abs() < 1e-9);
        prop_assert!((f.prefactor / c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cutoff_stays_in_the_unit_interval(radius in 0.1f64..10.0, r in 0.0f64..30.0) {
        let eta = Cutoff::new(radius).unwrap();
        let v = eta.value(r);
        prop_assert!((0.0..=1.0).contains(&v));
        if r <= radius {
            prop_assert_eq!(v, 1.0);
        }
        if r >= 2.0 * radius {
            prop_assert_eq!(v, 0.0);
        }
        prop_assert!(eta.value(r + 0.01) <= v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn flow_never_expands_l2(a in -0.05f64..0.05, b in -0.05f64..0.05) {
        let grid = GridSpec::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        let h0 = field(grid, &[a, b]);
        let cfg = FlowConfig { t_end: 0.2, ..FlowConfig::default() };
        let mut last = lp_norm(&h0, 2.0).unwrap();
        run_flow(&h0, &cfg, |s| {
            let now = lp_norm(&s.h, 2.0)?;
            assert!(now <= last * 1.01, "{now} after {last}");
            last = now;
            Ok(())
        })
        .unwrap();
    }
}
