use std::f64::consts::PI;

use rand::Rng;

use super::*;
use crate::flow::{run_flow, DtPolicy, FlowConfig, ImexOrder};
use crate::grid::{DerivativeBackend, Interpolator};
use crate::testing::rng;

fn pt(v: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..v.len()].copy_from_slice(v);
    p
}

fn random_pairs(n: usize, count: usize, seed: u64) -> Vec<(Point, Point, f64, f64)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.5..1.5)).collect();
            let y: Vec<f64> = (0..n).map(|_| r.gen_range(-1.5..1.5)).collect();
            let s = r.gen_range(0.0..0.5);
            let t = s + r.gen_range(0.1..1.0);
            (pt(&x), pt(&y), s, t)
        })
        .collect()
}

fn bump_metric(grid: GridSpec, amp: f64, width: f64) -> SymTensorField {
    SymTensorField::from_fn(grid, |x| {
        let r2: f64 = x[..grid.dim()].iter().map(|v| v * v).sum();
        let e = amp * (-r2 / (2.0 * width * width)).exp();
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in m.iter_mut().enumerate().take(grid.dim()) {
            row[i] = 1.0;
        }
        m[0][0] += e;
        m[0][1] += 0.4 * e;
        m[1][0] += 0.4 * e;
        m[1][1] -= 0.3 * e;
        m
    })
    .unwrap()
}

#[test]
fn flat_l_length_of_straight_lines() {
    for n in [2, 3] {
        let grid = GridSpec::new(n, 16, 10.0).unwrap();
        let bg = Background::flat(grid, 0.0, 2.0, 1.0).unwrap();
        let x = pt(&[0.3, -0.2, 0.1][..n]);
        let c = SpaceTimeCurve::straight(x, 1.5, x, 0.5, 16).unwrap();
        assert!(l_length(&c, &bg).unwrap().abs() < 1e-14);
        for (x, y, s, t) in random_pairs(n, 20, n as u64) {
            let d2: f64 = (0..n).map(|a| (x[a] - y[a]).powi(2)).sum();
            let c = SpaceTimeCurve::straight(x, t, y, s, 32).unwrap();
            let exact = 2.0 / 3.0 * (t - s).powf(1.5) * d2 / (t - s).powi(2);
            assert!((l_length(&c, &bg).unwrap() - exact).abs() < 1e-12 * (1.0 + exact));
            let rd = reduced_distance(x, t, y, s, &bg, DistanceMode::StraightLine, CurveSettings::default()).unwrap();
            assert!((rd.value - d2 / (3.0 * (t - s))).abs() < 1e-12 * (1.0 + rd.value));
        }
    }
}

#[test]
fn flat_optimized_reduced_distance() {
    let grid = GridSpec::new(2, 16, 10.0).unwrap();
    let bg = Background::flat(grid, 0.0, 2.0, 1.0).unwrap();
    for (x, y, s, t) in random_pairs(2, 20, 11) {
        let d2: f64 = (0..2).map(|a| (x[a] - y[a]).powi(2)).sum();
        let rd = reduced_distance(x, t, y, s, &bg, DistanceMode::Optimize, CurveSettings::default()).unwrap();
        let exact = d2 / (4.0 * (t - s));
        assert!(rd.value <= rd.straight);
        assert!((rd.value / exact - 1.0).abs() < 0.02, "{} vs {exact}", rd.value);
        assert!(rd.iterations < 10);
    }
    let same = reduced_distance(pt(&[0.5, 0.5]), 1.0, pt(&[0.5, 0.5]), 0.2, &bg, DistanceMode::Optimize, CurveSettings::default())
        .unwrap();
    assert!(same.value.abs() < 1e-14);
}

#[test]
fn curve_validation() {
    let grid = GridSpec::new(2, 16, 8.0).unwrap();
    let bg = Background::flat(grid, 0.0, 1.0, 1.0).unwrap();
    assert!(SpaceTimeCurve::straight(pt(&[0.0, 0.0]), 0.5, pt(&[0.0, 0.0]), 0.5, 16).is_err());
    assert!(SpaceTimeCurve::straight(pt(&[0.0, 0.0]), 1.0, pt(&[0.0, 0.0]), 0.5, 4).is_err());
    // core radius is 3 for L = 8
    let far = SpaceTimeCurve::straight(pt(&[3.5, 0.0]), 1.0, pt(&[0.0, 0.0]), 0.5, 16).unwrap();
    assert!(matches!(l_length(&far, &bg), Err(Error::InvalidArgument { .. })));
    let late = SpaceTimeCurve::straight(pt(&[0.0, 0.0]), 1.5, pt(&[0.0, 0.0]), 0.5, 16).unwrap();
    assert!(l_length(&late, &bg).is_err());
}

#[test]
fn background_interpolates_linearly_in_time() {
    let grid = GridSpec::new(2, 32, 8.0).unwrap();
    let diff = Differentiator::new(grid, DerivativeBackend::default());
    let g0 = bump_metric(grid, 0.02, 0.8);
    let g1 = bump_metric(grid, 0.06, 0.8);
    let bg = Background::new(vec![1.0, 2.0], vec![g0.clone(), g1.clone()], 1.0, &diff).unwrap();
    let x = grid.point(grid.origin_index() + 3);
    let (r0, a) = bg.sample(&x, 1.0).unwrap();
    let (r1, b) = bg.sample(&x, 2.0).unwrap();
    let (rm, c) = bg.sample(&x, 1.25).unwrap();
    assert!((rm - (0.75 * r0 + 0.25 * r1)).abs() < 1e-14);
    assert!((c[0][1] - (0.75 * a[0][1] + 0.25 * b[0][1])).abs() < 1e-15);
    assert!((a[0][0] - g0.at(grid.origin_index() + 3)[0][0]).abs() < 1e-14);
    assert!(r0 != 0.0);
    assert!((bg.lambda() - 1.0).abs() < 1e-15);
    assert!(bg.sample(&x, 2.5).is_err());
    assert!(Background::new(vec![2.0, 1.0], vec![g0, g1], 1.0, &diff).is_err());
}

#[test]
fn l_length_quadrature_is_second_order() {
    let grid = GridSpec::new(2, 64, 8.0).unwrap();
    let diff = Differentiator::new(grid, DerivativeBackend::default());
    let bg = Background::new(
        vec![0.0, 1.0, 2.0],
        vec![bump_metric(grid, 0.05, 0.7), bump_metric(grid, 0.03, 0.9), bump_metric(grid, 0.02, 1.1)],
        1.0,
        &diff,
    )
    .unwrap();
    let (x, y) = (pt(&[0.9, -0.4]), pt(&[-1.1, 0.6]));
    let l: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&m| l_length(&SpaceTimeCurve::straight(x, 1.8, y, 0.1, m).unwrap(), &bg).unwrap())
        .collect();
    let r1 = (l[0] - l[1]) / (l[1] - l[2]);
    let r2 = (l[1] - l[2]) / (l[2] - l[3]);
    assert!((3.0..5.0).contains(&r1) && (3.0..5.0).contains(&r2), "{r1} {r2}");
}

#[test]
fn constants_follow_their_relations() {
    let c = HarnackConstants::from_c2(0.0, 0.3, 1.0, 0.5, 2, 0.0).unwrap();
    assert_eq!((c.c3, c.c4), (0.0, 1.0));
    assert!((c.c5 - 1.0 / 3.0).abs() < 1e-16);
    let c = HarnackConstants::from_c2(2.0, 0.1, 0.75, 0.25, 3, 0.01).unwrap();
    let c3 = 2.0 * 2.0 * 0.1 / (0.75 * 0.25f64.powf(0.75));
    assert!((c.c3 - c3).abs() < 1e-14);
    assert!((c.c4 - (-c3 / 4.0).exp()).abs() < 1e-15);
    assert!((c.c5 - c3.exp() * 1.03 / 3.0).abs() < 1e-14);
    assert!(HarnackConstants::from_c2(1.0, 0.1, 1.0, 0.0, 2, 0.0).is_err());
}

fn run(h0: &SymTensorField, dt: f64, t_end: f64) -> Vec<FlowState> {
    let cfg = FlowConfig {
        order: ImexOrder::Rk2,
        dt_policy: DtPolicy::Fixed(dt),
        t_end,
        store_every: 1,
        ..FlowConfig::default()
    };
    run_flow(h0, &cfg, |_| Ok(())).unwrap().trajectory.states
}

#[test]
fn flat_runs_give_zero_constants_and_flat_verdict() {
    let grid = GridSpec::new(2, 16, 8.0).unwrap();
    let diff = Differentiator::new(grid, DerivativeBackend::default());
    let states = run(&SymTensorField::zeros(grid), 0.05, 2.0);
    let decay = measure_c2(&states, 1.0, 0.1, &diff).unwrap();
    assert_eq!(decay.c2, 0.0);
    assert!(decay.fit.is_none());
    assert!(matches!(measure_c2(&states, 1.0, 0.5, &diff), Err(Error::InsufficientData(_))));
    let c = HarnackConstants::from_c2(decay.c2, decay.lp_norm, decay.lambda, 0.1, 2, 0.0).unwrap();
    let rep = rigidity_probe(&states, &c, &diff).unwrap();
    assert_eq!(rep.verdict, Verdict::Flat);
    assert_eq!(rep.verdict.to_string(), "flat");
}

#[test]
fn curvature_decay_constant_on_small_data() {
    let grid = GridSpec::new(2, 32, 16.0).unwrap();
    let diff = Differentiator::new(grid, DerivativeBackend::default());
    let h0 = bump_metric(grid, 0.01, 1.0).add_identity(-1.0);
    let states = run(&h0, 0.05, 4.0);
    let a = measure_c2(&states, 1.0, 0.4, &diff).unwrap();
    let b = measure_c2(&run(&h0.scaled(0.5), 0.05, 4.0), 1.0, 0.4, &diff).unwrap();
    assert!(a.c2 > 0.0 && a.c2.is_finite());
    assert!((b.c2 / a.c2 - 1.0).abs() < 0.25, "{} vs {}", a.c2, b.c2);
    for (t, v) in a.times.iter().zip(&a.curvature_sup) {
        assert!(*v <= a.c2 * a.lp_norm / t.powf(1.0 + a.lambda) * (1.0 + 1e-12));
    }
}

#[test]
fn flat_kernel_check_has_positive_margins() {
    let grid = GridSpec::new(2, 64, 16.0).unwrap();
    let diff = Differentiator::new(grid, DerivativeBackend::default());
    let bg = Background::flat(grid, 0.5, 2.0, 1.0).unwrap();
    let c = HarnackConstants::from_c2(0.0, 0.0, 1.0, 0.5, 2, 0.0).unwrap();
    let mut probes: Vec<Probe> = random_pairs(2, 12, 5)
        .into_iter()
        .map(|(x, y, s, t)| Probe { x, y, s: 0.5 + 0.5 * s, t: (0.5 + 0.5 * s) + (t - s) })
        .collect();
    probes.push(Probe { x: pt(&[3.0, 0.0]), y: pt(&[-3.0, 0.0]), s: 0.5, t: 1.5 });
    let far = probes
        .iter()
        .filter(|p| 2.0 * (p.t - p.s).sqrt() + grid.distance(&p.x, &p.y) >= 4.0)
        .count();
    let rep = kernel_lower_bound_check(&bg, &probes, &c, &KernelConfig::default(), &diff).unwrap();
    assert!(far < probes.len() / 2);
    assert_eq!(rep.skipped, far);
    assert_eq!(rep.violations, 0, "{:?}", rep.results.iter().map(|r| r.margin).collect::<Vec<_>>());
    assert!(rep.min_margin > 0.0);
    let sigma2 = (4.0 * grid.spacing()).powi(2);
    for r in rep.results.iter().filter(|r| r.skipped.is_none()) {
        // flat response: Gaussian of variance σ² + 2τ, interpolated the same way
        let p = &r.probe;
        let v = sigma2 + 2.0 * (p.t - p.s);
        let exact = grid.sample(|z| {
            let d2 = grid.distance(z, &p.y).powi(2);
            (-d2 / (2.0 * v)).exp() / (2.0 * PI * v)
        });
        let want = Interpolator::new(grid).sample(&exact, &p.x);
        assert!((r.kernel_measured - want).abs() < 1e-9 * want.max(1e-3), "{} vs {want}", r.kernel_measured);
    }
    let mut out = Vec::new();
    write_probe_csv(&rep.results, 2, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("x,y,s,t,l_straight,l_opt,kernel_measured,bound_eq87,bound_eq88,margin\n"));
    assert_eq!(text.lines().count(), 1 + probes.len() - far);
}

fn smooth_conformal(grid: GridSpec, m: f64, w: f64) -> SymTensorField {
    SymTensorField::diagonal_from_fn(grid, |x| {
        let r2: f64 = x[..3].iter().map(|v| v * v).sum();
        (1.0 + m * (-r2 / (2.0 * w * w)).exp()).powi(4) - 1.0
    })
    .unwrap()
}

#[test]
fn borderline_scalar_curvature_matches_conformal_formula() {
    let grid = GridSpec::new(3, 32, 12.0).unwrap();
    let diff = Differentiator::new(grid, DerivativeBackend::default());
    let (m, w) = (0.05, 1.0);
    let h = smooth_conformal(grid, m, w);
    let states = vec![FlowState::initial(h)];
    let rep = borderline_l1_check(&states, &[0.5], &diff).unwrap();
    // R = -8 u^{-5} Δu for g = u⁴δ, u = 1 + m e^{-r²/2w²}
    let steps = 20000;
    let rmax = 12.0 * w;
    let f = |r: f64| {
        let phi = (-r * r / (2.0 * w * w)).exp();
        let lap = m * phi * (r * r / w.powi(4) - 3.0 / (w * w));
        -8.0 * (1.0 + m * phi).powi(-5) * lap * 4.0 * PI * r * r
    };
    let hstep = rmax / steps as f64;
    let mut exact = f(0.0) + f(rmax);
    for k in 1..steps {
        exact += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * hstep);
    }
    exact *= hstep / 3.0;
    let got = rep.entries[0].l1_r;
    assert!((got - exact).abs() < 1e-6 * exact.abs().max(1e-3), "{got} vs {exact}");
    assert!((rep.p - 3.0).abs() < 1e-15);

    let flat = vec![FlowState::initial(SymTensorField::zeros(grid))];
    let rep = borderline_l1_check(&flat, &[0.1, 1.0], &diff).unwrap();
    assert!(rep.entries.iter().all(|e| e.l1_r.abs() < 1e-14 && e.c7 == 0.0));
    let g2 = GridSpec::new(2, 16, 8.0).unwrap();
    let d2 = Differentiator::new(g2, DerivativeBackend::default());
    assert!(borderline_l1_check(&[FlowState::initial(SymTensorField::zeros(g2))], &[1.0], &d2).is_err());
}

#[test]
fn c7_solves_its_defining_equation() {
    let (a, s, target) = (0.3, 0.7, 2.0);
    let c = rigidity::solve_c7_for_tests(a, s, target);
    assert!((c * a * (c * a / s).exp() - target).abs() < 1e-12);
}
