use proptest::prelude::*;
use std::f64::consts::{PI, TAU};
use swirl_core::analysis::{
    admissibility_value, alpha_star, beta_interval, exponent_limits, exponent_triple, iterate_recurrence,
    ExponentParams,
};
use swirl_core::degiorgi::{
    check_cheb, check_domination, dissipation_density, energy_u, make_cutoffs, radial_power_family, truncate,
    NodeSample, SpaceTimeField, SpatialGrid, TruncationLedger, Which,
};
use swirl_core::fields::{build_reference_profile, validate_profile, FluxProfile, TubeField};
use swirl_core::geometry::{decompose_direction, integrate_streamline, local_frame};
use swirl_core::norms::{distribution_from_samples, layer_cake_second_moment, weak_norm_from_samples, CylGrid};
use swirl_core::{Point3, VectorField};

fn reference() -> TubeField {
    TubeField::new(build_reference_profile(2.5, 0.05, 6, 1.0).unwrap(), FluxProfile::Bump)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frames_are_orthonormal(x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64,
                              ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in 0.1..1.0f64) {
        let field = |_: Point3| Point3::new(0.0, 0.0, 1.0);
        let axis = Point3::new(ax, ay, az);
        let p = Point3::new(x, y, z);
        let e = axis * (1.0 / axis.norm());
        prop_assume!((p - e * p.dot(e)).norm() > 1e-3);
        let g = local_frame(&field, p, axis).unwrap().gram();
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - id).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn direction_lies_on_unit_sphere(r in 0.01..0.99f64, th in 0.0..TAU, z in 0.0..0.999f64) {
        let f = reference();
        let p = Point3::from_cylindrical(r, th, z);
        let frame = local_frame(&f, p, Point3::new(0.0, 0.0, 1.0)).unwrap();
        let (a, b, c) = decompose_direction(&f, p, &frame).unwrap();
        prop_assert!((a * a + b * b + c * c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn speed_times_omega_is_flux(r in 0.0..1.0f64, th in 0.0..TAU, z in 0.0..0.9999f64) {
        let f = reference();
        let p = Point3::from_cylindrical(r, th, z);
        let speed = f.eval(p).norm();
        let flux = f.flux.value(r, f.tube_radius);
        prop_assert!((speed * f.profile.omega_z(r, z) / flux - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chord_never_exceeds_arc(r in 0.05..0.9f64, z in 0.0..0.5f64) {
        let f = reference();
        let line = integrate_streamline(&f, Point3::new(r, 0.0, z), 1e-2, 0.3).unwrap();
        for w in line.samples.windows(7) {
            let (s1, p1) = w[0];
            let (s2, p2) = w[6];
            prop_assert!((p2 - p1).norm() <= s2 - s1 + 1e-8);
        }
    }

    #[test]
    fn admissibility_sign_matches_threshold(alpha in 2.001..2.999f64) {
        prop_assume!((alpha - alpha_star()).abs() > 1e-9);
        prop_assert_eq!(admissibility_value(alpha) > 0.0, alpha > alpha_star());
        prop_assert_eq!(beta_interval(alpha).is_ok(), alpha > alpha_star());
    }

    #[test]
    fn interior_beta_gives_positive_limits(alpha in 2.35..2.999f64, t in 0.01..0.99f64) {
        let (lo, hi) = beta_interval(alpha).unwrap();
        let beta = lo + t * (hi - lo);
        let (l1, l23) = exponent_limits(alpha, beta);
        prop_assert!(l1 > 0.0 && l23 > 0.0);
        let (e1, e2, e3) = exponent_triple(&ExponentParams::new(alpha, beta, 1.0 + 1e-7, 1e-7)).unwrap();
        prop_assert!((e1 - l1).abs() < 1e-5 && (e2 - l23).abs() < 1e-5 && (e3 - l23).abs() < 1e-5);
    }

    #[test]
    fn recurrence_monotone_in_start(b in 1.0..10.0f64, beta in 1.1..3.0f64, a in 1e-6..1.0f64, f in 1.0001..2.0f64) {
        let lo = iterate_recurrence(b, beta, a, 30);
        let hi = iterate_recurrence(b, beta, a * f, 30);
        for k in 1..=30 {
            prop_assert!(lo.ln(k) <= hi.ln(k));
        }
    }

    #[test]
    fn truncation_shrinks_with_k(speed in 0.0..100.0f64, r in 1.0..50.0f64, beta in 1.0..1.5f64, k in 0usize..10) {
        let l = TruncationLedger::new(r, beta, 10).unwrap();
        for which in [Which::V, Which::W] {
            prop_assert!(truncate(speed, &l, k + 1, which) <= truncate(speed, &l, k, which));
        }
    }

    #[test]
    fn domination_holds_pointwise(speed in 0.1..1e4f64, g in 0.0..10.0f64, extra in 0.0..10.0f64,
                                  r in 1.0..50.0f64, beta in 1.01..1.5f64, k in 1usize..8) {
        let l = TruncationLedger::new(r, beta, 8).unwrap();
        let node = NodeSample { speed, grad_speed: g, grad_full: g + extra };
        let d = dissipation_density(speed, g, g + extra, &l, k, Which::V).unwrap();
        let big = dissipation_density(speed, g, g + extra, &l, k, Which::W).unwrap();
        prop_assert!(big <= 5.0 * d + 1e-12 * d.max(1.0));
        let f = SpaceTimeField::new(vec![0.0, 1.0], vec![1.0], vec![vec![node], vec![node]]).unwrap();
        prop_assert!(check_domination(&f, &l, k).unwrap().holds);
    }

    #[test]
    fn cutoff_contract(l in 0.1..5.0f64, t in -10.0..10.0f64, k in 0usize..6) {
        let ledger = TruncationLedger::new(10.0, 1.2, 6).unwrap();
        let c = make_cutoffs(l, &ledger, k).unwrap();
        prop_assert_eq!(c.psi(-t), -c.psi(t));
        let d = c.psi_prime(t);
        prop_assert!((0.0..=2.0).contains(&d));
        if t.abs() < l || t.abs() > l + 1.0 {
            prop_assert_eq!(d, 0.0);
        }
        let s = t.abs() * 10.0;
        prop_assert!((c.phi(s + 0.01) - c.phi(s)).abs() <= 0.01 + 1e-15);
    }

    #[test]
    fn distribution_non_increasing(vals in proptest::collection::vec((0.0..10.0f64, 0.0..1.0f64), 1..200)) {
        let levels: Vec<f64> = (0..50).map(|i| i as f64 * 0.25).collect();
        let m = distribution_from_samples(&vals, &levels).unwrap();
        prop_assert!(m.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*m.last().unwrap(), 0.0);
    }

    #[test]
    fn weak_norm_is_homogeneous(vals in proptest::collection::vec((0.001..10.0f64, 0.001..1.0f64), 10..300),
                                e in -3i32..4, alpha in 2.1..2.9f64) {
        let c = 2f64.powi(e);
        let scaled: Vec<(f64, f64)> = vals.iter().map(|&(v, w)| (c * v, w)).collect();
        let a = weak_norm_from_samples(&vals, alpha, 64).unwrap().value;
        let b = weak_norm_from_samples(&scaled, alpha, 64).unwrap().value;
        prop_assert!((b / (c.powf(alpha) * a) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn chebyshev_inclusion_exact(amp in 1.0..30.0f64, beta in 1.0..1.4f64, k in 2usize..7) {
        let grid = SpatialGrid::radial_shells(1e-2, 5.0, 200).unwrap();
        let l = TruncationLedger::new(10.0, beta, 7).unwrap();
        let f = radial_power_family(2.5, amp, &grid, &[0.0, 0.5, 1.0]).unwrap();
        let r = check_cheb(&f, &l, k, 2.5, 0.1, 2.5, 1.0, 1.0).unwrap();
        prop_assert!(r.inclusion_holds && r.chebyshev_holds);
    }

    #[test]
    fn energies_non_increasing(amp in 1.0..50.0f64, r in 2.0..20.0f64, beta in 1.0..1.3f64) {
        let grid = SpatialGrid::radial_shells(1e-2, 5.0, 200).unwrap();
        let l = TruncationLedger::new(r, beta, 6).unwrap();
        let f = radial_power_family(2.5, amp, &grid, &[0.0, 0.5, 0.7, 0.8, 1.0]).unwrap();
        for which in [Which::V, Which::W] {
            let u: Vec<f64> = (0..=6).map(|k| energy_u(&f, &l, k, which).unwrap()).collect();
            prop_assert!(u.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}

#[test]
fn profile_corridor_on_certified_annuli() {
    let p = build_reference_profile(2.5, 0.05, 8, 1.0).unwrap();
    let rep = validate_profile(&p, 64);
    for a in &p.annuli {
        if !rep.certified(a.j) {
            continue;
        }
        let r = 0.5 * (a.band_outer() + a.r_outer);
        for i in 1..2000 {
            let lx = a.ln_depth_end * 1.5 * i as f64 / 2000.0;
            let w = p.ln_omega(r, lx);
            assert!(w > p.ln_lower(lx) && w <= 0.0, "annulus {} lx {lx}", a.j);
            if lx > a.ln_depth_start {
                assert!(w <= p.ln_upper(lx) + 1e-12);
            }
        }
    }
}

#[test]
fn layer_cake_matches_second_moment() {
    // w = 1 - z on the unit cylinder: int w^2 = pi / 3.
    let g = CylGrid::uniform((0.0, 1.0), (0.0, 1.0), 64, 1, 64).unwrap();
    let samples = g.sample(|p| 1.0 - p.z);
    let levels: Vec<f64> = (0..400).map(|i| i as f64 / 399.0).collect();
    let m = distribution_from_samples(&samples, &levels).unwrap();
    let lc = layer_cake_second_moment(&levels, &m);
    let direct: f64 = samples.iter().map(|(v, w)| v * v * w).sum();
    assert!((lc / direct - 1.0).abs() < 0.05, "{lc} vs {direct}");
    assert!((direct / (PI / 3.0) - 1.0).abs() < 1e-3);
}
