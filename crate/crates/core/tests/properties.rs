//! Randomized checks of the structural invariants of each module.

use std::f64::consts::PI;

use metastab::action::{gradient_decomposition, rate_functional, DiscretePath};
use metastab::cycling::{exit_density, gumbel_kernel, p_factor, periodic_p, CyclingParams};
use metastab::exact1d::{capacity_1d, committor_1d, kramers_asymptotic_1d, Interval1D};
use metastab::fieldsolver::{capacity_from_field, committor_grid, walk_committor, walk_mean_time, Region};
use metastab::landscape::{classify, flood_height, scan_height_1d, transition_spec, BoxDomain, FloodingConfig};
use metastab::potential::{check_derivatives, Polynomial, Reflected};
use metastab::rate::{eyring_kramers, pitchfork_prefactor, psi_minus, psi_plus, PitchforkSaddle};
use metastab::sde::{sample_hitting_times, simulate_em, GradientDrift, SimConfig, Target};
use metastab::spde::{discretize_allen_cahn, Boundary};
use metastab::{make_builtin, Potential, PotentialParams, SharedPotential};
use proptest::prelude::*;

fn builtin(name: &str) -> SharedPotential {
    make_builtin(&PotentialParams::new(name)).unwrap()
}

fn pitchfork(l2: f64) -> SharedPotential {
    make_builtin(
        &PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", -1.0)
            .with("lambda2", l2)
            .with("c4", 1.0)
            .with("d", 3.0)
            .with("lambda3", 2.0),
    )
    .unwrap()
}

/// Tilted double well `x⁴/4 − x²/2 + c·x`.
fn tilted(c: f64) -> Polynomial {
    Polynomial::univariate(&[0.0, c, -0.5, 0.0, 0.25])
}

fn derivative_bound(p: &dyn Potential, x: &[f64]) -> Result<(), TestCaseError> {
    let r = check_derivatives(p, x, 1e-5).unwrap();
    let tol = 1e-6 * (1.0 + r.gradient_norm);
    prop_assert!(r.gradient_residual <= tol, "gradient residual {} at {x:?}", r.gradient_residual);
    prop_assert!(r.hessian_residual <= tol, "hessian residual {} at {x:?}", r.hessian_residual);
    let h = p.hessian(x);
    let scale = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    prop_assert!(r.hessian_asymmetry <= 1e-10 * scale);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn builtin_derivatives_match_differences(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0, l2 in -1.0f64..1.0) {
        derivative_bound(builtin("quartic1d").as_ref(), &[x])?;
        derivative_bound(builtin("threewell1d").as_ref(), &[x])?;
        derivative_bound(builtin("doublewell2d").as_ref(), &[x, y])?;
        derivative_bound(pitchfork(l2).as_ref(), &[x, y, z])?;
    }

    #[test]
    fn custom_polynomial_derivatives_match_differences(
        c in prop::collection::vec(-1.0f64..1.0, 6),
        x in -1.5f64..1.5,
        y in -1.5f64..1.5,
    ) {
        let params = PotentialParams::new("custom_polynomial")
            .with("dim", 2.0)
            .with("c_4_0", 0.25 + c[0].abs())
            .with("c_0_4", 0.25 + c[1].abs())
            .with("c_2_0", c[2])
            .with("c_1_1", c[3])
            .with("c_2_1", c[4])
            .with("c_0_1", c[5]);
        derivative_bound(make_builtin(&params).unwrap().as_ref(), &[x, y])?;
    }

    #[test]
    fn quartic_is_even(x in -1e3f64..1e3) {
        let p = builtin("quartic1d");
        prop_assert_eq!(p.value(&[x]), p.value(&[-x]));
    }

    #[test]
    fn communication_height_is_symmetric_and_above_endpoints(c in -0.3f64..0.3) {
        let p = tilted(c);
        let minima: Vec<f64> = [-1.0, 1.0]
            .iter()
            .map(|&s| metastab::landscape::newton_refine(&p, &[s], 1e-12, 100).unwrap()[0])
            .collect();
        let (a, b) = (minima[0], minima[1]);
        prop_assert!(classify(&p, &[a]).is_minimum() && classify(&p, &[b]).is_minimum());
        let ab = scan_height_1d(&p, a, b).unwrap();
        let ba = scan_height_1d(&p, b, a).unwrap();
        prop_assert!((ab.height - ba.height).abs() < 1e-12);
        prop_assert!(ab.height >= p.value(&[a]).max(p.value(&[b])));
        let flood = flood_height(&p, &[a], &[b], &FloodingConfig::default()).unwrap();
        prop_assert!((flood.height - ab.height).abs() < 1e-6, "flood {} scan {}", flood.height, ab.height);
    }

    #[test]
    fn one_dimensional_kramers_agrees_with_laplace_form(eps in 0.01f64..1.0) {
        let p = builtin("quartic1d");
        let spec = transition_spec(p.as_ref(), &[-1.0], &[1.0], 0.1, &FloodingConfig::default()).unwrap();
        let k = eyring_kramers(&spec, eps).unwrap();
        let laplace = kramers_asymptotic_1d(p.as_ref(), -1.0, 0.0, eps).unwrap();
        prop_assert!((k.mean_time() / laplace - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pitchfork_prefactor_continuous_at_zero(l1 in -3.0f64..-0.2, c4 in 0.2f64..3.0, eps in 1e-4f64..0.5) {
        let s = |l2: f64| PitchforkSaddle { lambda1: l1, lambda2: l2, transverse: vec![1.5], c4, det_min: 2.0, post_saddle: None };
        let up = pitchfork_prefactor(&s(1e-8), eps).unwrap().prefactor;
        let down = pitchfork_prefactor(&s(-1e-8), eps).unwrap().prefactor;
        let zero = pitchfork_prefactor(&s(0.0), eps).unwrap().prefactor;
        prop_assert!((up / down - 1.0).abs() <= 1e-6);
        prop_assert!((zero / down - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn psi_functions_positive_and_bounded(alpha in 0.0f64..1e4) {
        let p = psi_plus(alpha).unwrap();
        let m = psi_minus(alpha).unwrap();
        prop_assert!(p > 0.3 && p < 1.5, "psi+({alpha}) = {p}");
        prop_assert!(m > 0.3 && m < 3.0, "psi-({alpha}) = {m}");
    }

    #[test]
    fn committor_is_monotone(c in -0.3f64..0.3, eps in 0.05f64..0.5, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
        let p = tilted(c);
        let (a, b) = (-1.2, 1.2);
        let (lo, hi) = (a + (b - a) * x1.min(x2), a + (b - a) * x1.max(x2));
        let h_lo = committor_1d(&p, &Interval1D::new(a, b, lo, eps).unwrap()).unwrap();
        let h_hi = committor_1d(&p, &Interval1D::new(a, b, hi, eps).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&h_lo) && (0.0..=1.0).contains(&h_hi));
        prop_assert!(h_hi <= h_lo + 1e-12);
    }

    #[test]
    fn capacity_is_reflection_symmetric(c in -0.3f64..0.3, eps in 0.05f64..0.5, half in 0.5f64..1.5) {
        let p = tilted(c);
        let r = Reflected { inner: &p };
        let direct = capacity_1d(&p, -half, half, eps).unwrap();
        let mirrored = capacity_1d(&r, -half, half, eps).unwrap();
        prop_assert!((direct / mirrored - 1.0).abs() < 1e-9);
    }

    #[test]
    fn walk_solutions_are_exact(n in 2i64..60, x in 0i64..60) {
        let x = x % (n + 1);
        prop_assert!((walk_committor(0, n, x).unwrap() - (n - x) as f64 / n as f64).abs() < 1e-12);
        prop_assert!((walk_mean_time(n, x).unwrap() - (x * (n - x)) as f64).abs() < 1e-9 * (n * n) as f64);
    }

    #[test]
    fn periodic_factor_is_exactly_periodic(theta in -20.0f64..20.0, k in 1u32..12, shift in -4i32..4) {
        // dyadic λT keeps θ + λT exact
        let lt = k as f64 / 4.0;
        let t = (theta * 64.0).round() / 64.0;
        prop_assert_eq!(periodic_p(t + shift as f64 * lt, lt), periodic_p(t, lt));
        // double-exponential left tail underflows below about -3.6
        prop_assert!(theta < -3.0 || gumbel_kernel(theta) > 0.0);
    }

    #[test]
    fn exit_density_nonnegative_and_shift_covariant(
        theta in 0.0f64..60.0,
        eps in 1e-4f64..0.1,
        period in 0.5f64..3.0,
        tk in 2.0f64..50.0,
    ) {
        let cp = CyclingParams::new(period, 1.0, tk, 0.0, eps).unwrap();
        if theta > cp.theta0 {
            prop_assert!(exit_density(theta, &cp).unwrap() >= 0.0);
        }
        let scaled = CyclingParams { eps: eps * std::f64::consts::E, ..cp };
        let a = p_factor(theta, &cp);
        let b = p_factor(theta - 1.0, &scaled);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn rate_functional_nonnegative_and_decomposes(
        coeffs in prop::collection::vec(-0.5f64..0.5, 4),
        start in -1.5f64..1.5,
        end in -1.5f64..1.5,
        t in 1.0f64..10.0,
    ) {
        let p = builtin("quartic1d");
        let n = 400;
        let pts: Vec<Vec<f64>> = (0..=n)
            .map(|k| {
                let s = k as f64 / n as f64;
                let w: f64 = coeffs.iter().enumerate().map(|(j, c)| c * ((j + 1) as f64 * PI * s).sin()).sum();
                vec![start + (end - start) * s + w]
            })
            .collect();
        let path = DiscretePath::new(t / n as f64, pts).unwrap();
        let i = rate_functional(&path, &GradientDrift(p.as_ref())).unwrap();
        prop_assert!(i >= 0.0);
        let d = gradient_decomposition(&path, p.as_ref()).unwrap();
        // midpoint rule: defect is O(Δt²) relative to the path's scale
        prop_assert!(d.defect().abs() <= 1e-3 * (1.0 + i), "defect {} for I = {i}", d.defect());
    }

    #[test]
    fn chain_energy_of_constant_states(length in 0.5f64..8.0, sites in 8usize..64, periodic in any::<bool>()) {
        let bc = if periodic { Boundary::Periodic } else { Boundary::Neumann };
        let cp = discretize_allen_cahn(length, sites, bc).unwrap();
        for s in [-1.0, 1.0] {
            prop_assert!((cp.value(&cp.constant(s)) + length / 4.0).abs() <= 1e-14 * length);
            prop_assert!(cp.gradient(&cp.constant(s)).iter().all(|g| *g == 0.0));
        }
        prop_assert_eq!(cp.value(&cp.constant(0.0)), 0.0);
    }

    #[test]
    fn periodic_chain_energy_is_shift_invariant(u in prop::collection::vec(-1.5f64..1.5, 16), r in 1usize..16) {
        let cp = discretize_allen_cahn(3.0, 16, Boundary::Periodic).unwrap();
        let mut v = u.clone();
        v.rotate_left(r);
        prop_assert!((cp.value(&u) - cp.value(&v)).abs() <= 1e-12 * (1.0 + cp.value(&u).abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn grid_committor_respects_maximum_principle_and_swap(c in -0.3f64..0.3, eps in 0.1f64..0.5) {
        let p = tilted(c);
        let dom = BoxDomain::new(vec![-2.0], vec![2.0]).unwrap();
        let a = Region::Below { axis: 0, value: -1.0 };
        let b = Region::Above { axis: 0, value: 1.0 };
        let f = committor_grid(&p, &dom, &a, &b, eps, 1.0 / 128.0).unwrap();
        prop_assert!(f.values.iter().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
        let g = committor_grid(&p, &dom, &b, &a, eps, 1.0 / 128.0).unwrap();
        let (cf, cg) = (capacity_from_field(&f, &p).unwrap(), capacity_from_field(&g, &p).unwrap());
        prop_assert!((cf / cg - 1.0).abs() < 1e-8, "{cf} vs {cg}");
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let p = builtin("quartic1d");
        let target = Target { center: vec![1.0], radius: 0.1 };
        let cfg = SimConfig::new(0.4, 1e-3, 1e3, target, seed, 16);
        let a = sample_hitting_times(p.as_ref(), &[-1.0], &cfg).unwrap();
        let b = sample_hitting_times(p.as_ref(), &[-1.0], &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_descends_energy(x0 in -2.0f64..2.0, y0 in -2.0f64..2.0) {
        let p = builtin("doublewell2d");
        let target = Target { center: vec![50.0, 50.0], radius: 0.1 };
        let cfg = SimConfig::new(0.0, 1e-2, 5.0, target, 0, 1);
        let traj = simulate_em(p.as_ref(), &[x0, y0], &cfg).unwrap();
        for k in 1..traj.len() {
            prop_assert!(p.value(traj.state(k)) <= p.value(traj.state(k - 1)) + 1e-15);
        }
    }
}
