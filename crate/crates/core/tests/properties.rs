use std::f64::consts::PI;

use helfrich_core::diagnostics::kappa_profile;
use helfrich_core::geom::{build_cache, FlowParams};
use helfrich_core::mesh::{read_off, write_off};
use helfrich_core::ode::{
    equilibrium_radius, extinction_time_closed_form, integrate_sphere_ode, sphere_energy, OdeTerminal,
};
use helfrich_core::validate::random_blob;
use helfrich_core::{Mesh, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn blob(seed: u64) -> Mesh {
    random_blob(&mut ChaCha8Rng::seed_from_u64(seed), 3).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn params() -> impl Strategy<Value = FlowParams> {
    (-3.0..3.0f64, 0.0..2.0f64).prop_map(|(c0, lambda)| FlowParams::new(c0, lambda).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energies_are_translation_invariant(seed in any::<u64>(), p in params(), d in prop::array::uniform3(-50.0..50.0f64)) {
        let m = blob(seed);
        let a = build_cache(&m).unwrap();
        let b = build_cache(&m.translated(Vec3::new(d[0], d[1], d[2]))).unwrap();
        prop_assert!(rel(b.willmore, a.willmore) < 1e-9);
        prop_assert!(rel(b.penalized(&p), a.penalized(&p)) < 1e-9);
        prop_assert!(rel(b.area, a.area) < 1e-9);
    }

    #[test]
    fn rescaled_energy_matches_rescaled_parameters(seed in any::<u64>(), p in params(), r in 0.2..8.0f64) {
        let m = blob(seed);
        let e = build_cache(&m).unwrap().penalized(&p);
        let scaled = build_cache(&m.scaled(1.0 / r)).unwrap().penalized(&p.rescaled(r));
        prop_assert!(rel(scaled, e) < 1e-12, "{scaled} vs {e}");
    }

    #[test]
    fn gauss_bonnet_and_curvature_split(seed in any::<u64>()) {
        let m = blob(seed);
        let c = build_cache(&m).unwrap();
        prop_assert!((c.total_gauss_curvature() - 4.0 * PI).abs() < 1e-10);
        for i in 0..c.n_vertices() {
            let h = c.mean_curvature[i];
            prop_assert!((c.asq[i] - (c.a0sq[i] + 0.5 * h * h)).abs() <= 1e-14 * c.asq[i].max(1.0));
            prop_assert!(c.a0sq[i] >= 0.0);
        }
        prop_assert!(c.willmore >= 0.0);
    }

    #[test]
    fn flipping_negates_volume_and_keeps_area(seed in any::<u64>()) {
        let m = blob(seed);
        prop_assert!(m.signed_volume() > 0.0);
        let f = m.flipped();
        prop_assert!(rel(-f.signed_volume(), m.signed_volume()) < 1e-12);
        prop_assert!(rel(f.area(), m.area()) < 1e-12);
    }

    #[test]
    fn kappa_is_monotone_and_bounded(seed in any::<u64>()) {
        let m = blob(seed);
        let c = build_cache(&m).unwrap();
        let diag = m.bbox_diagonal();
        let radii: Vec<f64> = (1..=16).map(|k| diag * k as f64 / 12.0).collect();
        let prof = kappa_profile(&m, &c, &radii, 0.0).unwrap();
        let slack = 1e-12 * c.asq_integral;
        for w in prof.kappa.windows(2) {
            prop_assert!(w[1] + slack >= w[0]);
        }
        for v in &prof.kappa {
            prop_assert!(*v >= 0.0 && *v <= c.asq_integral + slack);
        }
        prop_assert!((prof.kappa[15] - c.asq_integral).abs() <= slack);
    }

    #[test]
    fn off_round_trip_preserves_mesh(seed in any::<u64>()) {
        let m = blob(seed);
        let back: Mesh = read_off(&write_off(&m)).unwrap();
        prop_assert_eq!(back.faces(), m.faces());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            prop_assert_eq!(a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extinction_time_scales_with_fourth_power(r0 in 0.1..3.0f64, c0 in -3.0..-0.1f64, lambda in 0.0..2.0f64, r in 0.25..4.0f64) {
        let p = FlowParams::new(c0, lambda).unwrap();
        let t = extinction_time_closed_form(r0, &p).unwrap();
        let ts = extinction_time_closed_form(r0 / r, &p.rescaled(r)).unwrap();
        prop_assert!(rel(ts * r.powi(4), t) < 1e-10);
    }

    #[test]
    fn integration_agrees_with_closed_form(r0 in 0.1..3.0f64, c0 in -3.0..-0.1f64, lambda in 0.0..2.0f64) {
        let p = FlowParams::new(c0, lambda).unwrap();
        let closed = extinction_time_closed_form(r0, &p).unwrap();
        match integrate_sphere_ode(r0, &p, f64::INFINITY, 1e-10).unwrap().terminal {
            OdeTerminal::Extinct { time } => prop_assert!(rel(time, closed) < 1e-8),
            other => prop_assert!(false, "no extinction: {other:?}"),
        }
    }

    #[test]
    fn sphere_energy_is_minimal_at_equilibrium(c0 in 0.1..3.0f64, lambda in 0.01..2.0f64, s in 0.05..0.5f64) {
        let p = FlowParams::new(c0, lambda).unwrap();
        let r = equilibrium_radius(&p).unwrap();
        let e = sphere_energy(r, &p);
        let h = 1e-5 * r;
        let slope = (sphere_energy(r + h, &p) - sphere_energy(r - h, &p)) / (2.0 * h);
        prop_assert!(slope.abs() <= 1e-6 * (1.0 + e / r));
        prop_assert!(sphere_energy(r * (1.0 + s), &p) > e);
        prop_assert!(sphere_energy(r * (1.0 - s), &p) > e);
    }

    #[test]
    fn larger_spheres_live_longer(r0 in 0.1..3.0f64, c0 in -3.0..-0.1f64, lambda in 0.0..2.0f64) {
        let p = FlowParams::new(c0, lambda).unwrap();
        let t = extinction_time_closed_form(r0, &p).unwrap();
        prop_assert!(t > 0.0);
        prop_assert!(extinction_time_closed_form(1.1 * r0, &p).unwrap() > t);
    }
}
