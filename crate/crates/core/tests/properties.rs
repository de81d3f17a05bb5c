//! Property tests for the invariants of the spectral, operator, geometry and
//! building-block layers.

use ciw_core::blocks::{mikado_family, SpatialProfile, TemporalProfile};
use ciw_core::field::{Field, FieldKind};
use ciw_core::geometry::{packed_frobenius, packed_identity, DirectionSet};
use ciw_core::grid::{Grid, Space};
use ciw_core::mollify::Mollifier;
use ciw_core::operators::{inverse_divergence, leray_project};
use ciw_core::quad::simpson_fn;
use ciw_core::spectral::Engine;
use ciw_core::verify::{random_ball_matrix, random_mean_free_vector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn band_limited(engine: &Engine, kmax: i64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mean_free_vector(engine, kmax, 6, &mut rng)
}

fn first_component(f: &Field) -> Field {
    Field::from_data(f.space(), FieldKind::Scalar, f.comp(0).to_vec()).unwrap()
}

fn inner(a: &Field, b: &Field) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>() * a.space().cell_volume()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn transform_round_trip(data in prop::collection::vec(-1e3f64..1e3, 256)) {
        let space = Space::new(2, 16).unwrap();
        let engine = Engine::new(space);
        let f = Field::from_data(space, FieldKind::Scalar, data).unwrap();
        let back = engine.inverse(&engine.forward(&f));
        prop_assert!(back.diff(&f).max_abs() <= 1e-12 * f.max_abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn derivative_commutes_with_mollifier(seed in any::<u64>(), ell in 0.3f64..0.9, axis in 0usize..2) {
        let grid = Grid::new(2, 32, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let f = first_component(&band_limited(&engine, 6, seed));
        let m = Mollifier::new(grid, ell, 0.0).unwrap();
        let mut zeta = [0usize; 2];
        zeta[axis] = 1;
        let a = m.spatial(&engine, &engine.derivative(&f, &zeta).unwrap());
        let b = engine.derivative(&m.spatial(&engine, &f), &zeta).unwrap();
        prop_assert!(a.diff(&b).max_abs() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn fractional_laplacian_is_self_adjoint(s1 in any::<u64>(), s2 in any::<u64>(), alpha in 0.05f64..1.0) {
        let space = Space::new(2, 32).unwrap();
        let engine = Engine::new(space);
        let f = first_component(&band_limited(&engine, 10, s1));
        let g = first_component(&band_limited(&engine, 10, s2));
        let lf = engine.fractional_laplacian(&f, alpha).unwrap();
        let lg = engine.fractional_laplacian(&g, alpha).unwrap();
        let (a, b) = (inner(&lf, &g), inner(&f, &lg));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn mollifier_keeps_the_mean(seed in any::<u64>(), shift in -5.0f64..5.0, ell in 0.2f64..0.9) {
        let grid = Grid::new(2, 32, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let f = first_component(&band_limited(&engine, 12, seed)).map(|v| v + shift);
        let m = Mollifier::new(grid, ell, 0.0).unwrap();
        let before = engine.forward(&f).comp(0)[0];
        let after = engine.forward(&m.spatial(&engine, &f)).comp(0)[0];
        prop_assert!((before - after).norm() <= 1e-14 * (1.0 + before.norm()));
    }

    #[test]
    fn inverse_divergence_inverts_divergence(seed in any::<u64>(), d in 2usize..4) {
        let space = Space::new(d, 16).unwrap();
        let engine = Engine::new(space);
        let v = band_limited(&engine, 5, seed);
        let r = inverse_divergence(&engine, &v).unwrap();
        prop_assert!(engine.div_sym(&r).diff(&v).max_abs() <= 1e-10 * v.max_abs());
        prop_assert!(r.trace().max_abs() <= 1e-12 * r.max_abs().max(1.0));
    }

    #[test]
    fn leray_projection_is_solenoidal_and_idempotent(seed in any::<u64>(), d in 2usize..4) {
        let space = Space::new(d, 16).unwrap();
        let engine = Engine::new(space);
        let v = band_limited(&engine, 5, seed);
        let p = leray_project(&engine, &v);
        prop_assert!(engine.div(&p).max_abs() <= 1e-12 * v.max_abs().max(1.0));
        prop_assert!(leray_project(&engine, &p).diff(&p).max_abs() <= 1e-12 * v.max_abs().max(1.0));
    }

    #[test]
    fn geometric_reconstruction(seed in any::<u64>(), d in 2usize..4) {
        let ds = DirectionSet::build(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_ball_matrix(d, ds.eps_u, &mut rng);
        let g = ds.gamma(&s).unwrap();
        prop_assert!(g.iter().all(|v| *v > 0.0));
        let back = ds.reassemble(&g.iter().map(|v| v * v).collect::<Vec<_>>());
        let diff: Vec<f64> = s.iter().zip(&back).map(|(a, b)| a - b).collect();
        prop_assert!(packed_frobenius(d, &diff) <= 1e-12);
    }

    #[test]
    fn gamma_derivative_matches_finite_differences(seed in any::<u64>(), d in 2usize..4) {
        let ds = DirectionSet::build(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_ball_matrix(d, 0.5 * ds.eps_u, &mut rng);
        let e = random_ball_matrix(d, 1.0, &mut rng);
        let e: Vec<f64> = e.iter().zip(packed_identity(d)).map(|(a, b)| a - b).collect();
        let h = 1e-6;
        let plus: Vec<f64> = s.iter().zip(&e).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = s.iter().zip(&e).map(|(a, b)| a - h * b).collect();
        let (gp, gm) = (ds.gamma(&plus).unwrap(), ds.gamma(&minus).unwrap());
        let exact = ds.gamma_derivative(&s, &e).unwrap();
        for k in 0..ds.len() {
            prop_assert!(((gp[k] - gm[k]) / (2.0 * h) - exact[k]).abs() <= 1e-6);
        }
    }

    #[test]
    fn temporal_profiles_have_disjoint_supports(
        tau in 1.0f64..100.0,
        sigma in 1u32..20,
        t in 0.0f64..1.0,
        count in 3usize..7,
    ) {
        let tp = TemporalProfile::new(count, 1.0, tau, sigma as f64).unwrap();
        for k in 0..count {
            for j in (k + 1)..count {
                prop_assert_eq!(tp.g(k, t) * tp.g(j, t), 0.0);
            }
        }
    }

    #[test]
    fn h_integrates_its_rate(tau in 1.0f64..32.0, sigma in 1u32..8, a in 0.0f64..1.0, b in 0.0f64..1.0, k in 0usize..3) {
        let tp = TemporalProfile::new(3, 1.0, tau, sigma as f64).unwrap();
        let (t0, t1) = if a < b { (a, b) } else { (b, a) };
        // Integrate over whole pulses where possible so the quadrature sees smooth pieces.
        let pieces = 400 * (1 + (tau * sigma as f64) as usize);
        let integral = simpson_fn(|t| tp.h_dot(k, t), t0, t1, pieces);
        prop_assert!((tp.h(k, t1) - tp.h(k, t0) - integral).abs() <= 1e-6);
    }
}

#[test]
fn mikado_flows_are_mean_free() {
    for d in [2, 3] {
        let n = if d == 2 { 64 } else { 32 };
        let engine = Engine::new(Space::new(d, n).unwrap());
        let ds = DirectionSet::build(d).unwrap();
        let profile = SpatialProfile::new(d, 0.5).unwrap();
        let lambda = if d == 2 { 4.0 } else { 2.0 };
        for w in mikado_family(&engine, &ds, lambda, &profile, None).unwrap() {
            let v = w.velocity();
            for c in 0..d {
                assert!(v.mean(c).abs() <= 1e-12 * v.max_abs().max(1.0));
            }
        }
    }
}

#[test]
fn frames_are_exact_in_integers() {
    for d in [2, 3] {
        assert!(DirectionSet::build(d).unwrap().verify_exact());
    }
}
