mod common;

use common::{reference_spec, rel, unit_interval};
use nehari::fibering::phi;
use nehari::{
    energy, gradient, lp_norm, reduced_integrals, EnergyWeights, Expr, Field, KernelSpec, NearField, ProblemSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem(p: f64, n: usize, lambda: f64) -> (ProblemSpec, EnergyWeights) {
    let kernel = KernelSpec::fractional(1, p, 0.3).unwrap();
    let mesh = unit_interval(n);
    let weights = EnergyWeights::assemble(&mesh, &kernel, NearField::Richardson).unwrap();
    let h = Expr::parse("1 + 0.5*sin(3*x)", &["x", "y"]).unwrap();
    let b = Expr::parse("cos(2*x)", &["x", "y"]).unwrap();
    let q = 0.5 * (p - 1.0);
    let spec = ProblemSpec::from_expressions(kernel, mesh, q, p + 0.5, lambda, &h, &b).unwrap();
    (spec, weights)
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [2.0, 3.0] {
        let (spec, weights) = problem(p, 12, 0.7);
        let mesh = spec.mesh().clone();
        let u = common::random_signed_field(&mesh, &mut rng);
        let g = gradient(&spec, &weights, &u).unwrap();
        for _ in 0..20 {
            let v = common::random_field(&mesh, &mut rng, -1.0, 1.0);
            let h = 1e-6;
            let shifted = |s: f64| {
                let w: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a + s * b).collect();
                energy(&spec, &weights, &Field::new(mesh.clone(), w).unwrap()).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let analytic = g.pairing(&v).unwrap();
            assert!(rel(fd, analytic) <= 1e-5, "p = {p}: {fd} vs {analytic}");
        }
    }
}

#[test]
fn gradient_vanishes_at_zero() {
    let (spec, weights) = problem(2.0, 6, 1.0);
    let g = gradient(&spec, &weights, &Field::zeros(spec.mesh().clone())).unwrap();
    assert!(g.values().iter().all(|v| *v == 0.0));
}

#[test]
fn concave_integral_is_negative_where_h_is() {
    let (spec, weights) = reference_spec(32, "sin(2*pi*x)");
    let u = Field::from_fn(spec.mesh().clone(), |x| if x[0] > 0.55 { 1.0 } else { 0.0 });
    let ri = reduced_integrals(&spec, &weights, &u).unwrap();
    let oracle: f64 = spec
        .mesh()
        .cell_measures()
        .iter()
        .enumerate()
        .filter(|(i, _)| spec.mesh().node(*i)[0] > 0.55)
        .map(|(i, c)| c * (2.0 * std::f64::consts::PI * spec.mesh().node(i)[0]).sin())
        .sum();
    assert!(ri.concave < 0.0);
    assert!(rel(ri.concave, oracle) < 1e-14);
}

#[test]
fn unit_weight_concave_integral_is_an_lp_norm() {
    let (spec, weights) = reference_spec(16, "1");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = common::random_signed_field(spec.mesh(), &mut rng);
    let ri = reduced_integrals(&spec, &weights, &u).unwrap();
    assert!(rel(ri.concave, lp_norm(&u, 1.5).unwrap().powf(1.5)) < 1e-14);
}

#[test]
fn energy_matches_independent_recomputation() {
    let (spec, weights) = problem(2.0, 8, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = common::random_signed_field(spec.mesh(), &mut rng);
    let mesh = spec.mesh();
    let v = u.values();
    let mut a = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            a += weights.pair(i, j) * (v[i] - v[j]).powi(2);
        }
        a += weights.exterior()[i] * v[i].powi(2);
    }
    let (q, r) = (spec.q(), spec.r());
    let mut rest = 0.0;
    for (i, vi) in v.iter().enumerate() {
        let c = mesh.cell_measures()[i];
        rest += c
            * (0.4 * spec.h()[i] * vi.abs().powf(q + 1.0) / (q + 1.0)
                + spec.b()[i] * vi.abs().powf(r + 1.0) / (r + 1.0));
    }
    let oracle = a / 2.0 - rest;
    assert!(rel(energy(&spec, &weights, &u).unwrap(), oracle) < 1e-12);
}

#[test]
fn coercivity_surrogate_on_nehari_points() {
    let (spec, weights) = reference_spec(32, "1");
    let est = nehari::estimate_lambda0(&spec, &weights, &nehari::SobolevSearch::default()).unwrap();
    let spec = spec.with_lambda(0.5 * est.lambda0).unwrap();
    let e = spec.exponents();
    let c1 = 1.0 / e.p - 1.0 / (e.r + 1.0);
    // J ≥ c₁A − λ(1/(q+1) − 1/(r+1)) ‖h‖_∞ (M S_{q+1})^{q+1} A^{(q+1)/p} on the Nehari set
    let c2 = e.lambda * (1.0 / (e.q + 1.0) - 1.0 / (e.r + 1.0)) * est.concave_bound(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..100 {
        let u = common::random_field(spec.mesh(), &mut rng, 0.0, 1.0);
        let ri = reduced_integrals(&spec, &weights, &u).unwrap();
        let Ok(report) = nehari::critical_points(&ri, &e) else {
            continue;
        };
        for root in &report.roots {
            let scaled = ri.scaled(root.t, &e);
            let j = phi(&ri, &e, root.t).unwrap();
            assert!(j >= c1 * scaled.norm_p - c2 * scaled.norm_p.powf((e.q + 1.0) / e.p));
            checked += 1;
        }
    }
    assert!(checked > 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn energy_along_ray_is_the_fibering_polynomial(seed in any::<u64>(), t in prop::sample::select(vec![0.5, 1.0, 2.0, 5.0])) {
        let (spec, weights) = problem(2.0, 8, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = common::random_signed_field(spec.mesh(), &mut rng);
        let ri = reduced_integrals(&spec, &weights, &u).unwrap();
        let direct = energy(&spec, &weights, &u.scaled(t)).unwrap();
        let poly = phi(&ri, &spec.exponents(), t).unwrap();
        let scale = ri.norm_p * t.powi(2) / 2.0;
        prop_assert!((direct - poly).abs() <= 1e-12 * scale.max(direct.abs()));
    }

    #[test]
    fn euler_identity(seed in any::<u64>()) {
        let (spec, weights) = problem(3.0, 8, 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = common::random_signed_field(spec.mesh(), &mut rng);
        let ri = reduced_integrals(&spec, &weights, &u).unwrap();
        let pairing = gradient(&spec, &weights, &u).unwrap().pairing(&u).unwrap();
        let expected = ri.norm_p - spec.lambda() * ri.concave - ri.convex;
        let scale = ri.norm_p + (spec.lambda() * ri.concave).abs() + ri.convex.abs();
        prop_assert!((pairing - expected).abs() <= 1e-12 * scale);
    }

    #[test]
    fn nehari_points_balance_the_three_integrals(seed in any::<u64>()) {
        let (spec, weights) = problem(2.0, 10, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = common::random_field(spec.mesh(), &mut rng, 0.05, 1.0);
        let ri = reduced_integrals(&spec, &weights, &u).unwrap();
        let e = spec.exponents();
        if let Ok(report) = nehari::critical_points(&ri, &e) {
            for root in report.roots {
                let w = u.scaled(root.t);
                let rw = reduced_integrals(&spec, &weights, &w).unwrap();
                let pairing = gradient(&spec, &weights, &w).unwrap().pairing(&w).unwrap();
                prop_assert!(pairing.abs() <= 1e-10 * rw.norm_p);
                prop_assert!((rw.norm_p - e.lambda * rw.concave - rw.convex).abs() <= 1e-10 * rw.norm_p);
            }
        }
    }

    #[test]
    fn classify_dead_band(a in 0.1f64..10.0, b in -5.0f64..5.0, d in -5.0f64..5.0) {
        let class = nehari::classify(&nehari::ReducedIntegrals::new(a, b, d), 1e-12);
        prop_assert_eq!(class.concave == nehari::Sign::Plus, b > 1e-12 * a);
        prop_assert_eq!(class.convex == nehari::Sign::Minus, d < -1e-12 * a);
    }
}
