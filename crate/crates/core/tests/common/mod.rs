#![allow(dead_code)]

use std::sync::Arc;

use nehari::{
    estimate_lambda0, Domain, EnergyWeights, Expr, Field, KernelSpec, Lambda0Estimate, Mesh, NearField, ProblemSpec,
    SobolevSearch,
};
use rand::Rng;

pub fn unit_interval(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::build(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
}

pub fn unit_square(n: usize) -> Arc<Mesh> {
    Arc::new(
        Mesh::build(
            Domain::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            n,
        )
        .unwrap(),
    )
}

/// 1D, Ω = [0,1], p = 2, α = 0.5, q = 0.5, r = 3, b ≡ 1, h given, λ = 1.
pub fn reference_spec(n: usize, h: &str) -> (ProblemSpec, EnergyWeights) {
    let mesh = unit_interval(n);
    let kernel = KernelSpec::fractional(1, 2.0, 0.5).unwrap();
    let weights = EnergyWeights::assemble(&mesh, &kernel, NearField::Richardson).unwrap();
    let h = Expr::parse(h, &["x", "y"]).unwrap();
    let spec = ProblemSpec::from_expressions(kernel, mesh, 0.5, 3.0, 1.0, &h, &Expr::constant(1.0)).unwrap();
    (spec, weights)
}

/// The reference problem at `λ = λ₀/2` together with its threshold estimate.
pub fn reference_problem(n: usize, h: &str) -> (ProblemSpec, EnergyWeights, Lambda0Estimate) {
    let (spec, weights) = reference_spec(n, h);
    let est = estimate_lambda0(&spec, &weights, &SobolevSearch::default()).unwrap();
    (spec.with_lambda(0.5 * est.lambda0).unwrap(), weights, est)
}

pub fn random_field(mesh: &Arc<Mesh>, rng: &mut impl Rng, lo: f64, hi: f64) -> Field {
    let values = (0..mesh.len()).map(|_| rng.gen_range(lo..hi)).collect();
    Field::new(mesh.clone(), values).unwrap()
}

/// Random values with magnitude in `[0.1, 1]` and random sign.
pub fn random_signed_field(mesh: &Arc<Mesh>, rng: &mut impl Rng) -> Field {
    let values = (0..mesh.len())
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Field::new(mesh.clone(), values).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
