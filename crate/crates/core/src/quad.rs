//! Quadrature helpers shared by kernel checks and weight assembly.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Fixed 16-point Gauss–Legendre rule.
pub(crate) fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16).expect("degree >= 2"))
}

/// Adaptive double-exponential quadrature on a finite interval.
///
/// Tolerates integrable endpoint singularities.
pub(crate) fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, abs_tol).integral
}

/// Composite Gauss–Legendre on `[0, 1]` with panels graded geometrically toward 0:
/// `[0, 2^-levels], [2^-levels, 2^-levels+1], …, [1/2, 1]`.
pub(crate) fn graded_unit<F: Fn(f64) -> f64>(f: F, levels: usize) -> f64 {
    let rule = gl16();
    let mut total = 0.0;
    let mut hi = 1.0;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        total += rule.integrate(lo, hi, &f);
        hi = lo;
    }
    total + rule.integrate(0.0, hi, &f)
}

/// `∫_start^∞ g(r) dr` for a radial profile `g` that decays like `r^-(1+s)` with `s > 0`.
///
/// Dyadic panels out to `start · 2^panels`, then the power-law remainder
/// `g(R) R / s`. Returns `(body, tail)`.
pub(crate) fn radial_to_infinity<F: Fn(f64) -> f64>(g: F, start: f64, decay_excess: f64, panels: usize) -> (f64, f64) {
    let rule = gl16();
    let mut body = 0.0;
    let mut lo = start;
    for _ in 0..panels {
        let hi = 2.0 * lo;
        body += rule.integrate(lo, hi, &g);
        lo = hi;
    }
    let tail = if decay_excess > 0.0 {
        g(lo) * lo / decay_excess
    } else {
        f64::INFINITY
    };
    (body, tail)
}
