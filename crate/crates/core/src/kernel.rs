//! Interaction kernels `K : ℝⁿ∖{0} → (0, ∞)` and numerical admissibility checks.
//!
//! A kernel is admissible when
//!
//! 1. `m K ∈ L¹(ℝⁿ)` with `m(z) = min(1, |z|^p)`,
//! 2. `K(z) ≥ θ |z|^-(n+pα)`,
//! 3. `K(z) = K(-z)`.
//!
//! The checks are numerical: condition 1 is estimated by ball quadrature plus a
//! power-law tail, conditions 2 and 3 are sampled on a radial grid.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad;

type KernelFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// User supplied kernel evaluator.
#[derive(Clone)]
pub struct CustomKernel {
    label: String,
    eval: Arc<KernelFn>,
    singularity_exponent: Option<f64>,
}

impl CustomKernel {
    pub fn new<F>(label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        CustomKernel {
            label: label.into(),
            eval: Arc::new(eval),
            singularity_exponent: None,
        }
    }

    /// Kernel given as an expression in `z1`, `z2` and `r = |z|`.
    pub fn from_expression(source: &str) -> Result<Self> {
        let expr = Expr::parse(source, &["z1", "z2", "r"])?;
        let label = expr.source().to_string();
        Ok(CustomKernel::new(label, move |z: &[f64]| {
            let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
            let z1 = z.first().copied().unwrap_or(0.0);
            let z2 = z.get(1).copied().unwrap_or(0.0);
            expr.eval(&[z1, z2, r])
        }))
    }

    /// Local blow-up rate `K(z) ~ |z|^-e` near the origin; defaults to `n + pα`.
    pub fn with_singularity_exponent(mut self, exponent: f64) -> Self {
        self.singularity_exponent = Some(exponent);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("label", &self.label)
            .field("singularity_exponent", &self.singularity_exponent)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// `K(z) = |z|^-(n+pα)`.
    Fractional,
    /// `K(z) = μ |z|^-(n+pα)` with `μ ≥ θ`.
    ScaledFractional {
        multiplier: f64,
    },
    Custom(CustomKernel),
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Fractional => "fractional",
            KernelFamily::ScaledFractional { .. } => "scaled-fractional",
            KernelFamily::Custom(_) => "custom",
        }
    }
}

/// An interaction kernel together with the exponents it is paired with.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    dim: usize,
    p: f64,
    alpha: f64,
    theta: f64,
    family: KernelFamily,
}

impl KernelSpec {
    pub fn new(dim: usize, p: f64, alpha: f64, theta: f64, family: KernelFamily) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension n = {dim} unsupported (n ∈ {{1, 2}})")));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Config(format!("p ≥ 2 violated (p = {p})")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("0 < α < 1 violated (α = {alpha})")));
        }
        // n = pα is the borderline case with p* = ∞
        if !(dim as f64 >= p * alpha) {
            return Err(Error::Config(format!(
                "n ≥ pα violated (n = {dim}, pα = {})",
                p * alpha
            )));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Config(format!("θ > 0 violated (θ = {theta})")));
        }
        if let KernelFamily::ScaledFractional { multiplier } = family {
            if !(multiplier >= theta) || !multiplier.is_finite() {
                return Err(Error::Config(format!(
                    "multiplier ≥ θ violated (multiplier = {multiplier}, θ = {theta})"
                )));
            }
        }
        Ok(KernelSpec {
            dim,
            p,
            alpha,
            theta,
            family,
        })
    }

    /// The plain fractional kernel with `θ = 1`.
    pub fn fractional(dim: usize, p: f64, alpha: f64) -> Result<Self> {
        Self::new(dim, p, alpha, 1.0, KernelFamily::Fractional)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// `n + pα`, the exponent of the reference power law.
    pub fn power_exponent(&self) -> f64 {
        self.dim as f64 + self.p * self.alpha
    }

    /// Blow-up rate at the origin used for quadrature grading and tails.
    pub fn singularity_exponent(&self) -> f64 {
        match &self.family {
            KernelFamily::Custom(c) => c.singularity_exponent.unwrap_or(self.power_exponent()),
            _ => self.power_exponent(),
        }
    }

    /// `Some(μ)` when `K(z) = μ |z|^-(n+pα)` exactly.
    pub fn power_law_multiplier(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Fractional => Some(1.0),
            KernelFamily::ScaledFractional { multiplier } => Some(*multiplier),
            KernelFamily::Custom(_) => None,
        }
    }

    /// Evaluates `K(z)`; `z` must be non-zero and have `n` components.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::Domain(format!(
                "point has {} components, kernel dimension is {}",
                z.len(),
                self.dim
            )));
        }
        if z.iter().all(|c| *c == 0.0) {
            return Err(Error::Domain("kernel singularity at z = 0".into()));
        }
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Fractional => radius(z).powf(-self.power_exponent()),
            KernelFamily::ScaledFractional { multiplier } => multiplier * radius(z).powf(-self.power_exponent()),
            KernelFamily::Custom(c) => (c.eval)(z),
        }
    }

    /// Numerically checks the three admissibility conditions.
    pub fn check_admissible(&self, sampling: &KernelSampling) -> Result<KernelCheckReport> {
        sampling.validate()?;
        let (mk_ball, mk_tail) = self.mk_integral(sampling);
        let mk_integral = mk_ball + mk_tail;
        let integrable = mk_integral.is_finite() && mk_integral > 0.0;

        let exponent = self.power_exponent();
        let mut worst_ratio = f64::INFINITY;
        let mut max_asymmetry: f64 = 0.0;
        let mut max_value: f64 = 0.0;
        for dir in probe_directions(self.dim, sampling.probe_directions) {
            for k in 0..sampling.probe_radii {
                let t = k as f64 / (sampling.probe_radii.max(2) - 1) as f64;
                let rad = 10f64.powf(-3.0 + 6.0 * t);
                let z: Vec<f64> = dir.iter().take(self.dim).map(|c| c * rad).collect();
                let neg: Vec<f64> = z.iter().map(|c| -c).collect();
                let kp = self.eval_unchecked(&z);
                let kn = self.eval_unchecked(&neg);
                for (value, r) in [(kp, rad), (kn, rad)] {
                    let ratio = value * r.powf(exponent) / self.theta;
                    worst_ratio = if ratio.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        worst_ratio.min(ratio)
                    };
                }
                max_value = max_value.max(kp.abs()).max(kn.abs());
                let diff = (kp - kn).abs();
                max_asymmetry = if diff.is_nan() {
                    f64::INFINITY
                } else {
                    max_asymmetry.max(diff)
                };
            }
        }
        let lower_bound_ok = worst_ratio >= 1.0 - 1e-12;
        let symmetry_ok = max_asymmetry <= 1e-12 * max_value;
        Ok(KernelCheckReport {
            family: self.family.name().to_string(),
            mk_integral,
            mk_ball,
            mk_tail,
            integrable,
            lower_bound_ok,
            worst_lower_bound_ratio: worst_ratio,
            symmetry_ok,
            max_asymmetry,
        })
    }

    /// `(ball part, tail part)` of `∫ min(1,|z|^p) K(z) dz`.
    fn mk_integral(&self, sampling: &KernelSampling) -> (f64, f64) {
        let n = self.dim as f64;
        let p = self.p;
        let big_r = sampling.ball_radius;
        let mut ball = 0.0;
        let mut tail = 0.0;
        for (dir, weight) in quadrature_directions(self.dim, sampling.angular_points) {
            let point = |r: f64| -> Vec<f64> { dir.iter().take(self.dim).map(|c| c * r).collect() };
            let inner = quad::graded_unit(
                |r| {
                    if r <= 0.0 {
                        return 0.0;
                    }
                    r.powf(p) * self.eval_unchecked(&point(r)) * r.powf(n - 1.0)
                },
                sampling.radial_levels,
            );
            let outer_profile = |r: f64| self.eval_unchecked(&point(r)) * r.powf(n - 1.0);
            let mut outer = 0.0;
            let mut lo = 1.0;
            while lo < big_r {
                let hi = (2.0 * lo).min(big_r);
                outer += quad::gl16().integrate(lo, hi, &outer_profile);
                lo = hi;
            }
            // power-law fit of the decay beyond the ball
            let k1 = self.eval_unchecked(&point(big_r));
            let k2 = self.eval_unchecked(&point(2.0 * big_r));
            let t = if k1 == 0.0 && k2 == 0.0 {
                0.0
            } else if k1 > 0.0 && k2 > 0.0 {
                let decay = -(k2 / k1).log2();
                let excess = decay - n;
                if excess > 0.0 {
                    k1 * big_r.powf(n) / excess
                } else {
                    f64::INFINITY
                }
            } else {
                f64::INFINITY
            };
            ball += weight * (inner + outer);
            tail += weight * t;
        }
        (ball, tail)
    }
}

fn radius(z: &[f64]) -> f64 {
    match z {
        [x] => x.abs(),
        [x, y] => x.hypot(*y),
        _ => z.iter().map(|c| c * c).sum::<f64>().sqrt(),
    }
}

/// Unit directions with quadrature weights over the sphere `S^{n-1}`.
fn quadrature_directions(dim: usize, angular: usize) -> Vec<([f64; 2], f64)> {
    if dim == 1 {
        vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)]
    } else {
        let w = 2.0 * std::f64::consts::PI / angular as f64;
        (0..angular)
            .map(|k| {
                let th = (k as f64 + 0.5) * w;
                ([th.cos(), th.sin()], w)
            })
            .collect()
    }
}

/// Half-sphere probe directions; the checks evaluate both `z` and `-z`.
fn probe_directions(dim: usize, count: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        vec![[1.0, 0.0]]
    } else {
        (0..count)
            .map(|k| {
                let th = std::f64::consts::PI * (k as f64 + 0.25) / count as f64;
                [th.cos(), th.sin()]
            })
            .collect()
    }
}

/// Resolution parameters for [`KernelSpec::check_admissible`].
#[derive(Debug, Clone, Serialize)]
pub struct KernelSampling {
    /// Geometric grading levels toward the origin on `[0, 1]`.
    pub radial_levels: usize,
    /// Outer radius of the quadrature ball (≥ 1); beyond it a power-law tail is fitted.
    pub ball_radius: f64,
    /// Angular midpoints (n = 2 only).
    pub angular_points: usize,
    pub probe_radii: usize,
    pub probe_directions: usize,
}

impl Default for KernelSampling {
    fn default() -> Self {
        KernelSampling {
            radial_levels: 40,
            ball_radius: 64.0,
            angular_points: 64,
            probe_radii: 25,
            probe_directions: 16,
        }
    }
}

impl KernelSampling {
    fn validate(&self) -> Result<()> {
        if self.radial_levels == 0 || self.angular_points == 0 || self.probe_radii == 0 || self.probe_directions == 0 {
            return Err(Error::Domain("sampling resolution must be positive".into()));
        }
        if !(self.ball_radius >= 1.0) || !self.ball_radius.is_finite() {
            return Err(Error::Domain("ball radius must be finite and ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelCheckReport {
    pub family: String,
    /// Estimate of `∫ min(1,|z|^p) K(z) dz` (ball + tail).
    pub mk_integral: f64,
    pub mk_ball: f64,
    pub mk_tail: f64,
    pub integrable: bool,
    pub lower_bound_ok: bool,
    /// Smallest sampled `K(z)|z|^{n+pα}/θ`.
    pub worst_lower_bound_ratio: f64,
    pub symmetry_ok: bool,
    /// Largest sampled `|K(z) - K(-z)|`.
    pub max_asymmetry: f64,
}

impl KernelCheckReport {
    pub fn admissible(&self) -> bool {
        self.integrable && self.lower_bound_ok && self.symmetry_ok
    }
}
