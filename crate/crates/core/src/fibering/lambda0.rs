//! Discrete embedding constants and the threshold `λ₀` below which every
//! fibering map in `H⁺ ∩ B⁺` has exactly two critical points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{lp_norm, signed_pow, EnergyWeights, Field, GramFactor};
use crate::error::{Error, Result};
use crate::functional::ProblemSpec;

/// Randomised ascent used to estimate `sup ‖u‖_m / ‖u‖_{X₀}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SobolevSearch {
    pub starts: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for SobolevSearch {
    fn default() -> Self {
        SobolevSearch {
            starts: 64,
            ascent_steps: 200,
            seed: 42,
        }
    }
}

/// Seed of the `k`-th independent stream derived from a base seed.
pub(crate) fn stream_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn log_ratio(weights: &EnergyWeights, u: &Field, m: f64) -> Result<f64> {
    let a = weights.seminorm_p(u)?;
    Ok(lp_norm(u, m)?.ln() - a.ln() / weights.p())
}

fn ascend(weights: &EnergyWeights, gram: &GramFactor, m: f64, mut u: Field, steps: usize) -> Result<f64> {
    let cells = weights.mesh().cell_measures().to_vec();
    let mut value = log_ratio(weights, &u, m)?;
    let mut eta = f64::NAN;
    for _ in 0..steps {
        let a = weights.seminorm_p(&u)?;
        let lm = lp_norm(&u, m)?.powf(m);
        let op = weights.apply_operator(&u)?;
        let rhs: Vec<f64> = (0..u.len())
            .map(|i| cells[i] * (signed_pow(u.values()[i], m - 1.0) / lm - op.values()[i] / a))
            .collect();
        let d = gram.solve(&rhs);
        let dmax = d.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let umax = u.values().iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if dmax == 0.0 || !dmax.is_finite() {
            break;
        }
        if !eta.is_finite() {
            eta = 0.5 * umax / dmax;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let cand = Field::new(
                u.mesh().clone(),
                u.values().iter().zip(&d).map(|(x, s)| x + eta * s).collect(),
            )?;
            if !cand.is_zero() {
                let v = log_ratio(weights, &cand, m)?;
                if v > value {
                    let scale = 1.0 / cand.values().iter().fold(0.0f64, |s, x| s.max(x.abs()));
                    u = cand.scaled(scale);
                    value = v;
                    accepted = true;
                    break;
                }
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        eta *= 2.0;
    }
    Ok(value)
}

/// Estimates `S_m = sup_u ‖u‖_{L^m} / ‖u‖_{X₀}` over the mesh by seeded
/// multistart preconditioned ascent. The result is a lower bound on the
/// discrete supremum.
pub fn embedding_constant(weights: &EnergyWeights, gram: &GramFactor, m: f64, search: &SobolevSearch) -> Result<f64> {
    if search.starts == 0 || search.ascent_steps == 0 {
        return Err(Error::Config(
            "Sobolev search needs at least one start and one step".into(),
        ));
    }
    if m < 1.0 {
        return Err(Error::Domain(format!("embedding exponent m = {m} < 1")));
    }
    let mesh = weights.mesh().clone();
    let n = mesh.len();
    let results: Vec<Result<f64>> = (0..search.starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(search.seed, k));
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let u = Field::new(mesh.clone(), values)?;
            ascend(weights, gram, m, u, search.ascent_steps)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for r in results {
        best = best.max(r?);
    }
    let s = best.exp();
    if !(s.is_finite() && s > 1e-300) {
        return Err(Error::Estimation(format!("degenerate embedding constant S_{m} = {s}")));
    }
    Ok(s)
}

/// Threshold estimate together with every constant that enters it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lambda0Estimate {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Embedding constant for `L^{q+1}`.
    pub s_q1: f64,
    /// Embedding constant for `L^{r+1}`.
    pub s_r1: f64,
    /// Embedding constant for `L^p`.
    pub s_p: f64,
    /// `max(1, θ^{-1/p})`.
    pub c_theta: f64,
    /// Norm-equivalence constant `(1 + S_p)^p`.
    pub c_disc: f64,
    /// Comparison constant `c(θ) (1 + S_p)` multiplying every `S_m`.
    pub m_const: f64,
    pub h_sup: f64,
    pub b_plus_sup: f64,
    pub delta: f64,
    pub c_const: f64,
    pub lambda0: f64,
    /// Always true: the constants come from a finite search, not a proof.
    pub desk_scale_estimate: bool,
}

impl Lambda0Estimate {
    #[allow(clippy::too_many_arguments)]
    pub fn from_constants(
        p: f64,
        q: f64,
        r: f64,
        theta: f64,
        h_sup: f64,
        b_plus_sup: f64,
        s_q1: f64,
        s_r1: f64,
        s_p: f64,
    ) -> Result<Self> {
        if !(b_plus_sup > 0.0) {
            return Err(Error::Estimation("b⁺ ≡ 0: the convex part never dominates".into()));
        }
        if !(h_sup > 0.0) {
            return Err(Error::Estimation("h ≡ 0: λ₀ is unbounded".into()));
        }
        for (name, s) in [("S_q+1", s_q1), ("S_r+1", s_r1), ("S_p", s_p)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Estimation(format!("degenerate constant {name} = {s}")));
            }
        }
        let c_theta = 1f64.max(theta.powf(-1.0 / p));
        let c_disc = (1.0 + s_p).powf(p);
        let m_const = c_theta * (1.0 + s_p);
        let gap = r - p + 1.0;
        let delta =
            gap / (p * (r + 1.0)) * (1.0 / (b_plus_sup.powf(p) * (m_const * s_r1).powf(p * (r + 1.0)))).powf(1.0 / gap);
        let c_const = h_sup / (q + 1.0) * (m_const * s_q1).powf(q + 1.0) * (p * (r + 1.0) / gap).powf((q + 1.0) / p);
        let lambda0 = delta.powf((p - 1.0 - q) / p) / c_const;
        if !(delta > 0.0 && lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::Estimation(format!(
                "constants out of floating-point range (δ = {delta}, λ₀ = {lambda0})"
            )));
        }
        Ok(Lambda0Estimate {
            p,
            q,
            r,
            s_q1,
            s_r1,
            s_p,
            c_theta,
            c_disc,
            m_const,
            h_sup,
            b_plus_sup,
            delta,
            c_const,
            lambda0,
            desk_scale_estimate: true,
        })
    }

    /// Lower bound `δ^{(q+1)/p} (δ^{(p−1−q)/p} − λ c)` for the energy on the minus branch.
    pub fn delta1(&self, lambda: f64) -> f64 {
        let (p, q) = (self.p, self.q);
        self.delta.powf((q + 1.0) / p) * (self.delta.powf((p - 1.0 - q) / p) - lambda * self.c_const)
    }

    /// `‖h‖_∞ (M S_{q+1})^{q+1} A^{(q+1)/p}`, an upper bound on `|∫ h|u|^{q+1}|`.
    pub fn concave_bound(&self, norm_p: f64) -> f64 {
        self.h_sup * (self.m_const * self.s_q1).powf(self.q + 1.0) * norm_p.powf((self.q + 1.0) / self.p)
    }

    /// `‖b⁺‖_∞ (M S_{r+1})^{r+1} A^{(r+1)/p}`, an upper bound on `∫ b|u|^{r+1}`.
    pub fn convex_bound(&self, norm_p: f64) -> f64 {
        self.b_plus_sup * (self.m_const * self.s_r1).powf(self.r + 1.0) * norm_p.powf((self.r + 1.0) / self.p)
    }
}

pub fn estimate_lambda0(
    spec: &ProblemSpec,
    weights: &EnergyWeights,
    search: &SobolevSearch,
) -> Result<Lambda0Estimate> {
    if !(spec.b_plus_sup() > 0.0) {
        return Err(Error::Estimation("b⁺ ≡ 0: the convex part never dominates".into()));
    }
    if !(spec.h_sup() > 0.0) {
        return Err(Error::Estimation("h ≡ 0: λ₀ is unbounded".into()));
    }
    let gram = weights.gram()?;
    let (p, q, r) = (spec.p(), spec.q(), spec.r());
    let s_q1 = embedding_constant(weights, &gram, q + 1.0, search)?;
    let s_r1 = embedding_constant(weights, &gram, r + 1.0, search)?;
    let s_p = embedding_constant(weights, &gram, p, search)?;
    Lambda0Estimate::from_constants(
        p,
        q,
        r,
        spec.kernel().theta(),
        spec.h_sup(),
        spec.b_plus_sup(),
        s_q1,
        s_r1,
        s_p,
    )
}
