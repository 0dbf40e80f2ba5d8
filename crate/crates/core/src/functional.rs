//! The energy `J_λ(u) = ‖u‖^p/p − λ/(q+1) ∫ h|u|^{q+1} − 1/(r+1) ∫ b|u|^{r+1}`,
//! its gradient, and the sign classes of the two weighted integrals.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::discretization::{abs_pow, same_mesh, signed_pow, EnergyWeights, Field, Mesh};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::kernel::KernelSpec;

/// Default dead band for sign classification, relative to `‖u‖^p`.
pub const DEFAULT_SIGN_TOL: f64 = 1e-12;

/// Exponents and weights of one concave-convex problem on a mesh.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    kernel: KernelSpec,
    mesh: Arc<Mesh>,
    q: f64,
    r: f64,
    lambda: f64,
    h: Vec<f64>,
    b: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(
        kernel: KernelSpec,
        mesh: Arc<Mesh>,
        q: f64,
        r: f64,
        lambda: f64,
        h: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        validate_exponents(&kernel, q, r)?;
        if kernel.dim() != mesh.dim() {
            return Err(Error::Config(format!(
                "kernel dimension {} does not match mesh dimension {}",
                kernel.dim(),
                mesh.dim()
            )));
        }
        validate_lambda(lambda)?;
        if h.len() != mesh.len() || b.len() != mesh.len() {
            return Err(Error::MeshMismatch);
        }
        if let Some(v) = h.iter().chain(&b).find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("weights h, b must be bounded (found {v})")));
        }
        Ok(ProblemSpec {
            kernel,
            mesh,
            q,
            r,
            lambda,
            h,
            b,
        })
    }

    /// Samples `h` and `b` (expressions in `x`, `y`) at the mesh nodes.
    pub fn from_expressions(
        kernel: KernelSpec,
        mesh: Arc<Mesh>,
        q: f64,
        r: f64,
        lambda: f64,
        h: &Expr,
        b: &Expr,
    ) -> Result<Self> {
        let sample = |e: &Expr| (0..mesh.len()).map(|i| e.eval(mesh.node(i))).collect::<Vec<_>>();
        let (hv, bv) = (sample(h), sample(b));
        Self::new(kernel, mesh, q, r, lambda, hv, bv)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        validate_lambda(lambda)?;
        Ok(ProblemSpec { lambda, ..self.clone() })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn p(&self) -> f64 {
        self.kernel.p()
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn h(&self) -> &[f64] {
        &self.h
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `‖h‖_∞` over the nodes.
    pub fn h_sup(&self) -> f64 {
        self.h.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖b⁺‖_∞` over the nodes.
    pub fn b_plus_sup(&self) -> f64 {
        self.b.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// Fractional critical exponent `p* = np / (n − pα)`.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(&self.kernel)
    }

    pub fn exponents(&self) -> Exponents {
        Exponents {
            p: self.p(),
            q: self.q,
            r: self.r,
            lambda: self.lambda,
        }
    }
}

/// `np / (n − pα)`, or `+∞` in the borderline case `n = pα`.
pub fn critical_exponent(kernel: &KernelSpec) -> f64 {
    let n = kernel.dim() as f64;
    let gap = n - kernel.p() * kernel.alpha();
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        n * kernel.p() / gap
    }
}

/// Checks `0 < q < p−1 < r < p*−1`, naming the first violated inequality.
pub fn validate_exponents(kernel: &KernelSpec, q: f64, r: f64) -> Result<()> {
    let p = kernel.p();
    let p_star = critical_exponent(kernel);
    if !(q > 0.0) {
        return Err(Error::Config(format!("0 < q violated (q = {q})")));
    }
    if !(q < p - 1.0) {
        return Err(Error::Config(format!("q < p−1 violated (q = {q}, p−1 = {})", p - 1.0)));
    }
    if !(p - 1.0 < r) {
        return Err(Error::Config(format!("p−1 < r violated (r = {r}, p−1 = {})", p - 1.0)));
    }
    if !(r < p_star - 1.0) {
        return Err(Error::Config(format!(
            "r < p*−1 violated (r = {r}, p*−1 = {})",
            p_star - 1.0
        )));
    }
    Ok(())
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("λ > 0 violated (λ = {lambda})")));
    }
    Ok(())
}

/// The scalar data `(p, q, r, λ)` every fibering computation needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub lambda: f64,
}

/// The three integrals that determine `t ↦ J_λ(t u)` completely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedIntegrals {
    /// `‖u‖_{X₀}^p`
    pub norm_p: f64,
    /// `∫_Ω h |u|^{q+1}`
    pub concave: f64,
    /// `∫_Ω b |u|^{r+1}`
    pub convex: f64,
}

impl ReducedIntegrals {
    pub fn new(norm_p: f64, concave: f64, convex: f64) -> Self {
        ReducedIntegrals {
            norm_p,
            concave,
            convex,
        }
    }

    /// Integrals of `t·u` given those of `u`.
    pub fn scaled(&self, t: f64, e: &Exponents) -> Self {
        ReducedIntegrals {
            norm_p: t.abs().powf(e.p) * self.norm_p,
            concave: t.abs().powf(e.q + 1.0) * self.concave,
            convex: t.abs().powf(e.r + 1.0) * self.convex,
        }
    }
}

pub fn reduced_integrals(spec: &ProblemSpec, weights: &EnergyWeights, u: &Field) -> Result<ReducedIntegrals> {
    same_mesh(&spec.mesh, u.mesh())?;
    let norm_p = weights.seminorm_p(u)?;
    let (q1, r1) = (spec.q + 1.0, spec.r + 1.0);
    let mut concave = 0.0;
    let mut convex = 0.0;
    for ((c, v), (h, b)) in spec
        .mesh
        .cell_measures()
        .iter()
        .zip(u.values())
        .zip(spec.h.iter().zip(&spec.b))
    {
        concave += c * h * abs_pow(*v, q1);
        convex += c * b * abs_pow(*v, r1);
    }
    Ok(ReducedIntegrals {
        norm_p,
        concave,
        convex,
    })
}

/// `J_λ(u)`.
pub fn energy(spec: &ProblemSpec, weights: &EnergyWeights, u: &Field) -> Result<f64> {
    let ri = reduced_integrals(spec, weights, u)?;
    Ok(energy_from(&ri, &spec.exponents()))
}

pub fn energy_from(ri: &ReducedIntegrals, e: &Exponents) -> f64 {
    ri.norm_p / e.p - e.lambda * ri.concave / (e.q + 1.0) - ri.convex / (e.r + 1.0)
}

/// Gradient of `J_λ` in the cell-weighted pairing: `Σ |I_i| g_i v_i = J_λ'(u) v`.
pub fn gradient(spec: &ProblemSpec, weights: &EnergyWeights, u: &Field) -> Result<Field> {
    same_mesh(&spec.mesh, u.mesh())?;
    let mut g = weights.apply_operator(u)?;
    let (lambda, q, r) = (spec.lambda, spec.q, spec.r);
    for (gi, (v, (h, b))) in g
        .values_mut()
        .iter_mut()
        .zip(u.values().iter().zip(spec.h.iter().zip(&spec.b)))
    {
        *gi -= lambda * h * signed_pow(*v, q) + b * signed_pow(*v, r);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Minus,
    Zero,
    Plus,
}

/// Membership in `H^±/H₀ × B^±/B₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignClass {
    pub concave: Sign,
    pub convex: Sign,
}

impl SignClass {
    pub fn is_boundary(&self) -> bool {
        self.concave == Sign::Zero || self.convex == Sign::Zero
    }
}

impl fmt::Display for SignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sym = |s: Sign, letter: char| match s {
            Sign::Minus => format!("{letter}-"),
            Sign::Zero => format!("{letter}0"),
            Sign::Plus => format!("{letter}+"),
        };
        let body = format!("{}∩{}", sym(self.concave, 'H'), sym(self.convex, 'B'));
        if self.is_boundary() {
            write!(f, "Boundary({body})")
        } else {
            f.write_str(&body)
        }
    }
}

/// Signs of the concave and convex integrals with dead band `tol · ‖u‖^p`.
pub fn classify(ri: &ReducedIntegrals, tol: f64) -> SignClass {
    let band = tol.max(0.0) * ri.norm_p;
    let sign = |v: f64| {
        if v.abs() <= band {
            Sign::Zero
        } else if v > 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    };
    SignClass {
        concave: sign(ri.concave),
        convex: sign(ri.convex),
    }
}
