//! Scalar analysis of the fibering map `φ_u(t) = J_λ(t u)`.
//!
//! Everything here depends on `u` only through its reduced integrals
//! `(A, B, D)`:
//!
//! ```text
//! φ(t)  = t^p A/p − λ t^{q+1} B/(q+1) − t^{r+1} D/(r+1)
//! φ'(t) = t^q (m(t) − λB),   m(t) = t^{p−1−q} A − t^{r−q} D
//! ```
//!
//! so the positive critical points of `φ` are the roots of `m(t) = λB`.

pub mod lambda0;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{classify, Exponents, ReducedIntegrals, Sign, SignClass, DEFAULT_SIGN_TOL};

/// Relative size of `m(t̂) − λB` below which the two roots are treated as merged.
const INFLECTION_TOL: f64 = 1e-12;

fn check_t(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("fibering parameter t = {t} must be ≥ 0")));
    }
    Ok(())
}

pub fn phi(ri: &ReducedIntegrals, e: &Exponents, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(t.powf(e.p) * ri.norm_p / e.p
        - e.lambda * t.powf(e.q + 1.0) * ri.concave / (e.q + 1.0)
        - t.powf(e.r + 1.0) * ri.convex / (e.r + 1.0))
}

pub fn phi_prime(ri: &ReducedIntegrals, e: &Exponents, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(t.powf(e.p - 1.0) * ri.norm_p - e.lambda * t.powf(e.q) * ri.concave - t.powf(e.r) * ri.convex)
}

/// `φ''(t)`; at `t = 0` only when `q ≥ 1`.
pub fn phi_second(ri: &ReducedIntegrals, e: &Exponents, t: f64) -> Result<f64> {
    check_t(t)?;
    if t == 0.0 && e.q < 1.0 {
        return Err(Error::Domain("φ'' is unbounded at t = 0 when q < 1".into()));
    }
    Ok((e.p - 1.0) * t.powf(e.p - 2.0) * ri.norm_p
        - e.q * e.lambda * t.powf(e.q - 1.0) * ri.concave
        - e.r * t.powf(e.r - 1.0) * ri.convex)
}

pub fn m_u(ri: &ReducedIntegrals, e: &Exponents, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("m_u needs t > 0 (t = {t})")));
    }
    Ok(m_raw(ri, e, t))
}

fn m_raw(ri: &ReducedIntegrals, e: &Exponents, t: f64) -> f64 {
    t.powf(e.p - 1.0 - e.q) * ri.norm_p - t.powf(e.r - e.q) * ri.convex
}

/// The unique maximiser `t̂ = ((p−1−q) A / ((r−q) D))^{1/(r−p+1)}` of `m_u`, when `D > 0`.
pub fn m_u_argmax(ri: &ReducedIntegrals, e: &Exponents) -> Option<f64> {
    if ri.convex > 0.0 && ri.norm_p > 0.0 {
        let ratio = (e.p - 1.0 - e.q) * ri.norm_p / ((e.r - e.q) * ri.convex);
        Some(ratio.powf(1.0 / (e.r - e.p + 1.0)))
    } else {
        None
    }
}

/// `t* = (A/D)^{1/(r−p+1)}` and `F_u(t*)`, the maximum of `F_u(t) = t^p A/p − t^{r+1} D/(r+1)`.
pub fn t_star(ri: &ReducedIntegrals, e: &Exponents) -> Result<(f64, f64)> {
    if !(ri.convex > 0.0) {
        return Err(Error::BranchNotApplicable(format!(
            "t* needs ∫ b|u|^(r+1) > 0 (found {})",
            ri.convex
        )));
    }
    let gap = e.r - e.p + 1.0;
    let t = (ri.norm_p / ri.convex).powf(1.0 / gap);
    let f = (1.0 / e.p - 1.0 / (e.r + 1.0)) * (ri.norm_p.powf(e.r + 1.0) / ri.convex.powf(e.p)).powf(1.0 / gap);
    Ok((t, f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    Min,
    Max,
    Inflection,
}

impl fmt::Display for RootKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RootKind::Min => "min",
            RootKind::Max => "max",
            RootKind::Inflection => "inflection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberingRoot {
    pub t: f64,
    pub kind: RootKind,
    pub phi: f64,
    pub phi_prime: f64,
    pub phi_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberingReport {
    pub case: String,
    #[serde(skip)]
    pub class: SignClass,
    pub integrals: ReducedIntegrals,
    pub exponents: Exponents,
    /// Positive critical points in increasing order.
    pub roots: Vec<FiberingRoot>,
    pub t_hat: Option<f64>,
    pub t_star: Option<f64>,
    pub f_at_t_star: Option<f64>,
    pub phi_at_t_star: Option<f64>,
    pub notes: Vec<String>,
}

impl FiberingReport {
    pub fn root(&self, kind: RootKind) -> Option<&FiberingRoot> {
        self.roots.iter().find(|r| r.kind == kind)
    }

    pub fn is_degenerate(&self) -> bool {
        self.root(RootKind::Inflection).is_some()
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    debug_assert!(flo.signum() != fhi.signum());
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    if flo.abs() <= fhi.abs() {
        lo
    } else {
        hi
    }
}

fn scan_bound(ri: &ReducedIntegrals, e: &Exponents) -> f64 {
    let a = ri.norm_p;
    let mut bound: f64 = 1.0;
    if ri.convex != 0.0 {
        bound = bound.max((a / ri.convex.abs()).powf(1.0 / (e.r - e.p + 1.0)));
    }
    if ri.concave != 0.0 {
        bound = bound.max((e.lambda * ri.concave.abs() / a).powf(1.0 / (e.p - 1.0 - e.q)));
    }
    10.0 * bound
}

/// Doubles `hi` until `g(hi)` has the sign `want_positive`.
fn grow_bracket(g: &impl Fn(f64) -> f64, mut hi: f64, want_positive: bool) -> Result<f64> {
    for _ in 0..2048 {
        let v = g(hi);
        if (v > 0.0) == want_positive && v != 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    Err(Error::Domain("fibering root bracket overflowed".into()))
}

/// Locates every positive critical point of `φ_u` and classifies it by the sign of `φ''`.
///
/// A concave integral inside the classification dead band is treated as zero.
pub fn critical_points(ri: &ReducedIntegrals, e: &Exponents) -> Result<FiberingReport> {
    if !(ri.norm_p > 0.0) {
        return Err(Error::ZeroField);
    }
    let class = classify(ri, DEFAULT_SIGN_TOL);
    let lb = if class.concave == Sign::Zero {
        0.0
    } else {
        e.lambda * ri.concave
    };
    let g = |t: f64| m_raw(ri, e, t) - lb;
    let t_max = scan_bound(ri, e);
    let t_hat = m_u_argmax(ri, e);

    let mut ts: Vec<(f64, Option<RootKind>)> = Vec::new();
    match t_hat {
        None => {
            // m increases from 0 to ∞
            if lb > 0.0 {
                let hi = grow_bracket(&g, t_max, true)?;
                ts.push((bisect(g, 0.0, hi), None));
            }
        }
        Some(th) => {
            let peak = g(th);
            let scale = m_raw(ri, e, th)
                .abs()
                .max(th.powf(e.p - 1.0 - e.q) * ri.norm_p)
                .max(lb.abs());
            if peak.abs() <= INFLECTION_TOL * scale && lb > 0.0 {
                ts.push((th, Some(RootKind::Inflection)));
            } else if peak > 0.0 {
                if lb > 0.0 {
                    ts.push((bisect(g, 0.0, th), None));
                }
                let hi = grow_bracket(&g, t_max.max(2.0 * th), false)?;
                ts.push((bisect(g, th, hi), None));
            }
        }
    }

    let mut roots = Vec::with_capacity(ts.len());
    for (t, forced) in ts {
        let second = phi_second(ri, e, t)?;
        let kind = forced.unwrap_or(if second > 0.0 {
            RootKind::Min
        } else if second < 0.0 {
            RootKind::Max
        } else {
            RootKind::Inflection
        });
        roots.push(FiberingRoot {
            t,
            kind,
            phi: phi(ri, e, t)?,
            phi_prime: phi_prime(ri, e, t)?,
            phi_second: second,
        });
    }

    let star = t_star(ri, e).ok();
    let phi_at_t_star = match star {
        Some((t, _)) => Some(phi(ri, e, t)?),
        None => None,
    };
    let mut notes = Vec::new();
    if class.concave == Sign::Plus && class.convex == Sign::Minus {
        notes.push(
            "single critical point is a minimum of the fibering map (φ'' > 0); \
             classified on the plus branch"
                .to_string(),
        );
    }
    if roots.iter().any(|r| r.kind == RootKind::Inflection) {
        notes.push("degenerate fibering map: merged critical point with φ'' ≈ 0".to_string());
    }
    Ok(FiberingReport {
        case: class.to_string(),
        class,
        integrals: *ri,
        exponents: *e,
        roots,
        t_hat,
        t_star: star.map(|s| s.0),
        f_at_t_star: star.map(|s| s.1),
        phi_at_t_star,
        notes,
    })
}

/// The two branches of the Nehari set: fibering minima and fibering maxima.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn root_kind(self) -> RootKind {
        match self {
            Branch::Plus => RootKind::Min,
            Branch::Minus => RootKind::Max,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        })
    }
}

/// The scaling `t` with `t u` on the requested branch.
pub fn project(ri: &ReducedIntegrals, e: &Exponents, branch: Branch) -> Result<f64> {
    let report = critical_points(ri, e)?;
    report
        .root(branch.root_kind())
        .map(|r| r.t)
        .ok_or_else(|| Error::Projection {
            branch: branch.to_string(),
            case: report.case.clone(),
        })
}

/// `count` equally spaced samples `(t, φ(t))` on `[0, t_max]`.
pub fn phi_samples(ri: &ReducedIntegrals, e: &Exponents, t_max: f64, count: usize) -> Result<Vec<(f64, f64)>> {
    if !(t_max > 0.0) || count < 2 {
        return Err(Error::Domain("sampling needs t_max > 0 and at least two points".into()));
    }
    (0..count)
        .map(|k| {
            let t = t_max * k as f64 / (count - 1) as f64;
            phi(ri, e, t).map(|v| (t, v))
        })
        .collect()
}
