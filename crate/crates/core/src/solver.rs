//! Nehari-projected descent for the two non-negative solutions.
//!
//! Each iterate lies on one branch of the Nehari set. A step moves along the
//! Sobolev gradient `L⁻¹ J'(w)`, clips negative values, and rescales back onto
//! the branch with the fibering projection. Steps are accepted by an Armijo
//! test on the energy. Once the energy decrease drops below its rounding
//! floor, a few projected Newton steps finish the job, accepted only when the
//! dual residual shrinks.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{abs_pow, lp_norm, same_mesh, EnergyWeights, Field, GramFactor};
use crate::error::{Error, Result};
use crate::fibering::lambda0::stream_seed;
use crate::fibering::{project, Branch};
use crate::functional::{energy_from, gradient, reduced_integrals, ProblemSpec, ReducedIntegrals, Sign};

/// Backtracking line search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepRule {
    /// Initial and largest step `η₀`.
    pub initial: f64,
    pub shrink: f64,
    /// Armijo constant `c` in `J(w_new) ≤ J(w) − c η ‖J'(w)‖²_*`.
    pub sufficient_decrease: f64,
    /// Factor applied to `η` after an accepted step, capped at `initial`.
    pub growth: f64,
    pub max_backtracks: usize,
    /// Newton steps allowed once descent reaches the rounding floor of the energy.
    pub max_polish_steps: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            initial: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            growth: 2.0,
            max_backtracks: 60,
            max_polish_steps: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub step_rule: StepRule,
    /// Stop once the dual-norm residual `‖J'(w)‖_*` is at most
    /// `tol_residual · min(1, ‖w‖_{X₀})`.
    pub tol_residual: f64,
    /// Stop once `η ‖d‖_∞ ≤ tol_step ‖w‖_∞`.
    pub tol_step: f64,
    pub multistart: usize,
    pub seed: u64,
    pub truncate_negative: bool,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 2000,
            step_rule: StepRule::default(),
            tol_residual: 1e-10,
            tol_step: 1e-15,
            multistart: 8,
            seed: 42,
            truncate_negative: true,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.step_rule;
        let checks = [
            (self.tol_residual > 0.0, "tol_residual > 0"),
            (self.tol_step > 0.0, "tol_step > 0"),
            (self.multistart >= 1, "multistart ≥ 1"),
            (self.max_outer_iters >= 1, "max_outer_iters ≥ 1"),
            (s.initial > 0.0 && s.initial.is_finite(), "initial step > 0"),
            (s.shrink > 0.0 && s.shrink < 1.0, "0 < shrink < 1"),
            (
                s.sufficient_decrease > 0.0 && s.sufficient_decrease < 1.0,
                "0 < sufficient_decrease < 1",
            ),
            (s.growth >= 1.0, "growth ≥ 1"),
            (s.max_backtracks >= 1, "max_backtracks ≥ 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(Error::Config(format!("{what} violated"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    /// The accepted step fell below `tol_step` before the residual did.
    StepTolerance,
    /// No step length passed the line search.
    Stagnated,
    MaxIterations,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::StepTolerance => "step_tolerance",
            RunStatus::Stagnated => "stagnated",
            RunStatus::MaxIterations => "max_iterations",
        })
    }
}

/// Criticality diagnostics of one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub energy: f64,
    pub integrals: ReducedIntegrals,
    /// `|A − λB − D| / A`.
    pub nehari_residual: f64,
    /// `‖J'(u)‖_*` in the dual of the `p = 2` Gram norm.
    pub dual_residual: f64,
    /// `φ''(1) = (p−1)A − qλB − rD`.
    pub phi_second_at_one: f64,
    pub curvature: Sign,
    /// `‖u⁻‖_{X₀} / ‖u‖_{X₀}`.
    pub negative_part_ratio: f64,
}

impl Certificate {
    /// Residual within `tol` and curvature of the branch's sign with margin `1e−10 (p−1) A`.
    pub fn holds_for(&self, branch: Branch, p: f64, tol: f64) -> bool {
        let margin = 1e-10 * (p - 1.0) * self.integrals.norm_p;
        let curved = match branch {
            Branch::Plus => self.phi_second_at_one > margin,
            Branch::Minus => self.phi_second_at_one < -margin,
        };
        curved && self.dual_residual <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub start: usize,
    pub branch: Branch,
    pub iteration: usize,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
    pub polish: bool,
}

/// Outcome of one descent run.
#[derive(Debug, Clone, Serialize)]
pub struct BranchRun {
    pub branch: Branch,
    pub start: usize,
    pub status: RunStatus,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Accepted Newton polish steps after descent stalled.
    pub polish_iterations: usize,
    pub energy: f64,
    pub residual: f64,
    pub certificate: Certificate,
    #[serde(skip)]
    pub field: Field,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl BranchRun {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub start: usize,
    pub branch: Branch,
    pub outcome: String,
    pub energy: Option<f64>,
    pub residual: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// Both branches converged.
    Complete,
    /// At least one branch failed on every start.
    Partial,
    /// No start admitted a projection onto either branch.
    NoNehariPoints,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub plus: Option<BranchRun>,
    pub minus: Option<BranchRun>,
    /// Relative `L^p` distance between the two solutions.
    pub distinctness: Option<f64>,
    pub distinct: Option<bool>,
    pub runs: Vec<RunSummary>,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

/// Threshold on the relative `L^p` distance for two solutions to count as distinct.
pub const DISTINCTNESS_THRESHOLD: f64 = 1e-3;

struct State {
    field: Field,
    ri: ReducedIntegrals,
    energy: f64,
    direction: Vec<f64>,
    residual: f64,
}

pub struct Solver<'a> {
    spec: &'a ProblemSpec,
    weights: &'a EnergyWeights,
    gram: GramFactor,
    config: SolverConfig,
}

impl<'a> Solver<'a> {
    pub fn new(spec: &'a ProblemSpec, weights: &'a EnergyWeights, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        same_mesh(spec.mesh(), weights.mesh())?;
        Ok(Solver {
            spec,
            weights,
            gram: weights.gram()?,
            config,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn truncate(&self, u: Field) -> Field {
        if self.config.truncate_negative {
            u.positive_part()
        } else {
            u
        }
    }

    fn evaluate(&self, field: Field) -> Result<State> {
        let ri = reduced_integrals(self.spec, self.weights, &field)?;
        let g = gradient(self.spec, self.weights, &field)?;
        let (direction, residual) = self.gram.riesz(&g);
        Ok(State {
            energy: energy_from(&ri, &self.spec.exponents()),
            field,
            ri,
            direction,
            residual,
        })
    }

    fn project_onto(&self, v: Field, branch: Branch) -> Result<Field> {
        if v.is_zero() {
            return Err(Error::BranchNotApplicable("field vanishes after truncation".into()));
        }
        let ri = reduced_integrals(self.spec, self.weights, &v)?;
        let t = project(&ri, &self.spec.exponents(), branch)?;
        Ok(v.scaled(t))
    }

    fn small_enough(&self, state: &State) -> bool {
        let norm = state.ri.norm_p.powf(1.0 / self.spec.p());
        state.residual <= self.config.tol_residual * norm.min(1.0)
    }

    /// Size of floating-point noise in the energy at `ri`.
    fn energy_noise(&self, ri: &ReducedIntegrals) -> f64 {
        let e = self.spec.exponents();
        let terms = ri.norm_p / e.p + (e.lambda * ri.concave).abs() / (e.q + 1.0) + ri.convex.abs() / (e.r + 1.0);
        16.0 * f64::EPSILON * terms
    }

    /// Minimises the energy on one branch starting from `init`.
    pub fn minimize_branch(&self, branch: Branch, init: &Field) -> Result<BranchRun> {
        self.run(branch, init, 0)
    }

    fn run(&self, branch: Branch, init: &Field, start: usize) -> Result<BranchRun> {
        same_mesh(self.spec.mesh(), init.mesh())?;
        if init.is_zero() {
            return Err(Error::ZeroField);
        }
        let rule = self.config.step_rule;
        let mut state = self.evaluate(self.project_onto(self.truncate(init.clone()), branch)?)?;
        let mut eta = rule.initial;
        let mut trace = Vec::new();
        let mut status = RunStatus::MaxIterations;
        let mut iterations = 0;
        if self.config.trace {
            trace.push(TraceRecord {
                start,
                branch,
                iteration: 0,
                energy: state.energy,
                residual: state.residual,
                step: 0.0,
                polish: false,
            });
        }
        while iterations < self.config.max_outer_iters {
            if self.small_enough(&state) {
                status = RunStatus::Converged;
                break;
            }
            let dmax = state.direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let wmax = state.field.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let noise = self.energy_noise(&state.ri);
            let res2 = state.residual * state.residual;
            let mut next = None;
            let mut tiny = false;
            for _ in 0..rule.max_backtracks {
                if eta * dmax <= self.config.tol_step * wmax {
                    tiny = true;
                    break;
                }
                let raw: Vec<f64> = state
                    .field
                    .values()
                    .iter()
                    .zip(&state.direction)
                    .map(|(w, d)| w - eta * d)
                    .collect();
                let candidate = self.truncate(Field::new(state.field.mesh().clone(), raw)?);
                if let Ok(projected) = self.project_onto(candidate, branch) {
                    let cand = self.evaluate(projected)?;
                    let decrease = rule.sufficient_decrease * eta * res2;
                    let armijo = cand.energy <= state.energy - decrease;
                    let within_noise =
                        decrease <= noise && cand.energy <= state.energy && cand.residual < state.residual;
                    if armijo || within_noise {
                        next = Some(cand);
                        break;
                    }
                }
                eta *= rule.shrink;
            }
            let Some(cand) = next else {
                status = if tiny {
                    RunStatus::StepTolerance
                } else {
                    RunStatus::Stagnated
                };
                break;
            };
            iterations += 1;
            state = cand;
            if self.config.trace {
                trace.push(TraceRecord {
                    start,
                    branch,
                    iteration: iterations,
                    energy: state.energy,
                    residual: state.residual,
                    step: eta,
                    polish: false,
                });
            }
            eta = (eta * rule.growth).min(rule.initial);
        }
        let mut polish_iterations = 0;
        if status != RunStatus::Converged {
            while polish_iterations < rule.max_polish_steps {
                let Some(next) = self.newton_step(&state, branch)? else {
                    break;
                };
                polish_iterations += 1;
                state = next;
                if self.config.trace {
                    trace.push(TraceRecord {
                        start,
                        branch,
                        iteration: iterations + polish_iterations,
                        energy: state.energy,
                        residual: state.residual,
                        step: 1.0,
                        polish: true,
                    });
                }
                if self.small_enough(&state) {
                    status = RunStatus::Converged;
                    break;
                }
            }
        }
        let certificate = self.verify_solution(&state.field)?;
        Ok(BranchRun {
            branch,
            start,
            status,
            iterations,
            polish_iterations,
            energy: state.energy,
            residual: state.residual,
            certificate,
            field: state.field,
            trace,
        })
    }

    /// Hessian of the energy in nodal coordinates, `∂²J / ∂u_i ∂u_j`.
    fn hessian(&self, u: &Field) -> DMatrix<f64> {
        let e = self.spec.exponents();
        let v = u.values();
        let n = v.len();
        let cells = u.mesh().cell_measures();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = 2.0 * (e.p - 1.0) * self.weights.pair(i, j) * abs_pow(v[i] - v[j], e.p - 2.0);
                h[(i, i)] += w;
                h[(j, j)] += w;
                h[(i, j)] -= w;
                h[(j, i)] -= w;
            }
            h[(i, i)] += (e.p - 1.0) * self.weights.exterior()[i] * abs_pow(v[i], e.p - 2.0)
                - cells[i]
                    * (e.lambda * e.q * self.spec.h()[i] * abs_pow(v[i], e.q - 1.0)
                        + e.r * self.spec.b()[i] * abs_pow(v[i], e.r - 1.0));
        }
        h
    }

    /// One damped Newton step on `J'(w) = 0` followed by the branch projection;
    /// `None` unless the dual residual strictly decreases.
    fn newton_step(&self, state: &State, branch: Branch) -> Result<Option<State>> {
        let v = state.field.values();
        if v.iter().any(|x| *x <= 0.0) {
            return Ok(None);
        }
        let g = gradient(self.spec, self.weights, &state.field)?;
        let rhs = DVector::from_iterator(
            v.len(),
            g.values()
                .iter()
                .zip(state.field.mesh().cell_measures())
                .map(|(gi, c)| -gi * c),
        );
        let Some(delta) = self.hessian(&state.field).lu().solve(&rhs) else {
            return Ok(None);
        };
        let mut scale = 1.0;
        for _ in 0..8 {
            let raw: Vec<f64> = v.iter().zip(delta.iter()).map(|(x, d)| x + scale * d).collect();
            let candidate = self.truncate(Field::new(state.field.mesh().clone(), raw)?);
            if let Ok(projected) = self.project_onto(candidate, branch) {
                let cand = self.evaluate(projected)?;
                if cand.residual < state.residual {
                    return Ok(Some(cand));
                }
            }
            scale *= 0.5;
        }
        Ok(None)
    }

    /// Criticality certificate of `u`: Nehari residual, dual residual, curvature
    /// along the ray, and the size of the negative part.
    pub fn verify_solution(&self, u: &Field) -> Result<Certificate> {
        if u.is_zero() {
            return Err(Error::ZeroField);
        }
        let e = self.spec.exponents();
        let ri = reduced_integrals(self.spec, self.weights, u)?;
        let g = gradient(self.spec, self.weights, u)?;
        let (_, dual_residual) = self.gram.riesz(&g);
        let second = (e.p - 1.0) * ri.norm_p - e.q * e.lambda * ri.concave - e.r * ri.convex;
        let negative = self.weights.seminorm_p(&u.negative_part())?;
        Ok(Certificate {
            energy: energy_from(&ri, &e),
            integrals: ri,
            nehari_residual: (ri.norm_p - e.lambda * ri.concave - ri.convex).abs() / ri.norm_p,
            dual_residual,
            phi_second_at_one: second,
            curvature: if second > 0.0 {
                Sign::Plus
            } else if second < 0.0 {
                Sign::Minus
            } else {
                Sign::Zero
            },
            negative_part_ratio: (negative / ri.norm_p).powf(1.0 / e.p),
        })
    }

    /// Smooth positive profile from inverse iteration with the Gram matrix.
    pub fn principal_profile(&self) -> Field {
        let mesh = self.spec.mesh().clone();
        let cells = mesh.cell_measures().to_vec();
        let mut v = vec![1.0; mesh.len()];
        for _ in 0..50 {
            let rhs: Vec<f64> = v.iter().zip(&cells).map(|(x, c)| x * c).collect();
            v = self.gram.solve(&rhs);
            let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            v.iter_mut().for_each(|x| *x /= top);
        }
        Field::new(mesh, v).expect("length matches mesh")
    }

    /// Start `k`: the principal profile for `k = 0`, seeded random positive bumps otherwise.
    pub fn initial_field(&self, k: usize) -> Field {
        if k == 0 {
            return self.principal_profile();
        }
        let mesh = self.spec.mesh().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.config.seed, k));
        let axes: Vec<[f64; 2]> = match mesh.domain() {
            crate::Domain::Interval { a, b } => vec![[*a, *b]],
            crate::Domain::Rectangle { x, y } => vec![*x, *y],
        };
        let count = rng.gen_range(1..=3);
        let bumps: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..count)
            .map(|_| {
                let centre = axes.iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)).collect();
                let width = axes
                    .iter()
                    .map(|[lo, hi]| (hi - lo) * rng.gen_range(0.08..0.35))
                    .collect();
                (centre, width, rng.gen_range(0.5..1.5))
            })
            .collect();
        Field::from_fn(mesh, |x| {
            bumps
                .iter()
                .map(|(c, w, amp)| {
                    let d2: f64 = x
                        .iter()
                        .zip(c)
                        .zip(w)
                        .map(|((xi, ci), wi)| ((xi - ci) / wi).powi(2))
                        .sum();
                    amp * (-0.5 * d2).exp()
                })
                .sum()
        })
    }

    /// Multistart descent on both branches; keeps the lowest-energy converged run per branch.
    pub fn solve_both(&self) -> Result<SolverResult> {
        let clock = Instant::now();
        let starts: Vec<Field> = (0..self.config.multistart).map(|k| self.initial_field(k)).collect();
        let jobs: Vec<(usize, Branch)> = (0..starts.len())
            .flat_map(|k| [(k, Branch::Plus), (k, Branch::Minus)])
            .collect();
        let outcomes: Vec<Result<BranchRun>> = jobs
            .par_iter()
            .map(|&(k, branch)| self.run(branch, &starts[k], k))
            .collect();

        let mut runs = Vec::with_capacity(jobs.len());
        let mut trace = Vec::new();
        let mut best: [Option<BranchRun>; 2] = [None, None];
        let mut any_projection = false;
        for (&(start, branch), outcome) in jobs.iter().zip(outcomes) {
            match outcome {
                Ok(run) => {
                    any_projection = true;
                    runs.push(RunSummary {
                        start,
                        branch,
                        outcome: run.status.to_string(),
                        energy: Some(run.energy),
                        residual: Some(run.residual),
                        iterations: run.iterations,
                    });
                    trace.extend(run.trace.iter().copied());
                    let slot = &mut best[(branch == Branch::Minus) as usize];
                    if run.converged() && slot.as_ref().is_none_or(|b| run.energy < b.energy) {
                        *slot = Some(run);
                    }
                }
                Err(e) => {
                    if !matches!(e, Error::Projection { .. } | Error::BranchNotApplicable(_)) {
                        return Err(e);
                    }
                    runs.push(RunSummary {
                        start,
                        branch,
                        outcome: e.to_string(),
                        energy: None,
                        residual: None,
                        iterations: 0,
                    });
                }
            }
        }
        let [plus, minus] = best;
        let distinctness = match (&plus, &minus) {
            (Some(a), Some(b)) => Some(relative_distance(&a.field, &b.field, self.spec.p())?),
            _ => None,
        };
        let status = if plus.is_some() && minus.is_some() {
            SolverStatus::Complete
        } else if !any_projection {
            SolverStatus::NoNehariPoints
        } else {
            SolverStatus::Partial
        };
        Ok(SolverResult {
            status,
            plus,
            minus,
            distinctness,
            distinct: distinctness.map(|d| d > DISTINCTNESS_THRESHOLD),
            runs,
            wall_time: clock.elapsed(),
            trace,
        })
    }
}

/// `‖u − v‖_p / max(‖u‖_p, ‖v‖_p)`.
pub fn relative_distance(u: &Field, v: &Field, p: f64) -> Result<f64> {
    same_mesh(u.mesh(), v.mesh())?;
    let diff = Field::new(
        u.mesh().clone(),
        u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect(),
    )?;
    let scale = lp_norm(u, p)?.max(lp_norm(v, p)?);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(lp_norm(&diff, p)? / scale)
}
