//! Nodal discretization of Ω with implicit zero extension outside Ω, and
//! assembly of the discrete energy
//!
//! ```text
//! ‖u‖^p = 2 Σ_{i<j} W_ij |u_i - u_j|^p + Σ_i ω_i |u_i|^p
//! ```
//!
//! `W_ij` approximates `∫_{I_i}∫_{I_j} K(x-y)` for one ordered pair of cells and
//! `ω_i = 2 |I_i| ∫_{ℝⁿ∖Ω} K(x_i - y) dy` carries the Ω × (ℝⁿ∖Ω) interaction.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { x: [f64; 2], y: [f64; 2] },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { x, y } => (x[1] - x[0]) * (y[1] - y[0]),
        }
    }

    fn axes(&self) -> Vec<[f64; 2]> {
        match self {
            Domain::Interval { a, b } => vec![[*a, *b]],
            Domain::Rectangle { x, y } => vec![*x, *y],
        }
    }
}

/// Closed box `[lo, hi]` of one node's quadrature cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// Uniform interior-node mesh. Node `i` on an axis of length `L` with `N`
/// nodes sits at `a + (i+1) L/(N+1)`; the two boundary half-cells are
/// absorbed into the end cells so the cell measures tile Ω exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    domain: Domain,
    per_axis: usize,
    spacing: [f64; 2],
    nodes: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    grid: Vec<[usize; 2]>,
    measures: Vec<f64>,
}

impl Mesh {
    /// Builds the mesh with `per_axis` nodes along each axis (`per_axis^n` nodes total).
    pub fn build(domain: Domain, per_axis: usize) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::Config(format!("node count N ≥ 2 violated (N = {per_axis})")));
        }
        let axes = domain.axes();
        for [a, b] in &axes {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Config(format!(
                    "degenerate domain: axis [{a}, {b}] has no positive length"
                )));
            }
        }
        let axis_data: Vec<(Vec<f64>, Vec<[f64; 2]>, f64)> =
            axes.iter().map(|&[a, b]| axis_cells(a, b, per_axis)).collect();

        let mut nodes = Vec::new();
        let mut cells = Vec::new();
        let mut grid = Vec::new();
        let mut spacing = [0.0; 2];
        match axis_data.as_slice() {
            [(xs, xc, hx)] => {
                spacing[0] = *hx;
                for (i, (x, c)) in xs.iter().zip(xc).enumerate() {
                    nodes.push([*x, 0.0]);
                    cells.push(Cell {
                        lo: [c[0], 0.0],
                        hi: [c[1], 0.0],
                    });
                    grid.push([i, 0]);
                }
            }
            [(xs, xc, hx), (ys, yc, hy)] => {
                spacing = [*hx, *hy];
                for (j, (y, cy)) in ys.iter().zip(yc).enumerate() {
                    for (i, (x, cx)) in xs.iter().zip(xc).enumerate() {
                        nodes.push([*x, *y]);
                        cells.push(Cell {
                            lo: [cx[0], cy[0]],
                            hi: [cx[1], cy[1]],
                        });
                        grid.push([i, j]);
                    }
                }
            }
            _ => unreachable!("domains are 1D or 2D"),
        }
        let dim = domain.dim();
        let measures = cells
            .iter()
            .map(|c| (0..dim).map(|k| c.hi[k] - c.lo[k]).product())
            .collect();
        Ok(Mesh {
            domain,
            per_axis,
            spacing,
            nodes,
            cells,
            grid,
            measures,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim()]
    }
    /// Coordinates of node `i` (length `n`).
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim()]
    }
    pub fn cell(&self, i: usize) -> &Cell {
        &self.cells[i]
    }
    pub fn cell_measures(&self) -> &[f64] {
        &self.measures
    }

    /// True when the closed cells of `i` and `j` share at least a corner.
    pub fn cells_touch(&self, i: usize, j: usize) -> bool {
        let (a, b) = (self.grid[i], self.grid[j]);
        a[0].abs_diff(b[0]) <= 1 && a[1].abs_diff(b[1]) <= 1
    }
}

fn axis_cells(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<[f64; 2]>, f64) {
    let h = (b - a) / (n as f64 + 1.0);
    let xs: Vec<f64> = (0..n).map(|i| a + (i as f64 + 1.0) * h).collect();
    let cells = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = if i == 0 { a } else { x - 0.5 * h };
            let hi = if i + 1 == n { b } else { x + 0.5 * h };
            [lo, hi]
        })
        .collect();
    (xs, cells, h)
}

/// Nodal values of `u`; `u ≡ 0` outside Ω is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::MeshMismatch);
        }
        Ok(Field { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.len();
        Field {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..mesh.len()).map(|i| f(mesh.node(i))).collect();
        Field { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn scaled(&self, t: f64) -> Field {
        self.map(|v| t * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `u⁺ = max(u, 0)`.
    pub fn positive_part(&self) -> Field {
        self.map(|v| v.max(0.0))
    }

    /// `u⁻ = max(-u, 0)`.
    pub fn negative_part(&self) -> Field {
        self.map(|v| (-v).max(0.0))
    }

    /// Cell-weighted pairing `Σ |I_i| u_i v_i`.
    pub fn pairing(&self, other: &Field) -> Result<f64> {
        same_mesh(&self.mesh, &other.mesh)?;
        Ok(self
            .mesh
            .cell_measures()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(c, (a, b))| c * a * b)
            .sum())
    }
}

pub(crate) fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

/// `(Σ_i |I_i| |u_i|^m)^{1/m}`.
pub fn lp_norm(u: &Field, m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("L^m norm needs m ≥ 1 (m = {m})")));
    }
    let s: f64 = u
        .mesh
        .cell_measures()
        .iter()
        .zip(&u.values)
        .map(|(c, v)| c * abs_pow(*v, m))
        .sum();
    Ok(s.powf(1.0 / m))
}

#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 3.0 {
        let a = x.abs();
        a * a * a
    } else {
        x.abs().powf(p)
    }
}

/// `|x|^{e-1} x`, continuously extended by 0 at `x = 0`.
#[inline]
pub(crate) fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x.abs()
    } else {
        x.signum() * x.abs().powf(e)
    }
}

/// Quadrature used for pairs of cells that touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NearField {
    /// Plain node-pair rule `|I_i||I_j| K(x_i - x_j)`.
    Midpoint,
    /// One-level Richardson extrapolation of the pair-cell integral of
    /// `|x-y|^p K(x-y) / |x_i-x_j|^p` from the node rule and the 2ⁿ×2ⁿ sub-cell rule.
    #[default]
    Richardson,
}

/// Precomputed pair and exterior weights for one mesh and kernel.
#[derive(Debug, Clone)]
pub struct EnergyWeights {
    mesh: Arc<Mesh>,
    p: f64,
    near_field: NearField,
    /// Packed strict upper triangle, row-major.
    pair: Vec<f64>,
    exterior: Vec<f64>,
}

impl EnergyWeights {
    pub fn assemble(mesh: &Arc<Mesh>, kernel: &KernelSpec, near_field: NearField) -> Result<Self> {
        if kernel.dim() != mesh.dim() {
            return Err(Error::Config(format!(
                "kernel dimension {} does not match mesh dimension {}",
                kernel.dim(),
                mesh.dim()
            )));
        }
        assert!(kernel.alpha() < 1.0, "α < 1 keeps the diagonal integrable");
        let n = mesh.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| pair_weight(mesh, kernel, near_field, i, j))
                    .collect()
            })
            .collect();
        let pair: Vec<f64> = rows.into_iter().flatten().collect();
        let exterior: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| 2.0 * mesh.cell_measures()[i] * exterior_kernel_integral(kernel, mesh.domain(), mesh.node(i)))
            .collect();
        if let Some(bad) = pair.iter().chain(&exterior).find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Domain(format!(
                "assembled weight {bad} is negative or not finite (kernel not admissible?)"
            )));
        }
        Ok(EnergyWeights {
            mesh: mesh.clone(),
            p: kernel.p(),
            near_field,
            pair,
            exterior,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn near_field(&self) -> NearField {
        self.near_field
    }
    pub fn exterior(&self) -> &[f64] {
        &self.exterior
    }

    #[inline]
    fn row_offset(&self, i: usize) -> usize {
        let n = self.mesh.len();
        i * n - i * (i + 1) / 2
    }

    /// `W_ij` (symmetric, zero on the diagonal).
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.pair[self.row_offset(i) + (j - i - 1)],
            std::cmp::Ordering::Greater => self.pair[self.row_offset(j) + (i - j - 1)],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.mesh.len();
        let start = self.row_offset(i);
        &self.pair[start..start + (n - i - 1)]
    }

    /// Discrete `‖u‖_{X₀}^p`.
    pub fn seminorm_p(&self, u: &Field) -> Result<f64> {
        same_mesh(&self.mesh, &u.mesh)?;
        let p = self.p;
        let v = &u.values;
        let mut interior = 0.0;
        for i in 0..v.len() {
            let ui = v[i];
            let mut s = 0.0;
            for (w, uj) in self.row(i).iter().zip(&v[i + 1..]) {
                s += w * abs_pow(ui - uj, p);
            }
            interior += s;
        }
        let exterior: f64 = self.exterior.iter().zip(v).map(|(w, ui)| w * abs_pow(*ui, p)).sum();
        Ok(2.0 * interior + exterior)
    }

    /// Discrete `-L_K u`, scaled so that `⟨-L_K u, v⟩` in the cell pairing is the
    /// directional derivative of `‖u‖^p / p` along `v`.
    pub fn apply_operator(&self, u: &Field) -> Result<Field> {
        same_mesh(&self.mesh, &u.mesh)?;
        let e = self.p - 1.0;
        let v = &u.values;
        let n = v.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let ui = v[i];
            let mut acc = 0.0;
            for (k, (w, uj)) in self.row(i).iter().zip(&v[i + 1..]).enumerate() {
                let flux = 2.0 * w * signed_pow(ui - uj, e);
                acc += flux;
                out[i + 1 + k] -= flux;
            }
            out[i] += acc + self.exterior[i] * signed_pow(ui, e);
        }
        for (o, c) in out.iter_mut().zip(self.mesh.cell_measures()) {
            *o /= c;
        }
        Ok(Field {
            mesh: self.mesh.clone(),
            values: out,
        })
    }

    /// Cholesky factor of the quadratic (p = 2) form built from the same weights.
    pub fn gram(&self) -> Result<GramFactor> {
        GramFactor::new(self)
    }
}

/// Factorised Gram matrix `L` with `uᵀ L u = 2 Σ_{i<j} W_ij (u_i-u_j)² + Σ ω_i u_i²`.
///
/// Used as a Sobolev preconditioner and to measure residuals in the dual norm
/// `‖f‖_* = sqrt(fᵀ L⁻¹ f)`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
}

impl GramFactor {
    pub fn new(weights: &EnergyWeights) -> Result<Self> {
        let n = weights.mesh.len();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            l[(i, i)] += weights.exterior[i];
            for (k, w) in weights.row(i).iter().enumerate() {
                let j = i + 1 + k;
                l[(i, j)] -= 2.0 * w;
                l[(j, i)] -= 2.0 * w;
                l[(i, i)] += 2.0 * w;
                l[(j, j)] += 2.0 * w;
            }
        }
        let chol = Cholesky::new(l).ok_or_else(|| Error::Domain("Gram matrix is not positive definite".into()))?;
        Ok(GramFactor { chol })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.chol.solve(&b).as_slice().to_vec()
    }

    /// Riesz representative `L⁻¹ f` and dual norm `sqrt(f · L⁻¹ f)` of the
    /// functional `v ↦ Σ |I_i| g_i v_i`.
    pub fn riesz(&self, g: &Field) -> (Vec<f64>, f64) {
        let f: Vec<f64> = g
            .mesh
            .cell_measures()
            .iter()
            .zip(&g.values)
            .map(|(c, v)| c * v)
            .collect();
        let d = self.solve(&f);
        let norm2: f64 = f.iter().zip(&d).map(|(a, b)| a * b).sum();
        (d, norm2.max(0.0).sqrt())
    }
}

fn pair_weight(mesh: &Mesh, kernel: &KernelSpec, near_field: NearField, i: usize, j: usize) -> f64 {
    let dim = mesh.dim();
    let (xi, xj) = (mesh.node(i), mesh.node(j));
    let z: Vec<f64> = (0..dim).map(|k| xi[k] - xj[k]).collect();
    let (ci, cj) = (mesh.cell_measures()[i], mesh.cell_measures()[j]);
    let midpoint = ci * cj * kernel.eval_unchecked(&z);
    if near_field == NearField::Midpoint || !mesh.cells_touch(i, j) {
        return midpoint;
    }
    let p = kernel.p();
    let dist_p = norm(&z).powf(p);
    let si = sub_cells(mesh.cell(i), dim);
    let sj = sub_cells(mesh.cell(j), dim);
    let mut refined = 0.0;
    let mut diff = [0.0; 2];
    for (a, ma) in &si {
        for (b, mb) in &sj {
            for k in 0..dim {
                diff[k] = a[k] - b[k];
            }
            let d = &diff[..dim];
            refined += ma * mb * norm(d).powf(p) * kernel.eval_unchecked(d);
        }
    }
    refined /= dist_p;
    let extrapolated = refined + (refined - midpoint) / 3.0;
    if extrapolated >= 0.0 {
        extrapolated
    } else {
        refined
    }
}

fn sub_cells(cell: &Cell, dim: usize) -> Vec<([f64; 2], f64)> {
    let mid = |k: usize, s: usize| {
        let (lo, hi) = (cell.lo[k], cell.hi[k]);
        lo + (hi - lo) * (0.25 + 0.5 * s as f64)
    };
    let half = |k: usize| 0.5 * (cell.hi[k] - cell.lo[k]);
    if dim == 1 {
        (0..2).map(|s| ([mid(0, s), 0.0], half(0))).collect()
    } else {
        let mut out = Vec::with_capacity(4);
        for sy in 0..2 {
            for sx in 0..2 {
                out.push(([mid(0, sx), mid(1, sy)], half(0) * half(1)));
            }
        }
        out
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `∫_{ℝⁿ∖Ω} K(x - y) dy` for a point `x` inside Ω.
pub fn exterior_kernel_integral(kernel: &KernelSpec, domain: &Domain, x: &[f64]) -> f64 {
    let s = kernel.p() * kernel.alpha();
    let excess = kernel.singularity_exponent() - kernel.dim() as f64;
    match (domain, kernel.family()) {
        (Domain::Interval { a, b }, family) => {
            let (dl, dr) = (x[0] - a, b - x[0]);
            match family {
                KernelFamily::Custom(_) => {
                    let right = quad::radial_to_infinity(|r| kernel.eval_unchecked(&[r]), dr, excess, 60);
                    let left = quad::radial_to_infinity(|r| kernel.eval_unchecked(&[-r]), dl, excess, 60);
                    right.0 + right.1 + left.0 + left.1
                }
                _ => {
                    let mu = kernel.power_law_multiplier().unwrap_or(1.0);
                    mu * (dl.powf(-s) + dr.powf(-s)) / s
                }
            }
        }
        (Domain::Rectangle { x: xr, y: yr }, family) => {
            let px = [x[0], x[1]];
            let exit = |th: f64| ray_exit_distance(px, *xr, *yr, th);
            let corners = [[xr[0], yr[0]], [xr[1], yr[0]], [xr[1], yr[1]], [xr[0], yr[1]]];
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut angles: Vec<f64> = corners
                .iter()
                .map(|c| (c[1] - px[1]).atan2(c[0] - px[0]).rem_euclid(two_pi))
                .collect();
            angles.sort_by(|a, b| a.total_cmp(b));
            let segments: Vec<(f64, f64)> = (0..4)
                .map(|k| {
                    let lo = angles[k];
                    let hi = if k == 3 { angles[0] + two_pi } else { angles[k + 1] };
                    (lo, hi)
                })
                .collect();
            match family {
                KernelFamily::Custom(_) => {
                    let rule = quad::gl16();
                    let mut total = 0.0;
                    for (lo, hi) in segments {
                        let sub = 4;
                        let width = (hi - lo) / sub as f64;
                        for k in 0..sub {
                            let a = lo + k as f64 * width;
                            total += rule.integrate(a, a + width, |th| {
                                let dir = [th.cos(), th.sin()];
                                let (body, tail) = quad::radial_to_infinity(
                                    |r| kernel.eval_unchecked(&[r * dir[0], r * dir[1]]) * r,
                                    exit(th),
                                    excess,
                                    50,
                                );
                                body + tail
                            });
                        }
                    }
                    total
                }
                _ => {
                    let mu = kernel.power_law_multiplier().unwrap_or(1.0);
                    let nearest = [px[0] - xr[0], xr[1] - px[0], px[1] - yr[0], yr[1] - px[1]]
                        .into_iter()
                        .fold(f64::INFINITY, f64::min);
                    let scale = two_pi * nearest.powf(-s) / s;
                    let tol = 1e-15 * scale;
                    segments
                        .into_iter()
                        .map(|(lo, hi)| quad::adaptive(|th| exit(th).powf(-s) / s, lo, hi, tol))
                        .sum::<f64>()
                        * mu
                }
            }
        }
    }
}

/// Distance from `p` (inside the rectangle) to its boundary along direction `th`.
fn ray_exit_distance(p: [f64; 2], xr: [f64; 2], yr: [f64; 2], th: f64) -> f64 {
    let (c, s) = (th.cos(), th.sin());
    let mut best = f64::INFINITY;
    if c > 0.0 {
        best = best.min((xr[1] - p[0]) / c);
    } else if c < 0.0 {
        best = best.min((xr[0] - p[0]) / c);
    }
    if s > 0.0 {
        best = best.min((yr[1] - p[1]) / s);
    } else if s < 0.0 {
        best = best.min((yr[0] - p[1]) / s);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::build(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
    }

    #[test]
    fn mesh_examples() {
        let m = Mesh::build(Domain::Interval { a: 0.0, b: 1.0 }, 3).unwrap();
        assert_eq!(m.len(), 3);
        for (i, x) in [0.25, 0.5, 0.75].iter().enumerate() {
            assert!((m.node(i)[0] - x).abs() < 1e-15);
        }
        assert_eq!(m.cell_measures(), &[0.375, 0.25, 0.375]);

        let m = Mesh::build(Domain::Interval { a: 0.0, b: 1.0 }, 2).unwrap();
        assert!((m.node(0)[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.node(1)[0] - 2.0 / 3.0).abs() < 1e-15);

        let m = Mesh::build(
            Domain::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            4,
        )
        .unwrap();
        assert_eq!(m.len(), 16);
        let total: f64 = m.cell_measures().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mesh_rejects_bad_input() {
        assert!(Mesh::build(Domain::Interval { a: 0.0, b: 1.0 }, 1).is_err());
        assert!(Mesh::build(Domain::Interval { a: 1.0, b: 1.0 }, 4).is_err());
        assert!(Mesh::build(
            Domain::Rectangle {
                x: [0.0, 1.0],
                y: [2.0, 2.0]
            },
            4
        )
        .is_err());
    }

    #[test]
    fn exterior_weight_matches_closed_form_at_centre() {
        let mesh = Arc::new(Mesh::build(Domain::Interval { a: 0.0, b: 1.0 }, 3).unwrap());
        let k = KernelSpec::fractional(1, 2.0, 0.5).unwrap();
        let w = EnergyWeights::assemble(&mesh, &k, NearField::Richardson).unwrap();
        // 2 · (1/(pα)) · (0.5^-1 + 0.5^-1) · |I| = 8 · 0.25
        assert!((w.exterior()[1] - 8.0 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn zero_field_has_zero_energy_and_operator() {
        let mesh = unit_interval(10);
        let k = KernelSpec::fractional(1, 3.0, 0.3).unwrap();
        let w = EnergyWeights::assemble(&mesh, &k, NearField::Richardson).unwrap();
        let u = Field::zeros(mesh.clone());
        assert_eq!(w.seminorm_p(&u).unwrap(), 0.0);
        assert!(w.apply_operator(&u).unwrap().is_zero());
    }

    #[test]
    fn spike_operator_is_positive_at_spike() {
        let mesh = unit_interval(9);
        let k = KernelSpec::fractional(1, 2.0, 0.5).unwrap();
        let w = EnergyWeights::assemble(&mesh, &k, NearField::Richardson).unwrap();
        let mut u = Field::zeros(mesh.clone());
        u.values_mut()[4] = 1.0;
        let op = w.apply_operator(&u).unwrap();
        assert!(op.values()[4] > 0.0);
        assert!(op.values().iter().enumerate().all(|(i, v)| i == 4 || *v < 0.0));
    }

    #[test]
    fn richardson_is_identity_when_scaled_kernel_is_constant() {
        // p = 2, α = 1/2, n = 1: |z|^p K(z) ≡ 1
        let mesh = unit_interval(12);
        let k = KernelSpec::fractional(1, 2.0, 0.5).unwrap();
        let a = EnergyWeights::assemble(&mesh, &k, NearField::Richardson).unwrap();
        let b = EnergyWeights::assemble(&mesh, &k, NearField::Midpoint).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!((a.pair(i, j) - b.pair(i, j)).abs() <= 1e-15 * b.pair(i, j).max(1.0));
            }
        }
    }

    #[test]
    fn interior_pair_weights_are_translation_invariant() {
        let mesh = unit_interval(16);
        let k = KernelSpec::fractional(1, 2.0, 0.45).unwrap();
        let w = EnergyWeights::assemble(&mesh, &k, NearField::Richardson).unwrap();
        // interior cells: indices 1..=14 have uniform width
        for gap in 1..5 {
            let reference = w.pair(1, 1 + gap);
            for i in 2..(15 - gap) {
                let v = w.pair(i, i + gap);
                assert!((v - reference).abs() <= 1e-13 * reference, "gap {gap} at {i}");
            }
        }
    }

    #[test]
    fn mismatched_mesh_is_rejected() {
        let k = KernelSpec::fractional(1, 2.0, 0.5).unwrap();
        let w = EnergyWeights::assemble(&unit_interval(6), &k, NearField::Richardson).unwrap();
        let u = Field::zeros(unit_interval(7));
        assert_eq!(w.seminorm_p(&u), Err(Error::MeshMismatch));
        assert!(w.apply_operator(&u).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let mesh = unit_interval(5);
        let one = Field::from_fn(mesh.clone(), |_| 1.0);
        assert!((lp_norm(&one, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lp_norm(&Field::zeros(mesh.clone()), 3.0).unwrap(), 0.0);
        assert!(lp_norm(&one, 0.5).is_err());
    }

    #[test]
    fn gram_form_matches_quadratic_energy() {
        let mesh = unit_interval(8);
        let k = KernelSpec::fractional(1, 2.0, 0.4).unwrap();
        let w = EnergyWeights::assemble(&mesh, &k, NearField::Richardson).unwrap();
        let g = w.gram().unwrap();
        let u = Field::from_fn(mesh.clone(), |x| (3.0 * x[0]).sin());
        // for p = 2 the Riesz representative of -L_K u is u itself
        let op = w.apply_operator(&u).unwrap();
        let (d, norm) = g.riesz(&op);
        for (a, b) in d.iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let energy = w.seminorm_p(&u).unwrap();
        assert!((norm * norm - energy).abs() < 1e-12 * energy);
    }
}
