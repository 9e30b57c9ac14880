//! Discrete weak solutions of `lam u - L u = f` with natural Neumann conditions.
//!
//! The operator is written in divergence form `L u = N^{-1} div(N grad u)`.
//! Bounded axes use flux-form finite volumes with zero flux through boundary
//! faces; unbounded axes use either the same scheme on `[-T, T]` or Hermite
//! collocation, where `L` is diagonal. Either way the discrete operator is
//! self-adjoint and positive in the grid's Gaussian inner product, and the
//! system is solved matrix-free by conjugate gradients.

mod cg;
mod grid;

use serde::{Deserialize, Serialize};

pub use cg::{conjugate_gradient, CgOutcome};
pub use grid::{radial_constant, Axis, AxisKind, Grid, GridFunction, RadialGrid, TensorGrid};

use crate::domain::{ConvexDomain, DomainKind};
use crate::error::{Error, Result};
use crate::functions::SmoothFunction;
use crate::linalg::{compensated_sum, dot, normal_pdf};
use crate::measure::{integrate, Quadrature};

/// Relative residual at which conjugate gradients stop.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Largest tensor grid the solver will allocate.
pub const MAX_GRID_NODES: usize = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreeAxis {
    /// Hermite collocation with the given number of modes.
    Hermite { modes: usize },
    /// Uniform flux-form axis on `[-T, T]` with the grid spacing.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Target spacing along bounded (and uniform free) axes.
    pub spacing: f64,
    pub free_axis: FreeAxis,
    /// Half-width replacing infinite extents; zero-flux closure at `-T` and `T`.
    pub truncation: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { spacing: 1.0 / 32.0, free_axis: FreeAxis::Hermite { modes: 16 }, truncation: 8.0 }
    }
}

impl GridSpec {
    pub fn with_spacing(spacing: f64) -> Self {
        Self { spacing, ..Self::default() }
    }
}

/// Norms of one field against `mu` on the domain and `sigma` on its boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSet {
    pub l2_u: f64,
    pub l2_grad: f64,
    /// `(int Tr[(D^2 u)^2] dmu)^{1/2}`
    pub hs_hess: f64,
    /// `||<x, grad u>||`
    pub drift_norm: f64,
    /// `(int <grad u, nu>^2 dsigma)^{1/2}`
    pub flux_norm: f64,
}

impl NormSet {
    /// `||u||^2_{W^{2,2}}` as the sum of the three squared norms.
    pub fn w22_sq(&self) -> f64 {
        self.l2_u * self.l2_u + self.l2_grad * self.l2_grad + self.hs_hess * self.hs_hess
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub l2_u: f64,
    pub l2_grad: f64,
    pub hs_hess: f64,
    pub l2_f: f64,
    pub drift_norm: f64,
    pub flux_norm: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// `||u||^2_{W^{2,2}} / (C(lam) ||f||^2)`
    pub w22_ratio: f64,
    pub nodes: usize,
    pub spacing: f64,
}

impl SolveReport {
    pub fn norms(&self) -> NormSet {
        NormSet {
            l2_u: self.l2_u,
            l2_grad: self.l2_grad,
            hs_hess: self.hs_hess,
            drift_norm: self.drift_norm,
            flux_norm: self.flux_norm,
        }
    }
}

/// `C(lam) = 1/lam^2 + 1/lam + 2`, the dimension-free `W^{2,2}` constant.
pub fn w22_constant(lam: f64) -> f64 {
    1.0 / (lam * lam) + 1.0 / lam + 2.0
}

/// `(r1, r2, r3) = (lam^2 |u|^2, lam |grad u|^2, |D^2 u|^2 / 2) / |f|^2`.
pub fn estimate_ratios(report: &SolveReport) -> Result<(f64, f64, f64)> {
    ratios_from(report.lambda, &report.norms(), report.l2_f)
}

fn ratios_from(lam: f64, n: &NormSet, l2_f: f64) -> Result<(f64, f64, f64)> {
    if !(l2_f > 0.0) {
        return Err(Error::InvalidParameter("estimate ratios need a nonzero right-hand side".into()));
    }
    let f2 = l2_f * l2_f;
    Ok((lam * lam * n.l2_u * n.l2_u / f2, lam * n.l2_grad * n.l2_grad / f2, n.hs_hess * n.hs_hess / (2.0 * f2)))
}

fn build_report(lam: f64, norms: NormSet, l2_f: f64, cg: CgOutcome, grid: &Grid) -> SolveReport {
    let (r1, r2, r3) = ratios_from(lam, &norms, l2_f).unwrap_or((0.0, 0.0, 0.0));
    let w22_ratio = if l2_f > 0.0 { norms.w22_sq() / (w22_constant(lam) * l2_f * l2_f) } else { 0.0 };
    SolveReport {
        lambda: lam,
        l2_u: norms.l2_u,
        l2_grad: norms.l2_grad,
        hs_hess: norms.hs_hess,
        l2_f,
        drift_norm: norms.drift_norm,
        flux_norm: norms.flux_norm,
        cg_iterations: cg.iterations,
        cg_residual: cg.relative_residual,
        r1,
        r2,
        r3,
        w22_ratio,
        nodes: grid.len(),
        spacing: grid.spacing().unwrap_or(0.0),
    }
}

fn check_lambda(lam: f64) -> Result<()> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lam}")));
    }
    Ok(())
}

/// Tensor grid fitted to the domain: uniform along bounded axes with the end
/// nodes on the boundary, free axes as requested.
pub fn tensor_grid(domain: &ConvexDomain, spec: &GridSpec) -> Result<TensorGrid> {
    let layout = domain.axis_layout(spec.truncation).map_err(|e| match e {
        Error::Unsupported(msg) => {
            Error::Unsupported(format!("{msg}; balls above one dimension are served by radial_solve"))
        }
        other => other,
    })?;
    let t = spec.truncation;
    let axes = layout
        .intervals
        .iter()
        .map(|iv| match (iv, spec.free_axis) {
            (Some(iv), _) => {
                Axis::uniform_with_spacing(iv.lo, iv.hi, spec.spacing, iv.lo_is_boundary, iv.hi_is_boundary)
            }
            (None, FreeAxis::Hermite { modes }) => Axis::hermite(modes),
            (None, FreeAxis::Uniform) => Axis::uniform_with_spacing(-t, t, spec.spacing, false, false),
        })
        .collect::<Result<Vec<_>>>()?;
    let count = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
    match count {
        Some(c) if c <= MAX_GRID_NODES => TensorGrid::new(axes, layout.frame),
        _ => Err(Error::Unsupported(format!("tensor grid exceeds {MAX_GRID_NODES} nodes"))),
    }
}

fn max_iterations(nodes: usize) -> usize {
    (50.0 * (nodes as f64).sqrt()).ceil() as usize
}

/// Solves `lam u - L u = f` on a tensor grid fitted to `domain`.
pub fn solve<F>(domain: &ConvexDomain, f: &F, lam: f64, spec: &GridSpec) -> Result<(GridFunction, SolveReport)>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    check_lambda(lam)?;
    let grid = tensor_grid(domain, spec)?;
    let rhs = GridFunction::from_fn(Grid::Tensor(grid.clone()), f).values;
    let mass = grid.masses();
    let mut u = vec![0.0; grid.len()];
    let cg = conjugate_gradient(
        |v, out| grid.apply_shifted(lam, v, out),
        &mass,
        &rhs,
        &mut u,
        CG_TOLERANCE,
        max_iterations(grid.len()),
    )?;
    let l2_f = compensated_sum(mass.iter().zip(&rhs).map(|(m, v)| m * v * v)).sqrt();
    let solution = GridFunction::new(Grid::Tensor(grid), u)?;
    let norms = grid_norms(&solution)?;
    let report = build_report(lam, norms, l2_f, cg, &solution.grid);
    Ok((solution, report))
}

/// Solves the radial problem `lam u - u'' - ((n-1)/r - r) u' = f` on a centered ball,
/// with `u'(0) = 0` and `u'(R) = 0`.
pub fn radial_solve<F>(
    ball: &ConvexDomain,
    f_radial: &F,
    lam: f64,
    n_dim: usize,
    n_r: usize,
) -> Result<(GridFunction, SolveReport)>
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    check_lambda(lam)?;
    let DomainKind::Ball { center, radius } = ball.kind() else {
        return Err(Error::Unsupported("radial_solve needs a ball".into()));
    };
    if center.iter().any(|c| *c != 0.0) {
        return Err(Error::Unsupported("radial_solve needs a ball centered at the origin".into()));
    }
    if ball.dim() != n_dim {
        return Err(Error::DimensionMismatch { expected: ball.dim(), got: n_dim });
    }
    let grid = RadialGrid::new(n_dim, *radius, n_r)?;
    let rhs: Vec<f64> = grid.nodes.iter().map(|&r| f_radial(r)).collect();
    let mut u = vec![0.0; grid.len()];
    let cg = conjugate_gradient(
        |v, out| grid.apply_shifted(lam, v, out),
        &grid.mass,
        &rhs,
        &mut u,
        CG_TOLERANCE,
        max_iterations(grid.len()).max(4 * grid.len()),
    )?;
    let l2_f = compensated_sum(grid.mass.iter().zip(&rhs).map(|(m, v)| m * v * v)).sqrt();
    let solution = GridFunction::new(Grid::Radial(grid), u)?;
    let norms = grid_norms(&solution)?;
    let report = build_report(lam, norms, l2_f, cg, &solution.grid);
    Ok((solution, report))
}

/// Norms of a grid function using the grid's own Gaussian masses and recovered derivatives.
pub fn grid_norms(u: &GridFunction) -> Result<NormSet> {
    let d = u.rotated_derivatives()?;
    let mass = u.grid.masses();
    let n = u.grid.dim();
    let len = u.values.len();
    let sum = |g: &dyn Fn(usize) -> f64| compensated_sum((0..len).map(|i| mass[i] * g(i))).max(0.0).sqrt();
    let l2_u = sum(&|i| u.values[i] * u.values[i]);
    let l2_grad = sum(&|i| (0..n).map(|k| d.grad[k][i].powi(2)).sum());
    let hs_hess = sum(&|i| (0..n).flat_map(|k| (0..n).map(move |l| (k, l))).map(|(k, l)| d.hess[k][l][i].powi(2)).sum());
    let flux_norm;
    let drift_norm;
    match &u.grid {
        Grid::Tensor(t) => {
            let ys: Vec<Vec<f64>> = (0..len).map(|i| t.node_rotated(i)).collect();
            drift_norm = sum(&|i| (0..n).map(|k| ys[i][k] * d.grad[k][i]).sum::<f64>().powi(2));
            flux_norm = tensor_flux_norm(t, &d.grad);
        }
        Grid::Radial(r) => {
            drift_norm = sum(&|i| (r.nodes[i] * d.grad[0][i]).powi(2));
            flux_norm = d.grad[0][len - 1].abs() * r.boundary_measure().sqrt();
        }
    }
    Ok(NormSet { l2_u, l2_grad, hs_hess, drift_norm, flux_norm })
}

fn tensor_flux_norm(t: &TensorGrid, grad: &[Vec<f64>]) -> f64 {
    let mut terms = Vec::new();
    for (k, axis) in t.axes.iter().enumerate() {
        let AxisKind::Uniform { lo_boundary, hi_boundary, .. } = axis.kind else {
            continue;
        };
        let last = axis.len() - 1;
        #[allow(clippy::needless_range_loop)]
        for idx in 0..t.len() {
            let mi = t.multi_index(idx);
            let on_face = (lo_boundary && mi[k] == 0) || (hi_boundary && mi[k] == last);
            if !on_face {
                continue;
            }
            let w: f64 = mi
                .iter()
                .enumerate()
                .map(|(j, &i)| if j == k { normal_pdf(t.axes[j].nodes[i]) } else { t.axes[j].mass[i] })
                .product();
            terms.push(w * grad[k][idx] * grad[k][idx]);
        }
    }
    compensated_sum(terms).sqrt()
}

/// Norms of an analytic function by interior and boundary quadrature.
pub fn analytic_norms(
    u: &dyn SmoothFunction,
    domain: &ConvexDomain,
    interior: &Quadrature,
    boundary: &Quadrature,
) -> NormSet {
    let l2_u = integrate(interior, |x| u.value(x).powi(2)).sqrt();
    let l2_grad = integrate(interior, |x| dot(&u.gradient(x), &u.gradient(x))).sqrt();
    let hs_hess = integrate(interior, |x| u.hessian(x).norm_squared()).sqrt();
    let drift_norm = integrate(interior, |x| u.drift(x).powi(2)).sqrt();
    let flux_norm = integrate(boundary, |x| match domain.normal(x) {
        Ok(nu) => dot(&u.gradient(x), &nu).powi(2),
        Err(_) => 0.0,
    })
    .sqrt();
    NormSet { l2_u, l2_grad, hs_hess, drift_norm, flux_norm }
}
