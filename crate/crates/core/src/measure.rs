//! Quadrature for the standard Gaussian measure on a convex domain and for the
//! Gaussian-weighted surface measure `N dH^{n-1}` on its boundary.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ConvexDomain, DomainKind};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, gaussian_density, normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub target: Target,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    fn product(&self, other: &Quadrature) -> Quadrature {
        let mut nodes = Vec::with_capacity(self.len() * other.len());
        let mut weights = Vec::with_capacity(self.len() * other.len());
        for (a, wa) in self.nodes.iter().zip(&self.weights) {
            for (b, wb) in other.nodes.iter().zip(&other.weights) {
                let mut x = a.clone();
                x.extend_from_slice(b);
                nodes.push(x);
                weights.push(wa * wb);
            }
        }
        Quadrature { nodes, weights, target: self.target }
    }
}

/// Resolution parameters shared by the interior and boundary rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Gauss-Legendre panels per bounded axis.
    pub panels: usize,
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Half-width of the box replacing unbounded tangential directions.
    pub truncation: f64,
    /// Gauss-Hermite nodes per free (cylinder or whole-space) direction.
    pub hermite_nodes: usize,
    /// Uniform angular nodes on circles and spheres.
    pub angular_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panels: 16, order: 8, truncation: 8.0, hermite_nodes: 24, angular_nodes: 256 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 || self.order == 0 || self.panels * self.order < 8 {
            return Err(Error::InvalidParameter(format!(
                "quadrature resolution too small: {} panels x {} points (need at least 8 per axis)",
                self.panels, self.order
            )));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::InvalidParameter("truncation must be positive".into()));
        }
        if self.hermite_nodes == 0 || self.angular_nodes < 4 {
            return Err(Error::InvalidParameter("hermite/angular node counts too small".into()));
        }
        Ok(())
    }
}

/// Largest number of Gauss-Legendre tensor axes in one interior rule.
pub const MAX_TENSOR_DIM: usize = 4;

/// Probabilists' Gauss-Hermite rule: weights sum to one and the rule is exact
/// for polynomials of degree `2m - 1` against the standard normal law.
pub fn gauss_hermite_1d(m: usize) -> Result<Quadrature> {
    let (x, w) = hermite_nodes_weights(m)?;
    Ok(Quadrature { nodes: x.into_iter().map(|v| vec![v]).collect(), weights: w, target: Target::Interior })
}

/// Normalized Hermite values `He_k(x) / sqrt(k!)` for `k = 0..m`.
pub(crate) fn normalized_hermite(x: f64, m: usize) -> Vec<f64> {
    let mut psi = vec![0.0; m.max(1)];
    psi[0] = 1.0;
    if m > 1 {
        psi[1] = x;
    }
    for k in 1..m.saturating_sub(1) {
        psi[k + 1] = (x * psi[k] - (k as f64).sqrt() * psi[k - 1]) / ((k + 1) as f64).sqrt();
    }
    psi
}

pub(crate) fn hermite_nodes_weights(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::InvalidParameter("Gauss-Hermite rule needs at least one node".into()));
    }
    // Golub-Welsch start, then Newton polish on psi_m with psi_m' = sqrt(m) psi_{m-1}.
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut w = vec![0.0; m];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..3 {
            let psi = normalized_hermite(*xi, m + 1);
            let step = psi[m] / ((m as f64).sqrt() * psi[m - 1]);
            if step.is_finite() {
                *xi -= step;
            }
        }
        let psi = normalized_hermite(*xi, m);
        *wi = 1.0 / (m as f64 * psi[m - 1] * psi[m - 1]);
    }
    // exact symmetry
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        let ws = 0.5 * (w[i] + w[j]);
        x[i] = -xs;
        x[j] = xs;
        w[i] = ws;
        w[j] = ws;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    let total = compensated_sum(w.iter().copied());
    w.iter_mut().for_each(|v| *v /= total);
    Ok((x, w))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on `[lo, hi]` (Lebesgue weights).
pub fn composite_legendre(lo: f64, hi: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (hi - lo) / panels as f64;
    let mut x = Vec::with_capacity(panels * order);
    let mut w = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for (xi, wi) in gx.iter().zip(&gw) {
            x.push(a + 0.5 * h * (xi + 1.0));
            w.push(0.5 * h * wi);
        }
    }
    (x, w)
}

fn hermite_rule(dims: usize, m: usize, target: Target) -> Result<Quadrature> {
    let (x, w) = hermite_nodes_weights(m)?;
    let one = Quadrature {
        nodes: x.into_iter().map(|v| vec![v]).collect(),
        weights: w,
        target,
    };
    let mut q = Quadrature { nodes: vec![vec![]], weights: vec![1.0], target };
    for _ in 0..dims {
        q = q.product(&one);
    }
    Ok(q)
}

/// Tensor rule in rotated coordinates `y = R x` with `R` symmetric orthogonal;
/// `axes[k]` holds Lebesgue nodes/weights and the Gaussian density is folded in.
fn rotated_tensor(frame: &DMatrix<f64>, axes: &[(Vec<f64>, Vec<f64>)], target: Target) -> Quadrature {
    let n = axes.len();
    let count: usize = axes.iter().map(|a| a.0.len()).product();
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; n];
    'outer: loop {
        let y: Vec<f64> = (0..n).map(|k| axes[k].0[idx[k]]).collect();
        let w: f64 = (0..n).map(|k| axes[k].1[idx[k]] * normal_pdf(y[k])).product();
        let x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| frame[(i, j)] * y[j]).sum()).collect();
        nodes.push(x);
        weights.push(w);
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].0.len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    Quadrature { nodes, weights, target }
}

fn check_budget(count: usize) -> Result<()> {
    const MAX_NODES: usize = 20_000_000;
    if count > MAX_NODES {
        return Err(Error::Unsupported(format!("quadrature would need {count} nodes (cap {MAX_NODES})")));
    }
    Ok(())
}

/// Tensor rule for `mu` restricted to the domain.
///
/// Defining directions are integrated with composite Gauss-Legendre panels
/// split at the boundary; tangential directions of half-spaces and slabs use
/// the same panels on `[-T, T]`; cylinder and whole-space directions use
/// Gauss-Hermite. Balls in two and three dimensions use polar/spherical rules.
pub fn interior_quadrature(domain: &ConvexDomain, spec: &QuadratureSpec) -> Result<Quadrature> {
    spec.validate()?;
    let n = domain.dim();
    let per_axis = spec.panels * spec.order;
    match domain.kind() {
        DomainKind::HalfSpace { .. } | DomainKind::Slab { .. } => {
            if n > MAX_TENSOR_DIM {
                return Err(Error::Unsupported(format!(
                    "tensor interior rules cap at dimension {MAX_TENSOR_DIM}, got {n}"
                )));
            }
            check_budget(per_axis.pow(n as u32))?;
            let layout = domain.axis_layout(spec.truncation)?;
            let t = spec.truncation;
            let axes: Vec<_> = layout
                .intervals
                .iter()
                .map(|iv| match iv {
                    Some(iv) => composite_legendre(iv.lo, iv.hi, spec.panels, spec.order),
                    None => composite_legendre(-t, t, spec.panels, spec.order),
                })
                .collect();
            Ok(rotated_tensor(&layout.frame, &axes, Target::Interior))
        }
        DomainKind::Ball { center, radius } => ball_interior(center, *radius, spec),
        DomainKind::WholeSpace { dim } => {
            check_budget(spec.hermite_nodes.pow(*dim as u32))?;
            hermite_rule(*dim, spec.hermite_nodes, Target::Interior)
        }
        DomainKind::Cylinder { base, extra_dims } => {
            let b = interior_quadrature(base, spec)?;
            check_budget(b.len() * spec.hermite_nodes.pow(*extra_dims as u32))?;
            Ok(b.product(&hermite_rule(*extra_dims, spec.hermite_nodes, Target::Interior)?))
        }
    }
}

fn ball_interior(center: &[f64], radius: f64, spec: &QuadratureSpec) -> Result<Quadrature> {
    let n = center.len();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut push = |x: Vec<f64>, w: f64| {
        let dens = gaussian_density(&x);
        nodes.push(x);
        weights.push(w * dens);
    };
    match n {
        1 => {
            let (x, w) = composite_legendre(center[0] - radius, center[0] + radius, spec.panels, spec.order);
            for (xi, wi) in x.into_iter().zip(w) {
                push(vec![xi], wi);
            }
        }
        2 => {
            let (r, wr) = composite_legendre(0.0, radius, spec.panels, spec.order);
            let m = spec.angular_nodes;
            let dth = 2.0 * std::f64::consts::PI / m as f64;
            for (ri, wi) in r.iter().zip(&wr) {
                for k in 0..m {
                    let th = k as f64 * dth;
                    push(vec![center[0] + ri * th.cos(), center[1] + ri * th.sin()], wi * ri * dth);
                }
            }
        }
        3 => {
            let (r, wr) = composite_legendre(0.0, radius, spec.panels, spec.order);
            let (ct, wct) = composite_legendre(-1.0, 1.0, spec.panels, spec.order);
            let m = spec.angular_nodes;
            check_budget(r.len() * ct.len() * m)?;
            let dph = 2.0 * std::f64::consts::PI / m as f64;
            for (ri, wri) in r.iter().zip(&wr) {
                for (c, wc) in ct.iter().zip(&wct) {
                    let s = (1.0 - c * c).sqrt();
                    for k in 0..m {
                        let ph = k as f64 * dph;
                        let x = vec![
                            center[0] + ri * s * ph.cos(),
                            center[1] + ri * s * ph.sin(),
                            center[2] + ri * c,
                        ];
                        push(x, wri * ri * ri * wc * dph);
                    }
                }
            }
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "interior rule for a ball in dimension {n} (use the Monte-Carlo rule)"
            )))
        }
    }
    Ok(Quadrature { nodes, weights, target: Target::Interior })
}

/// Rule for the weighted surface measure `sigma = N dH^{n-1}` on the boundary.
pub fn boundary_quadrature(domain: &ConvexDomain, spec: &QuadratureSpec) -> Result<Quadrature> {
    spec.validate()?;
    let n = domain.dim();
    match domain.kind() {
        DomainKind::HalfSpace { normal, offset } => Ok(hyperplane_sheets(normal, &[*offset], n, spec)?),
        DomainKind::Slab { normal, half_width } => {
            Ok(hyperplane_sheets(normal, &[-*half_width, *half_width], n, spec)?)
        }
        DomainKind::Ball { center, radius } => sphere_rule(center, *radius, spec),
        DomainKind::Cylinder { base, extra_dims } => {
            let b = boundary_quadrature(base, spec)?;
            check_budget(b.len() * spec.hermite_nodes.pow(*extra_dims as u32))?;
            Ok(b.product(&hermite_rule(*extra_dims, spec.hermite_nodes, Target::Boundary)?))
        }
        DomainKind::WholeSpace { .. } => {
            Ok(Quadrature { nodes: vec![], weights: vec![], target: Target::Boundary })
        }
    }
}

fn hyperplane_sheets(normal: &[f64], offsets: &[f64], n: usize, spec: &QuadratureSpec) -> Result<Quadrature> {
    let frame = crate::linalg::frame_from_direction(normal);
    let tangential = hermite_rule(n - 1, spec.hermite_nodes, Target::Boundary)?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &b in offsets {
        for (s, w) in tangential.nodes.iter().zip(&tangential.weights) {
            let mut y = vec![b];
            y.extend_from_slice(s);
            let x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| frame[(i, j)] * y[j]).sum()).collect();
            nodes.push(x);
            weights.push(w * normal_pdf(b));
        }
    }
    Ok(Quadrature { nodes, weights, target: Target::Boundary })
}

fn sphere_rule(center: &[f64], radius: f64, spec: &QuadratureSpec) -> Result<Quadrature> {
    let n = center.len();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut push = |x: Vec<f64>, w: f64| {
        let dens = gaussian_density(&x);
        nodes.push(x);
        weights.push(w * dens);
    };
    let m = spec.angular_nodes;
    match n {
        1 => {
            push(vec![center[0] - radius], 1.0);
            push(vec![center[0] + radius], 1.0);
        }
        2 => {
            let dth = 2.0 * std::f64::consts::PI / m as f64;
            for k in 0..m {
                let th = k as f64 * dth;
                push(vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()], radius * dth);
            }
        }
        3 => {
            let (ct, wct) = composite_legendre(-1.0, 1.0, spec.panels, spec.order);
            let dph = 2.0 * std::f64::consts::PI / m as f64;
            for (c, wc) in ct.iter().zip(&wct) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..m {
                    let ph = k as f64 * dph;
                    push(
                        vec![
                            center[0] + radius * s * ph.cos(),
                            center[1] + radius * s * ph.sin(),
                            center[2] + radius * c,
                        ],
                        radius * radius * wc * dph,
                    );
                }
            }
        }
        _ => {
            return Err(Error::Unsupported(format!("boundary rule for a ball in dimension {n}")));
        }
    }
    Ok(Quadrature { nodes, weights, target: Target::Boundary })
}

/// `sum_i w_i f(x_i)`; nodes are evaluated in parallel and summed in node order.
pub fn integrate<F>(q: &Quadrature, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = q.nodes.par_iter().zip(q.weights.par_iter()).map(|(x, w)| w * f(x)).collect();
    compensated_sum(values)
}

/// Rejection-sampled interior rule for spot checks in any dimension.
#[derive(Debug, Clone)]
pub struct MonteCarloRule {
    pub quadrature: Quadrature,
    /// Estimated `mu(domain)`.
    pub measure: f64,
    /// Standard error of `measure`.
    pub std_error: f64,
    pub proposals: usize,
}

pub fn monte_carlo_interior(domain: &ConvexDomain, proposals: usize, seed: u64) -> Result<MonteCarloRule> {
    if proposals == 0 {
        return Err(Error::InvalidParameter("need at least one proposal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = domain.dim();
    let mut nodes = Vec::new();
    for _ in 0..proposals {
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if domain.contains(&x) {
            nodes.push(x);
        }
    }
    let p = nodes.len() as f64 / proposals as f64;
    let w = 1.0 / proposals as f64;
    let weights = vec![w; nodes.len()];
    Ok(MonteCarloRule {
        quadrature: Quadrature { nodes, weights, target: Target::Interior },
        measure: p,
        std_error: (p * (1.0 - p) / proposals as f64).sqrt(),
        proposals,
    })
}
