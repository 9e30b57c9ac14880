//! Tensor and radial grids, discrete operators and derivative recovery.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::normal_pdf;
use crate::measure::{composite_legendre, hermite_nodes_weights, normalized_hermite};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisKind {
    /// Uniform nodes with both ends included; ends flagged when they lie on the boundary.
    Uniform { lo: f64, hi: f64, lo_boundary: bool, hi_boundary: bool },
    /// Gauss-Hermite collocation nodes, spectral in the OU eigenbasis.
    Hermite,
}

/// One coordinate axis of a tensor grid together with its one-dimensional
/// piece of the operator `-L` and its slice of the Gaussian mass.
#[derive(Debug, Clone)]
pub struct Axis {
    pub kind: AxisKind,
    pub nodes: Vec<f64>,
    /// One-dimensional Gaussian masses; they sum to roughly the 1-D measure of the axis range.
    pub mass: Vec<f64>,
    // uniform: (L u)_i = plus_i (u_{i+1} - u_i) - minus_i (u_i - u_{i-1})
    plus: Vec<f64>,
    minus: Vec<f64>,
    // hermite: nodal generator and differentiation matrices
    generator: Option<DMatrix<f64>>,
    d1: Option<DMatrix<f64>>,
    d2: Option<DMatrix<f64>>,
}

impl Axis {
    /// Flux-form axis on `[lo, hi]` with `n` nodes.
    ///
    /// Face fluxes `N(x_{i+1/2}) (u_{i+1} - u_i) / h` are differenced and divided by
    /// the node mass `N(x_i) h_i`, `h_i = h/2` at the two ends; the end faces carry
    /// no flux.
    pub fn uniform(lo: f64, hi: f64, n: usize, lo_boundary: bool, hi_boundary: bool) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("uniform axis needs at least 3 nodes, got {n}")));
        }
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!("empty axis interval [{lo}, {hi}]")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| if i == n - 1 { hi } else { lo + i as f64 * h }).collect();
        let cell = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
        let mass: Vec<f64> = (0..n).map(|i| normal_pdf(nodes[i]) * cell(i)).collect();
        // N(x_{i +- 1/2}) / N(x_i), computed as one exponent to stay finite in the tails.
        let ratio = |i: usize, face: f64| (-0.5 * (face * face - nodes[i] * nodes[i])).exp();
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        for i in 0..n {
            if i + 1 < n {
                plus[i] = ratio(i, 0.5 * (nodes[i] + nodes[i + 1])) / (h * cell(i));
            }
            if i > 0 {
                minus[i] = ratio(i, 0.5 * (nodes[i] + nodes[i - 1])) / (h * cell(i));
            }
        }
        Ok(Self {
            kind: AxisKind::Uniform { lo, hi, lo_boundary, hi_boundary },
            nodes,
            mass,
            plus,
            minus,
            generator: None,
            d1: None,
            d2: None,
        })
    }

    /// Uniform axis with spacing as close to `spacing` as an integer node count allows.
    pub fn uniform_with_spacing(lo: f64, hi: f64, spacing: f64, lo_boundary: bool, hi_boundary: bool) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {spacing}")));
        }
        let cells = ((hi - lo) / spacing).round().max(2.0) as usize;
        Self::uniform(lo, hi, cells + 1, lo_boundary, hi_boundary)
    }

    /// Hermite collocation axis with `m` nodes.
    ///
    /// Nodal values map to coefficients in the orthonormal Hermite basis by
    /// Gauss-Hermite quadrature; the generator acts as `-k` on mode `k`.
    pub fn hermite(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("Hermite axis needs at least one mode".into()));
        }
        let (nodes, mass) = hermite_nodes_weights(m)?;
        let psi = DMatrix::from_fn(m, m, |j, k| normalized_hermite(nodes[j], m)[k]);
        let dpsi = DMatrix::from_fn(m, m, |j, k| {
            if k == 0 {
                0.0
            } else {
                (k as f64).sqrt() * normalized_hermite(nodes[j], m)[k - 1]
            }
        });
        let d2psi = DMatrix::from_fn(m, m, |j, k| {
            if k < 2 {
                0.0
            } else {
                ((k * (k - 1)) as f64).sqrt() * normalized_hermite(nodes[j], m)[k - 2]
            }
        });
        let analysis = psi.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(mass.clone()));
        let spectrum = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |k, _| -(k as f64)));
        let generator = &psi * spectrum * &analysis;
        let d1 = &dpsi * &analysis;
        let d2 = &d2psi * &analysis;
        Ok(Self {
            kind: AxisKind::Hermite,
            nodes,
            mass,
            plus: vec![],
            minus: vec![],
            generator: Some(generator),
            d1: Some(d1),
            d2: Some(d2),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        match self.kind {
            AxisKind::Uniform { .. } => Some(self.nodes[1] - self.nodes[0]),
            AxisKind::Hermite => None,
        }
    }

    /// `out = L_axis line`.
    fn generator_line(&self, line: &[f64], out: &mut [f64]) {
        match &self.generator {
            Some(g) => dense_apply(g, line, out),
            None => {
                let n = line.len();
                for i in 0..n {
                    let mut v = 0.0;
                    if i + 1 < n {
                        v += self.plus[i] * (line[i + 1] - line[i]);
                    }
                    if i > 0 {
                        v -= self.minus[i] * (line[i] - line[i - 1]);
                    }
                    out[i] = v;
                }
            }
        }
    }

    /// First derivative: central in the interior, second-order one-sided at the ends.
    pub fn d1_line(&self, line: &[f64], out: &mut [f64]) {
        match &self.d1 {
            Some(d) => dense_apply(d, line, out),
            None => {
                let n = line.len();
                let h = self.nodes[1] - self.nodes[0];
                out[0] = (-3.0 * line[0] + 4.0 * line[1] - line[2]) / (2.0 * h);
                for i in 1..n - 1 {
                    out[i] = (line[i + 1] - line[i - 1]) / (2.0 * h);
                }
                out[n - 1] = (3.0 * line[n - 1] - 4.0 * line[n - 2] + line[n - 3]) / (2.0 * h);
            }
        }
    }

    pub fn d2_line(&self, line: &[f64], out: &mut [f64]) {
        match &self.d2 {
            Some(d) => dense_apply(d, line, out),
            None => {
                let n = line.len();
                let h = self.nodes[1] - self.nodes[0];
                let h2 = h * h;
                for i in 1..n - 1 {
                    out[i] = (line[i + 1] - 2.0 * line[i] + line[i - 1]) / h2;
                }
                if n >= 4 {
                    out[0] = (2.0 * line[0] - 5.0 * line[1] + 4.0 * line[2] - line[3]) / h2;
                    out[n - 1] = (2.0 * line[n - 1] - 5.0 * line[n - 2] + 4.0 * line[n - 3] - line[n - 4]) / h2;
                } else {
                    out[0] = out[1];
                    out[n - 1] = out[n - 2];
                }
            }
        }
    }

    /// Interpolation stencil at `t`: cubic Lagrange on uniform axes (clamped to the
    /// axis range), exact polynomial interpolation on Hermite axes.
    pub fn stencil(&self, t: f64) -> Vec<(usize, f64)> {
        match self.kind {
            AxisKind::Uniform { lo, hi, .. } => {
                let n = self.len();
                let t = t.clamp(lo, hi);
                let h = self.nodes[1] - self.nodes[0];
                let i = (((t - lo) / h).floor() as usize).min(n - 2);
                let start = i.saturating_sub(1).min(n.saturating_sub(4));
                let end = (start + 4).min(n);
                (start..end)
                    .map(|j| {
                        let w: f64 = (start..end)
                            .filter(|&k| k != j)
                            .map(|k| (t - self.nodes[k]) / (self.nodes[j] - self.nodes[k]))
                            .product();
                        (j, w)
                    })
                    .collect()
            }
            AxisKind::Hermite => {
                let m = self.len();
                let pt = normalized_hermite(t, m);
                (0..m)
                    .map(|j| {
                        let pj = normalized_hermite(self.nodes[j], m);
                        let w: f64 = pj.iter().zip(&pt).map(|(a, b)| a * b).sum();
                        (j, self.mass[j] * w)
                    })
                    .collect()
            }
        }
    }

    /// Whether `t` lies inside the axis range (Hermite axes are unbounded).
    pub fn covers(&self, t: f64) -> bool {
        match self.kind {
            AxisKind::Uniform { lo, hi, .. } => t >= lo - 1e-12 && t <= hi + 1e-12,
            AxisKind::Hermite => true,
        }
    }
}

fn dense_apply(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate().take(n) {
        let mut s = 0.0;
        for (j, xj) in x.iter().enumerate() {
            s += m[(i, j)] * xj;
        }
        *o = s;
    }
}

/// Tensor product of axes in rotated coordinates `y = frame * x`.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
    pub frame: DMatrix<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl TensorGrid {
    pub fn new(axes: Vec<Axis>, frame: DMatrix<f64>) -> Result<Self> {
        let n = axes.len();
        if frame.nrows() != n || frame.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: frame.nrows() });
        }
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].len();
        }
        let len = axes.iter().map(Axis::len).product();
        Ok(Self { axes, frame, strides, len })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let i = idx / s;
                idx %= s;
                i
            })
            .collect()
    }

    pub fn node_rotated(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().zip(&self.axes).map(|(&i, a)| a.nodes[i]).collect()
    }

    /// Node in ambient coordinates `x = frame^T y`.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.to_ambient(&self.node_rotated(idx))
    }

    pub fn to_ambient(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.frame[(j, i)] * y[j]).sum()).collect()
    }

    pub fn to_rotated(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.frame[(i, j)] * x[j]).sum()).collect()
    }

    /// Product of the one-dimensional masses: the grid's own rule for `mu`.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.len)
            .map(|idx| self.multi_index(idx).iter().zip(&self.axes).map(|(&i, a)| a.mass[i]).product())
            .collect()
    }

    /// Smallest uniform spacing, if any axis is uniform.
    pub fn min_spacing(&self) -> Option<f64> {
        self.axes.iter().filter_map(Axis::spacing).reduce(f64::min)
    }

    /// Applies a per-line operation along axis `k`, in parallel over lines.
    fn along_axis<F>(&self, k: usize, u: &[f64], out: &mut [f64], op: F)
    where
        F: Fn(&Axis, &[f64], &mut [f64]) + Sync,
    {
        let n = self.axes[k].len();
        let stride = self.strides[k];
        let block = n * stride;
        let axis = &self.axes[k];
        out.par_chunks_mut(block).zip(u.par_chunks(block)).for_each(|(ob, ub)| {
            let mut line = vec![0.0; n];
            let mut res = vec![0.0; n];
            for j in 0..stride {
                for i in 0..n {
                    line[i] = ub[j + i * stride];
                }
                op(axis, &line, &mut res);
                for i in 0..n {
                    ob[j + i * stride] = res[i];
                }
            }
        });
    }

    /// `out = lam u - L_h u`, the Kronecker sum of the axis generators.
    pub fn apply_shifted(&self, lam: f64, u: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; u.len()];
        out.iter_mut().zip(u).for_each(|(o, v)| *o = lam * v);
        for k in 0..self.dim() {
            self.along_axis(k, u, &mut tmp, |a, l, r| a.generator_line(l, r));
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= t);
        }
    }

    /// Partial derivative along rotated axis `k`.
    pub fn derivative(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.along_axis(k, u, &mut out, |a, l, r| a.d1_line(l, r));
        out
    }

    pub fn second_derivative(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.along_axis(k, u, &mut out, |a, l, r| a.d2_line(l, r));
        out
    }

    pub(crate) fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }
}

/// Radial grid on `[0, R]` for radially symmetric problems in `R^n`.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub n_dim: usize,
    pub radius: f64,
    pub nodes: Vec<f64>,
    /// Gaussian mass of each radial control volume (shell), exact up to quadrature.
    pub mass: Vec<f64>,
    /// `c_n r^{n-1} e^{-r^2/2} / h` at the faces `r_{i+1/2}`.
    face_flux: Vec<f64>,
}

/// `(2 pi)^{-n/2} |S^{n-1}|`, the radial density constant of the Gaussian in `R^n`.
pub fn radial_constant(n: usize) -> f64 {
    // Gamma(n/2) by recursion from Gamma(1) or Gamma(1/2)
    let mut gamma = if n.is_multiple_of(2) { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if n.is_multiple_of(2) { 1.0 } else { 0.5 };
    while a < n as f64 / 2.0 - 1e-12 {
        gamma *= a;
        a += 1.0;
    }
    2f64.powf(1.0 - n as f64 / 2.0) / gamma
}

impl RadialGrid {
    pub fn new(n_dim: usize, radius: f64, n_r: usize) -> Result<Self> {
        if n_dim == 0 {
            return Err(Error::InvalidParameter("radial grid needs a positive dimension".into()));
        }
        if n_r < 32 {
            return Err(Error::InvalidParameter(format!("radial grid needs at least 32 nodes, got {n_r}")));
        }
        let h = radius / (n_r - 1) as f64;
        let nodes: Vec<f64> = (0..n_r).map(|i| if i == n_r - 1 { radius } else { i as f64 * h }).collect();
        let c = radial_constant(n_dim);
        let density = |r: f64| c * r.powi(n_dim as i32 - 1) * (-0.5 * r * r).exp();
        let cell_mass = |a: f64, b: f64| {
            let (x, w) = composite_legendre(a, b, 1, 8);
            x.iter().zip(&w).map(|(r, wi)| wi * density(*r)).sum::<f64>()
        };
        let mass = (0..n_r)
            .map(|i| {
                let a = if i == 0 { 0.0 } else { nodes[i] - 0.5 * h };
                let b = if i == n_r - 1 { radius } else { nodes[i] + 0.5 * h };
                cell_mass(a, b)
            })
            .collect();
        let face_flux = (0..n_r - 1).map(|i| density(0.5 * (nodes[i] + nodes[i + 1])) / h).collect();
        Ok(Self { n_dim, radius, nodes, mass, face_flux })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    pub fn apply_shifted(&self, lam: f64, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            let mut flux = 0.0;
            if i + 1 < n {
                flux += self.face_flux[i] * (u[i + 1] - u[i]);
            }
            if i > 0 {
                flux -= self.face_flux[i - 1] * (u[i] - u[i - 1]);
            }
            out[i] = lam * u[i] - flux / self.mass[i];
        }
    }

    /// `(u', u'')` at every node; `u'(0) = 0` and `u''(0)` from the even extension.
    pub fn derivatives(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = u.len();
        let h = self.spacing();
        let h2 = h * h;
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        d2[0] = 2.0 * (u[1] - u[0]) / h2;
        for i in 1..n - 1 {
            d1[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
            d2[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
        }
        d1[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
        d2[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / h2;
        (d1, d2)
    }

    /// `sigma` of the sphere of radius `R`.
    pub fn boundary_measure(&self) -> f64 {
        radial_constant(self.n_dim) * self.radius.powi(self.n_dim as i32 - 1) * (-0.5 * self.radius * self.radius).exp()
    }
}

#[derive(Debug, Clone)]
pub enum Grid {
    Tensor(TensorGrid),
    Radial(RadialGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Tensor(t) => t.len(),
            Grid::Radial(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::Tensor(t) => t.dim(),
            Grid::Radial(r) => r.n_dim,
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        match self {
            Grid::Tensor(t) => t.masses(),
            Grid::Radial(r) => r.mass.clone(),
        }
    }

    /// Node in ambient coordinates; radial nodes are placed on the ray `r e_1`.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        match self {
            Grid::Tensor(t) => t.node(idx),
            Grid::Radial(r) => {
                let mut x = vec![0.0; r.n_dim];
                x[0] = r.nodes[idx];
                x
            }
        }
    }

    /// Characteristic mesh width (uniform spacing of the finest uniform axis).
    pub fn spacing(&self) -> Option<f64> {
        match self {
            Grid::Tensor(t) => t.min_spacing(),
            Grid::Radial(r) => Some(r.spacing()),
        }
    }
}

/// Discrete scalar field on a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Recovered first and second derivatives in the grid's rotated frame.
#[derive(Debug, Clone)]
pub struct RotatedDerivatives {
    /// `grad[k][node]`
    pub grad: Vec<Vec<f64>>,
    /// `hess[k][l][node]`, symmetric in `k, l`
    pub hess: Vec<Vec<Vec<f64>>>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(grid: Grid, f: F) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.node(i))).collect();
        Self { grid, values }
    }

    fn check_recoverable(&self) -> Result<()> {
        let ok = match &self.grid {
            Grid::Tensor(t) => t.axes.iter().all(|a| a.kind == AxisKind::Hermite || a.len() >= 3),
            Grid::Radial(r) => r.len() >= 4,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("derivative recovery needs at least 3 nodes per uniform axis".into()))
        }
    }

    pub(crate) fn rotated_derivatives(&self) -> Result<RotatedDerivatives> {
        self.check_recoverable()?;
        match &self.grid {
            Grid::Tensor(t) => {
                let n = t.dim();
                let grad: Vec<Vec<f64>> = (0..n).map(|k| t.derivative(k, &self.values)).collect();
                let mut hess = vec![vec![vec![]; n]; n];
                for k in 0..n {
                    hess[k][k] = t.second_derivative(k, &self.values);
                    #[allow(clippy::needless_range_loop)]
                    for l in k + 1..n {
                        let mixed = t.derivative(l, &grad[k]);
                        hess[k][l] = mixed.clone();
                        hess[l][k] = mixed;
                    }
                }
                Ok(RotatedDerivatives { grad, hess })
            }
            Grid::Radial(r) => {
                // Along the ray r e_1: grad = (u', 0, ..), Hessian = diag(u'', u'/r, ..).
                let n = r.n_dim;
                let (d1, d2) = r.derivatives(&self.values);
                let len = self.values.len();
                let mut grad = vec![vec![0.0; len]; n];
                grad[0] = d1.clone();
                let mut hess = vec![vec![vec![0.0; len]; n]; n];
                hess[0][0] = d2.clone();
                let tangential: Vec<f64> =
                    (0..len).map(|i| if i == 0 { d2[0] } else { d1[i] / r.nodes[i] }).collect();
                for (k, row) in hess.iter_mut().enumerate().skip(1) {
                    row[k] = tangential.clone();
                }
                Ok(RotatedDerivatives { grad, hess })
            }
        }
    }

    /// Gradient at every node, ambient coordinates.
    pub fn recover_gradient(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.rotated_derivatives()?;
        let n = self.grid.dim();
        Ok((0..self.values.len())
            .map(|i| {
                let gy: Vec<f64> = (0..n).map(|k| d.grad[k][i]).collect();
                match &self.grid {
                    Grid::Tensor(t) => t.to_ambient(&gy),
                    Grid::Radial(_) => gy,
                }
            })
            .collect())
    }

    /// Hessian at every node, ambient coordinates.
    pub fn recover_hessian(&self) -> Result<Vec<DMatrix<f64>>> {
        let d = self.rotated_derivatives()?;
        let n = self.grid.dim();
        Ok((0..self.values.len())
            .map(|i| {
                let hy = DMatrix::from_fn(n, n, |k, l| d.hess[k][l][i]);
                match &self.grid {
                    Grid::Tensor(t) => t.frame.transpose() * hy * &t.frame,
                    Grid::Radial(_) => hy,
                }
            })
            .collect())
    }
}
