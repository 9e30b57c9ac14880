//! Cylindrical functions, coordinate projections and lifting.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::functions::{Analytic, SmoothFunction};
use crate::linalg::{compensated_sum, dot};
use crate::solver::{grid_norms, solve, Grid, GridFunction, GridSpec, NormSet, SolveReport, TensorGrid};

/// Tolerance on `|<l_i, l_j> - delta_ij|` for a direction list to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

pub fn check_orthonormal(directions: &[Vec<f64>]) -> Result<()> {
    let Some(first) = directions.first() else {
        return Err(Error::InvalidParameter("direction list is empty".into()));
    };
    let n = first.len();
    for (i, a) in directions.iter().enumerate() {
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.len() });
        }
        for (j, b) in directions.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = dot(a, b);
            if (d - target).abs() > ORTHONORMAL_TOL {
                return Err(Error::InvalidParameter(format!(
                    "directions {i} and {j} are not orthonormal (inner product {d})"
                )));
            }
        }
    }
    Ok(())
}

/// Coordinates `(<h_1, x>, ..., <h_q, x>)` of `x` along an orthonormal list.
pub fn project(x: &[f64], directions: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_orthonormal(directions)?;
    if directions[0].len() != x.len() {
        return Err(Error::DimensionMismatch { expected: directions[0].len(), got: x.len() });
    }
    Ok(directions.iter().map(|h| dot(h, x)).collect())
}

/// `sum_i xi_i h_i`, the inverse of [`project`] on `span(h)`.
pub fn embed(xi: &[f64], directions: &[Vec<f64>]) -> Vec<f64> {
    let n = directions.first().map_or(0, Vec::len);
    let mut x = vec![0.0; n];
    for (c, h) in xi.iter().zip(directions) {
        x.iter_mut().zip(h).for_each(|(xj, hj)| *xj += c * hj);
    }
    x
}

/// `x -> w(<l_1, x>, ..., <l_k, x>)` for an orthonormal list `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCylindrical")]
pub struct CylindricalFunction {
    directions: Vec<Vec<f64>>,
    profile: Box<Analytic>,
}

#[derive(Deserialize)]
struct RawCylindrical {
    directions: Vec<Vec<f64>>,
    profile: Box<Analytic>,
}

impl TryFrom<RawCylindrical> for CylindricalFunction {
    type Error = Error;
    fn try_from(raw: RawCylindrical) -> Result<Self> {
        CylindricalFunction::new(raw.directions, *raw.profile)
    }
}

impl CylindricalFunction {
    pub fn new(directions: Vec<Vec<f64>>, profile: Analytic) -> Result<Self> {
        check_orthonormal(&directions)?;
        if profile.min_dim() > directions.len() {
            return Err(Error::InvalidParameter(format!(
                "profile needs {} coordinates but only {} directions are given",
                profile.min_dim(),
                directions.len()
            )));
        }
        Ok(Self { directions, profile: Box::new(profile) })
    }

    /// Axis-aligned directions `e_0, ..., e_{k-1}` in `R^n`.
    pub fn axis_aligned(k: usize, n: usize, profile: Analytic) -> Result<Self> {
        let directions = (0..k)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        Self::new(directions, profile)
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn profile(&self) -> &Analytic {
        &self.profile
    }

    pub fn ambient_dim(&self) -> usize {
        self.directions[0].len()
    }

    fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.directions.iter().map(|h| dot(h, x)).collect()
    }
}

impl SmoothFunction for CylindricalFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.profile.value(&self.coords(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let gw = self.profile.gradient(&self.coords(x));
        embed(&gw, &self.directions)
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let hw = self.profile.hessian(&self.coords(x));
        let k = self.directions.len();
        let n = x.len();
        let g = DMatrix::from_fn(k, n, |i, j| self.directions[i][j]);
        g.transpose() * hw * g
    }
}

/// Piecewise-cubic (spectral on Hermite axes) interpolant of a grid function
/// and of its recovered first and second derivatives.
#[derive(Debug)]
pub struct Interpolant {
    grid: Grid,
    domain: ConvexDomain,
    value: Vec<f64>,
    grad: Vec<Vec<f64>>,
    hess: Vec<Vec<Vec<f64>>>,
    clamped: AtomicUsize,
}

impl Interpolant {
    pub fn new(v: &GridFunction, domain: &ConvexDomain) -> Result<Self> {
        if domain.dim() != v.grid.dim() {
            return Err(Error::DimensionMismatch { expected: v.grid.dim(), got: domain.dim() });
        }
        let d = v.rotated_derivatives()?;
        Ok(Self {
            grid: v.grid.clone(),
            domain: domain.clone(),
            value: v.values.clone(),
            grad: d.grad,
            hess: d.hess,
            clamped: AtomicUsize::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Number of evaluations whose argument was projected back onto the domain.
    pub fn clamped_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    fn clamp(&self, xi: &[f64]) -> Vec<f64> {
        if self.domain.g_unchecked(xi) <= crate::domain::BOUNDARY_TOL {
            xi.to_vec()
        } else {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            self.domain.project_to_closure(xi)
        }
    }

    /// Value, gradient and Hessian at `xi` in base coordinates.
    pub fn eval(&self, xi: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let xi = self.clamp(xi);
        match &self.grid {
            Grid::Tensor(t) => self.eval_tensor(t, &xi),
            Grid::Radial(r) => {
                let q = self.dim();
                let rad = crate::linalg::norm(&xi).min(r.radius);
                let st = lagrange_stencil(&r.nodes, rad);
                let at = |field: &[f64]| st.iter().map(|(j, w)| w * field[*j]).sum::<f64>();
                let u = at(&self.value);
                let d1 = at(&self.grad[0]);
                let d2 = at(&self.hess[0][0]);
                let tangential = if q > 1 { at(&self.hess[1][1]) } else { 0.0 };
                let e: Vec<f64> = if rad > 0.0 { xi.iter().map(|v| v / rad).collect() } else { vec![0.0; q] };
                let grad = e.iter().map(|v| d1 * v).collect();
                let hess = DMatrix::from_fn(q, q, |k, l| {
                    let id = if k == l { 1.0 } else { 0.0 };
                    d2 * e[k] * e[l] + tangential * (id - e[k] * e[l])
                });
                (u, grad, hess)
            }
        }
    }

    fn eval_tensor(&self, t: &TensorGrid, xi: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let q = t.dim();
        let y = t.to_rotated(xi);
        let stencils: Vec<Vec<(usize, f64)>> = t.axes.iter().zip(&y).map(|(a, &yk)| a.stencil(yk)).collect();
        let mut value = 0.0;
        let mut gy = vec![0.0; q];
        let mut hy = DMatrix::zeros(q, q);
        let mut pos = vec![0usize; q];
        loop {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..q {
                let (j, wk) = stencils[k][pos[k]];
                w *= wk;
                idx += j * t.stride(k);
            }
            value += w * self.value[idx];
            for k in 0..q {
                gy[k] += w * self.grad[k][idx];
                for l in 0..q {
                    hy[(k, l)] += w * self.hess[k][l][idx];
                }
            }
            let mut k = 0;
            while k < q {
                pos[k] += 1;
                if pos[k] < stencils[k].len() {
                    break;
                }
                pos[k] = 0;
                k += 1;
            }
            if k == q {
                break;
            }
        }
        let grad = t.to_ambient(&gy);
        let hess = t.frame.transpose() * hy * &t.frame;
        (value, grad, hess)
    }
}

/// Cubic Lagrange weights on a sorted, uniformly spaced node list.
fn lagrange_stencil(nodes: &[f64], t: f64) -> Vec<(usize, f64)> {
    let n = nodes.len();
    let h = nodes[1] - nodes[0];
    let i = (((t - nodes[0]) / h).floor().max(0.0) as usize).min(n - 2);
    let start = i.saturating_sub(1).min(n.saturating_sub(4));
    let end = (start + 4).min(n);
    (start..end)
        .map(|j| {
            let w: f64 = (start..end).filter(|&k| k != j).map(|k| (t - nodes[k]) / (nodes[j] - nodes[k])).product();
            (j, w)
        })
        .collect()
}

/// `u(x) = v(project(x, G))` for a grid solution `v` on the base domain.
#[derive(Debug)]
pub struct LiftedFunction {
    interpolant: Interpolant,
    directions: Vec<Vec<f64>>,
}

/// Lifts `v`, a grid function on `base ⊂ R^q`, to `R^n` along the orthonormal list `directions`.
pub fn lift(v: &GridFunction, base: &ConvexDomain, directions: Vec<Vec<f64>>, n: usize) -> Result<LiftedFunction> {
    check_orthonormal(&directions)?;
    if directions[0].len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: directions[0].len() });
    }
    if directions.len() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), got: directions.len() });
    }
    Ok(LiftedFunction { interpolant: Interpolant::new(v, base)?, directions })
}

impl LiftedFunction {
    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn clamped_count(&self) -> usize {
        self.interpolant.clamped_count()
    }

    fn base_point(&self, x: &[f64]) -> Vec<f64> {
        self.directions.iter().map(|h| dot(h, x)).collect()
    }

    fn g_matrix(&self) -> DMatrix<f64> {
        let n = self.directions[0].len();
        DMatrix::from_fn(self.directions.len(), n, |i, j| self.directions[i][j])
    }
}

impl SmoothFunction for LiftedFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.interpolant.eval(&self.base_point(x)).0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        embed(&self.interpolant.eval(&self.base_point(x)).1, &self.directions)
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let g = self.g_matrix();
        g.transpose() * self.interpolant.eval(&self.base_point(x)).2 * g
    }
}

/// Outcome of solving on a base domain, lifting, and comparing with a direct
/// solve on the full domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// `||lift(v) - u_direct||` in `L^2(mu)` on the direct grid.
    pub l2_discrepancy: f64,
    /// Spacing of the coarser of the two grids.
    pub coarse_spacing: f64,
    pub base: SolveReport,
    pub direct: SolveReport,
    /// Norms of the lifted function measured on the direct grid.
    pub lifted: NormSet,
    /// `direct - lifted`, norm by norm.
    pub norm_differences: NormSet,
    pub clamped_points: usize,
}

/// Solves on `base`, lifts along the first `q` coordinate axes and compares with a
/// direct solve on `base x R^extra_dims` with `f(x) = f_base(x_1, ..., x_q)`.
pub fn cylinder_equivalence<F>(
    base: &ConvexDomain,
    f_base: &F,
    lam: f64,
    extra_dims: usize,
    base_grid: &GridSpec,
    direct_grid: &GridSpec,
) -> Result<EquivalenceReport>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let q = base.dim();
    let n = q + extra_dims;
    let directions = (0..q)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let direct = ConvexDomain::cylinder(base.clone(), extra_dims)?;
    lifted_equivalence(base, f_base, lam, directions, &direct, base_grid, direct_grid)
}

/// Value, gradient, Hessian and position at one node.
type Sample = (f64, Vec<f64>, DMatrix<f64>, Vec<f64>);

/// As [`cylinder_equivalence`] with an arbitrary orthonormal `directions` list and
/// a direct domain `{x : project(x, directions) in base}` supplied by the caller.
pub fn lifted_equivalence<F>(
    base: &ConvexDomain,
    f_base: &F,
    lam: f64,
    directions: Vec<Vec<f64>>,
    direct_domain: &ConvexDomain,
    base_grid: &GridSpec,
    direct_grid: &GridSpec,
) -> Result<EquivalenceReport>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let n = direct_domain.dim();
    let (v, base_report) = solve(base, f_base, lam, base_grid)?;
    let lifted = lift(&v, base, directions.clone(), n)?;
    let f_direct = |x: &[f64]| {
        let xi: Vec<f64> = directions.iter().map(|h| dot(h, x)).collect();
        f_base(&xi)
    };
    let (u, direct_report) = solve(direct_domain, &f_direct, lam, direct_grid)?;
    let mass = u.grid.masses();
    let samples: Vec<Sample> = (0..u.values.len())
        .into_par_iter()
        .map(|i| {
            let x = u.grid.node(i);
            (lifted.value(&x), lifted.gradient(&x), lifted.hessian(&x), x)
        })
        .collect();
    let weighted = |g: &dyn Fn(usize) -> f64| compensated_sum((0..mass.len()).map(|i| mass[i] * g(i))).max(0.0).sqrt();
    let l2_discrepancy = weighted(&|i| (samples[i].0 - u.values[i]).powi(2));
    let lifted_norms = NormSet {
        l2_u: weighted(&|i| samples[i].0.powi(2)),
        l2_grad: weighted(&|i| dot(&samples[i].1, &samples[i].1)),
        hs_hess: weighted(&|i| samples[i].2.norm_squared()),
        drift_norm: weighted(&|i| dot(&samples[i].3, &samples[i].1).powi(2)),
        flux_norm: grid_norms(&v)?.flux_norm,
    };
    let d = direct_report.norms();
    let norm_differences = NormSet {
        l2_u: d.l2_u - lifted_norms.l2_u,
        l2_grad: d.l2_grad - lifted_norms.l2_grad,
        hs_hess: d.hs_hess - lifted_norms.hs_hess,
        drift_norm: d.drift_norm - lifted_norms.drift_norm,
        flux_norm: d.flux_norm - lifted_norms.flux_norm,
    };
    Ok(EquivalenceReport {
        l2_discrepancy,
        coarse_spacing: base_report.spacing.max(direct_report.spacing),
        base: base_report,
        direct: direct_report,
        lifted: lifted_norms,
        norm_differences,
        clamped_points: lifted.clamped_count(),
    })
}

/// One-dimensional problem swept over cylinders `base x R^{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProblem {
    pub base: ConvexDomain,
    /// Right-hand side as a function of the first coordinate.
    pub rhs: Analytic,
    pub grid: GridSpec,
    /// Report `wall_time_ms`; off keeps sweep output reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

/// Largest ambient dimension accepted by [`dimension_sweep`].
pub const MAX_SWEEP_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub lambda: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub w22_ratio: f64,
    pub cg_iterations: usize,
    pub wall_time_ms: f64,
}

/// Solves the cylindrical problem in every dimension of `dims`, concurrently.
pub fn dimension_sweep(problem: &SweepProblem, dims: &[usize], lam: f64) -> Result<Vec<SweepRow>> {
    if problem.base.dim() != 1 {
        return Err(Error::InvalidParameter("sweep base must be one-dimensional".into()));
    }
    if problem.rhs.min_dim() > 1 {
        return Err(Error::InvalidParameter("sweep right-hand side must depend on x_1 only".into()));
    }
    if let Some(&bad) = dims.iter().find(|&&n| n == 0 || n > MAX_SWEEP_DIM) {
        return Err(Error::InvalidParameter(format!("sweep dimension {bad} outside 1..={MAX_SWEEP_DIM}")));
    }
    dims.par_iter()
        .map(|&n| {
            let start = Instant::now();
            let domain = if n == 1 { problem.base.clone() } else { ConvexDomain::cylinder(problem.base.clone(), n - 1)? };
            let f = |x: &[f64]| problem.rhs.value(&x[..1]);
            let (_, rep) = solve(&domain, &f, lam, &problem.grid)?;
            let wall_time_ms = if problem.record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            Ok(SweepRow {
                n,
                lambda: lam,
                r1: rep.r1,
                r2: rep.r2,
                r3: rep.r3,
                w22_ratio: rep.w22_ratio,
                cg_iterations: rep.cg_iterations,
                wall_time_ms,
            })
        })
        .collect()
}

/// Ratio columns whose largest magnitude is below this are treated as zero.
pub const SPREAD_FLOOR: f64 = 1e-12;

/// Largest relative spread `(max - min) / max |.|` of each ratio column, with the
/// scale floored at [`SPREAD_FLOOR`] so round-off in a vanishing column is not amplified.
pub fn sweep_spread(rows: &[SweepRow]) -> [f64; 4] {
    let spread = |get: fn(&SweepRow) -> f64| {
        let vals: Vec<f64> = rows.iter().map(get).collect();
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        (hi - lo) / scale.max(SPREAD_FLOOR)
    };
    [spread(|r| r.r1), spread(|r| r.r2), spread(|r| r.r3), spread(|r| r.w22_ratio)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::tests::fd_check;
    use crate::functions::apply_operator;
    use proptest::prelude::*;

    fn rotated() -> CylindricalFunction {
        let s = 0.5f64.sqrt();
        CylindricalFunction::new(
            vec![vec![s, s, 0.0]],
            Analytic::axis_poly(0, &[0.5, -1.0, 0.25, 0.3]),
        )
        .unwrap()
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(&[3.0, 7.0], &[vec![1.0, 0.0]]).unwrap(), vec![3.0]);
        let s = 0.5f64.sqrt();
        let p = project(&[1.0, 1.0], &[vec![s, s]]).unwrap();
        assert!((p[0] - 2f64.sqrt()).abs() < 1e-15);
        let g = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let xi = [0.3, -2.0];
        assert_eq!(project(&embed(&xi, &g), &g).unwrap(), xi.to_vec());
    }

    #[test]
    fn project_rejects_non_orthonormal() {
        assert!(project(&[1.0, 1.0], &[vec![1.0, 1.0]]).is_err());
        assert!(project(&[1.0, 1.0], &[vec![1.0, 0.0], vec![1.0, 0.0]]).is_err());
        assert!(project(&[1.0], &[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn cylindrical_derivatives() {
        let f = rotated();
        fd_check(&f, &[0.3, -0.2, 1.7]);
        fd_check(&f, &[-1.0, 0.5, 0.0]);
    }

    #[test]
    fn serde_validates_directions() {
        let json = r#"{"directions":[[1.0,1.0]],"profile":{"kind":"constant","value":1.0}}"#;
        assert!(serde_json::from_str::<CylindricalFunction>(json).is_err());
        let ok = serde_json::to_string(&rotated()).unwrap();
        assert_eq!(serde_json::from_str::<CylindricalFunction>(&ok).unwrap(), rotated());
    }

    #[test]
    fn lifting_commutes_with_the_operator() {
        // L(w o G) = (L w) o G pointwise for orthonormal G.
        let f = rotated();
        for x in [[0.3, -0.2, 1.7], [2.0, 1.0, -3.0]] {
            let xi = project(&x, f.directions()).unwrap();
            let lifted = apply_operator(&f, 1.3).value(&x);
            let base = apply_operator(f.profile(), 1.3).value(&xi);
            assert!((lifted - base).abs() < 1e-10);
        }
    }

    fn slab1() -> ConvexDomain {
        ConvexDomain::slab(vec![1.0], 1.0).unwrap()
    }

    fn cubic_rhs(x: &[f64]) -> f64 {
        4.0 * x[0].powi(3) - 12.0 * x[0]
    }

    #[test]
    fn lift_of_constant_is_constant() {
        let (v, _) = solve(&slab1(), &|_: &[f64]| 2.0, 4.0, &GridSpec::with_spacing(0.125)).unwrap();
        let u = lift(&v, &slab1(), vec![vec![0.0, 1.0, 0.0]], 3).unwrap();
        for x in [[0.0, 0.3, 5.0], [1.0, -1.0, -2.0], [7.0, 0.99, 0.0]] {
            assert!((u.value(&x) - 0.5).abs() < 1e-12);
            assert!(u.gradient(&x).iter().all(|g| g.abs() < 1e-10));
        }
    }

    #[test]
    fn lift_clamps_points_outside_the_base() {
        let (v, _) = solve(&slab1(), &cubic_rhs, 1.0, &GridSpec::with_spacing(1.0 / 64.0)).unwrap();
        let u = lift(&v, &slab1(), vec![vec![1.0, 0.0]], 2).unwrap();
        assert_eq!(u.clamped_count(), 0);
        let inside = u.value(&[1.0, 0.0]);
        assert_eq!(u.value(&[3.0, 2.0]), inside);
        assert_eq!(u.clamped_count(), 1);
    }

    #[test]
    fn lift_rejects_mismatched_directions() {
        let (v, _) = solve(&slab1(), &|_: &[f64]| 1.0, 1.0, &GridSpec::default()).unwrap();
        assert!(lift(&v, &slab1(), vec![vec![1.0, 1.0]], 2).is_err());
        assert!(lift(&v, &slab1(), vec![vec![1.0, 0.0]], 3).is_err());
        assert!(lift(&v, &slab1(), vec![vec![1.0, 0.0], vec![0.0, 1.0]], 2).is_err());
    }

    #[test]
    fn lifted_derivatives_live_in_span_of_directions() {
        let s = 0.5f64.sqrt();
        let (v, _) = solve(&slab1(), &cubic_rhs, 1.0, &GridSpec::with_spacing(1.0 / 64.0)).unwrap();
        let u = lift(&v, &slab1(), vec![vec![s, s, 0.0]], 3).unwrap();
        let orth = [[s, -s, 0.0], [0.0, 0.0, 1.0]];
        for x in [[0.2, 0.1, -1.0], [-0.5, 0.3, 2.0]] {
            let g = u.gradient(&x);
            let h = u.hessian(&x);
            for w in &orth {
                assert!(dot(&g, w).abs() < 1e-12);
                let hw = &h * nalgebra::DVector::from_column_slice(w);
                assert!(hw.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn lifting_commutes_with_the_operator_on_grid_functions() {
        let s = 0.5f64.sqrt();
        let (v, _) = solve(&slab1(), &cubic_rhs, 1.0, &GridSpec::with_spacing(1.0 / 64.0)).unwrap();
        let interp = Interpolant::new(&v, &slab1()).unwrap();
        let u = lift(&v, &slab1(), vec![vec![s, s, 0.0]], 3).unwrap();
        for x in [[0.2, 0.1, -1.0], [-0.5, 0.3, 2.0], [0.4, -0.9, 0.0]] {
            let xi = project(&x, u.directions()).unwrap();
            let (val, g, h) = interp.eval(&xi);
            let base = 0.7 * val - (h.trace() - dot(&xi, &g));
            assert!((apply_operator(&u, 0.7).value(&x) - base).abs() < 1e-10);
        }
    }

    #[test]
    fn lift_preserves_gaussian_l2_norm() {
        use crate::measure::{integrate, interior_quadrature, QuadratureSpec};
        let (v, _) = solve(&slab1(), &cubic_rhs, 1.0, &GridSpec::with_spacing(1.0 / 64.0)).unwrap();
        let interp = Interpolant::new(&v, &slab1()).unwrap();
        let u = lift(&v, &slab1(), vec![vec![1.0, 0.0]], 2).unwrap();
        let spec = QuadratureSpec::default();
        let q_base = interior_quadrature(&slab1(), &spec).unwrap();
        let q_cyl = interior_quadrature(&ConvexDomain::cylinder(slab1(), 1).unwrap(), &spec).unwrap();
        let base = integrate(&q_base, |x| interp.eval(x).0.powi(2));
        let lifted = integrate(&q_cyl, |x| u.value(x).powi(2));
        assert!((base - lifted).abs() < 1e-12 * base, "{base} vs {lifted}");
    }

    #[test]
    fn equivalence_on_slab_times_line() {
        let h = 1.0 / 32.0;
        let spec = GridSpec { spacing: h, free_axis: crate::solver::FreeAxis::Hermite { modes: 6 }, truncation: 8.0 };
        let rep = cylinder_equivalence(&slab1(), &cubic_rhs, 1.0, 1, &GridSpec::with_spacing(h), &spec).unwrap();
        assert!(rep.l2_discrepancy <= 5.0 * h * h, "{rep:?}");
        assert!(rep.norm_differences.hs_hess.abs() < 1e-6 * rep.base.hs_hess);
        assert!((rep.lifted.hs_hess - rep.base.hs_hess).abs() < 1e-6 * rep.base.hs_hess);
        assert_eq!(rep.clamped_points, 0);

        let one = cylinder_equivalence(&slab1(), &|_: &[f64]| 1.0, 1.0, 1, &GridSpec::with_spacing(h), &spec).unwrap();
        assert!(one.l2_discrepancy < 1e-12);
    }

    #[test]
    fn equivalence_with_different_grids() {
        let coarse = 1.0 / 32.0;
        let fine = GridSpec { spacing: 1.0 / 64.0, free_axis: crate::solver::FreeAxis::Uniform, truncation: 6.0 };
        let rep = cylinder_equivalence(&slab1(), &cubic_rhs, 1.0, 1, &GridSpec::with_spacing(coarse), &fine).unwrap();
        assert_eq!(rep.coarse_spacing, coarse);
        assert!(rep.l2_discrepancy <= 5.0 * coarse * coarse, "{}", rep.l2_discrepancy);
    }

    #[test]
    fn equivalence_with_rotated_directions() {
        let s = 0.5f64.sqrt();
        let h = 1.0 / 32.0;
        let direct = ConvexDomain::slab(vec![s, s], 1.0).unwrap();
        let spec = GridSpec { spacing: h, free_axis: crate::solver::FreeAxis::Hermite { modes: 6 }, truncation: 8.0 };
        let rep = lifted_equivalence(
            &slab1(),
            &cubic_rhs,
            1.0,
            vec![vec![s, s]],
            &direct,
            &GridSpec::with_spacing(h),
            &spec,
        )
        .unwrap();
        assert!(rep.l2_discrepancy <= 5.0 * h * h, "{rep:?}");
        assert!(rep.norm_differences.l2_grad.abs() < 1e-6 * rep.base.l2_grad);
    }

    fn sweep_problem(rhs: Analytic) -> SweepProblem {
        SweepProblem {
            base: ConvexDomain::half_space(vec![1.0], 0.0).unwrap(),
            rhs,
            grid: GridSpec { spacing: 1.0 / 32.0, free_axis: crate::solver::FreeAxis::Hermite { modes: 3 }, truncation: 8.0 },
            record_timing: false,
        }
    }

    #[test]
    fn sweep_of_constant_data() {
        let rows = dimension_sweep(&sweep_problem(Analytic::constant(1.0)), &[1, 2, 3], 1.0).unwrap();
        for r in &rows {
            assert!((r.r1 - 1.0).abs() < 1e-8 && r.r2 < 1e-16 && r.r3 < 1e-16);
            assert_eq!(r.wall_time_ms, 0.0);
        }
    }

    #[test]
    fn sweep_ratios_are_flat_across_dimensions() {
        let p = sweep_problem(Analytic::axis_poly(0, &[0.5, -1.0, 2.0]));
        let rows = dimension_sweep(&p, &[1, 2, 3, 4], 1.0).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        for s in sweep_spread(&rows) {
            assert!(s <= 1e-6, "{rows:?}");
        }
        assert!(rows.iter().all(|r| r.w22_ratio <= 1.0));
    }

    #[test]
    fn sweep_validates_input() {
        let p = sweep_problem(Analytic::constant(1.0));
        assert!(dimension_sweep(&p, &[0], 1.0).is_err());
        assert!(dimension_sweep(&p, &[7], 1.0).is_err());
        let p2 = sweep_problem(Analytic::axis_poly(1, &[0.0, 1.0]));
        assert!(dimension_sweep(&p2, &[2], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_orthogonal_translations(x in prop::array::uniform3(-3.0f64..3.0), t in -5.0f64..5.0) {
            let f = rotated();
            let s = 0.5f64.sqrt();
            let shift = [s * t, -s * t, 0.7 * t];
            let y: Vec<f64> = x.iter().zip(shift).map(|(a, b)| a + b).collect();
            prop_assert!((f.value(&x) - f.value(&y)).abs() < 1e-10);
        }

        #[test]
        fn project_is_isometry_on_span(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let s = 0.5f64.sqrt();
            let g = vec![vec![s, s, 0.0], vec![0.0, 0.0, 1.0]];
            let x = embed(&[a, b], &g);
            let p = project(&x, &g).unwrap();
            prop_assert!((crate::linalg::norm(&p) - crate::linalg::norm(&x)).abs() < 1e-12);
        }
    }
}
