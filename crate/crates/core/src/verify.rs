//! Numerical checks of the identities and inequalities behind the estimates,
//! evaluated by quadrature and independent of the solver, plus the versioned
//! battery that runs them together with a-priori ratio checks on solver output.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::functions::{Analytic, SmoothFunction};
use crate::linalg::{dot, norm};
use crate::measure::{boundary_quadrature, integrate, interior_quadrature, Quadrature, QuadratureSpec};
use crate::report::{sha256_hex, Cell, Provenance, VERSION};
use crate::solver::{radial_solve, solve, GridSpec, SolveReport};

/// Default tolerance of identity (residual) checks.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Default tolerance of inequality checks: pass when `slack >= -INEQUALITY_TOL`.
pub const INEQUALITY_TOL: f64 = 1e-8;
/// Tolerance on `|<grad u, nu>|` when checking the Neumann precondition.
pub const NEUMANN_TOL: f64 = 1e-10;
/// Bound on the drift-continuity ratio across the battery.
pub const DRIFT_RATIO_BOUND: f64 = 10.0;
/// Allowed excess of the a-priori ratios over their bound of one.
pub const RATIO_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Passes when `|residual| <= tolerance`.
    Residual,
    /// Passes when `slack >= -tolerance`.
    Inequality,
    /// Passes when the value is finite and `<= tolerance`.
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub residual_or_slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Auxiliary values recorded alongside the check.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, kind: CheckKind, lhs: f64, rhs: f64, value: f64, tolerance: f64) -> Self {
        let mut r = Self {
            name: name.into(),
            kind,
            lhs,
            rhs,
            residual_or_slack: value,
            tolerance,
            pass: false,
            details: BTreeMap::new(),
        };
        r.pass = r.evaluate();
        r
    }

    fn evaluate(&self) -> bool {
        let v = self.residual_or_slack;
        match self.kind {
            CheckKind::Residual => v.abs() <= self.tolerance,
            CheckKind::Inequality => v >= -self.tolerance,
            CheckKind::Bound => v.is_finite() && v <= self.tolerance,
        }
    }

    /// Same check judged against another tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.evaluate();
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }
}

fn check_dims(domain: &ConvexDomain, q: &Quadrature) -> Result<()> {
    match q.nodes.first() {
        Some(x) if x.len() != domain.dim() => Err(Error::DimensionMismatch { expected: domain.dim(), got: x.len() }),
        _ => Ok(()),
    }
}

fn unit_normal(domain: &ConvexDomain, x: &[f64]) -> Vec<f64> {
    let g = domain.grad_g_unchecked(x);
    let n = norm(&g);
    g.iter().map(|v| v / n).collect()
}

/// `int D_k phi psi + int phi D_k psi - int x_k phi psi = int_{boundary} nu_k phi psi dsigma`.
pub fn check_ibp(
    domain: &ConvexDomain,
    phi: &dyn SmoothFunction,
    psi: &dyn SmoothFunction,
    k: usize,
    interior: &Quadrature,
    boundary: &Quadrature,
) -> Result<CheckResult> {
    check_dims(domain, interior)?;
    if k >= domain.dim() {
        return Err(Error::InvalidParameter(format!("axis {k} out of range for dimension {}", domain.dim())));
    }
    let a = integrate(interior, |x| phi.gradient(x)[k] * psi.value(x));
    let b = integrate(interior, |x| phi.value(x) * psi.gradient(x)[k]);
    let c = integrate(interior, |x| x[k] * phi.value(x) * psi.value(x));
    let d = integrate(boundary, |x| unit_normal(domain, x)[k] * phi.value(x) * psi.value(x));
    let lhs = a + b;
    let rhs = c + d;
    Ok(CheckResult::new("ibp", CheckKind::Residual, lhs, rhs, lhs - rhs, RESIDUAL_TOL).detail("boundary_term", d))
}

/// `int L phi psi + int <grad phi, grad psi> = int_{boundary} <grad phi, nu> psi dsigma`.
pub fn check_green(
    domain: &ConvexDomain,
    phi: &dyn SmoothFunction,
    psi: &dyn SmoothFunction,
    interior: &Quadrature,
    boundary: &Quadrature,
) -> Result<CheckResult> {
    check_dims(domain, interior)?;
    let a = integrate(interior, |x| phi.ou_generator(x) * psi.value(x));
    let b = integrate(interior, |x| dot(&phi.gradient(x), &psi.gradient(x)));
    let c = integrate(boundary, |x| dot(&phi.gradient(x), &unit_normal(domain, x)) * psi.value(x));
    let lhs = a + b;
    Ok(CheckResult::new("green", CheckKind::Residual, lhs, c, lhs - c, RESIDUAL_TOL).detail("boundary_term", c))
}

/// Log-Sobolev slack `c int |grad f|^2 + M log M - int f^2 log f^2`, `M = int f^2`,
/// against `mu` restricted to the domain, normalized to a probability when asked.
///
/// The unnormalized evaluation with constant one is recorded as `literal_slack`.
pub fn check_logsob(
    domain: &ConvexDomain,
    f: &dyn SmoothFunction,
    interior: &Quadrature,
    constant: f64,
    normalize: bool,
) -> Result<CheckResult> {
    if let Some(x) = interior.nodes.iter().find(|x| !(f.value(x) > 0.0)) {
        return Err(Error::Precondition(format!("log-Sobolev needs f > 0, found f({x:?}) = {}", f.value(x))));
    }
    check_dims(domain, interior)?;
    let mass = interior.total_weight();
    let energy = integrate(interior, |x| dot(&f.gradient(x), &f.gradient(x)));
    let m2 = integrate(interior, |x| f.value(x).powi(2));
    let ent = integrate(interior, |x| {
        let v = f.value(x).powi(2);
        v * v.ln()
    });
    let slack_for = |z: f64, c: f64| {
        let (e, m, s) = (energy / z, m2 / z, ent / z);
        (c * e, s - m * m.ln())
    };
    let z = if normalize { mass } else { 1.0 };
    let (rhs, lhs) = slack_for(z, constant);
    let (lit_rhs, lit_lhs) = slack_for(1.0, 1.0);
    Ok(CheckResult::new("logsob", CheckKind::Inequality, lhs, rhs, rhs - lhs, INEQUALITY_TOL)
        .detail("literal_slack", lit_rhs - lit_lhs)
        .detail("measure", mass))
}

/// `max <D^2 u grad u, nu>` over boundary nodes, for `u` with vanishing normal derivative.
pub fn check_convexity_lemma(
    domain: &ConvexDomain,
    u: &dyn SmoothFunction,
    boundary: &Quadrature,
) -> Result<CheckResult> {
    if boundary.is_empty() {
        return Err(Error::Unsupported("domain has no boundary".into()));
    }
    let mut worst_flux: f64 = 0.0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for x in &boundary.nodes {
        let nu = unit_normal(domain, x);
        let g = u.gradient(x);
        worst_flux = worst_flux.max(dot(&g, &nu).abs());
        let hg = u.hessian(x) * nalgebra::DVector::from_column_slice(&g);
        worst = worst.max(dot(hg.as_slice(), &nu));
    }
    if worst_flux > NEUMANN_TOL {
        return Err(Error::Precondition(format!("normal derivative {worst_flux:e} exceeds {NEUMANN_TOL:e}")));
    }
    Ok(CheckResult::new("convexity_lemma", CheckKind::Inequality, worst, 0.0, -worst, INEQUALITY_TOL)
        .detail("max_normal_derivative", worst_flux)
        .detail("nodes", boundary.len() as f64))
}

/// `||<x, grad f>|| / ||f||_{W^{2,2}}`.
pub fn check_drift_continuity(
    domain: &ConvexDomain,
    f: &dyn SmoothFunction,
    interior: &Quadrature,
) -> Result<CheckResult> {
    check_dims(domain, interior)?;
    let drift = integrate(interior, |x| f.drift(x).powi(2)).sqrt();
    let w22 = integrate(interior, |x| {
        f.value(x).powi(2) + dot(&f.gradient(x), &f.gradient(x)) + f.hessian(x).norm_squared()
    })
    .sqrt();
    let ratio = if w22 > 0.0 { drift / w22 } else { 0.0 };
    Ok(CheckResult::new("drift_continuity", CheckKind::Bound, drift, w22, ratio, DRIFT_RATIO_BOUND))
}

/// How a battery case is solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverChoice {
    Tensor { grid: GridSpec },
    /// Radial reduction on a centered ball; `rhs` is evaluated at `r e_1`.
    Radial { n_r: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveCase {
    pub name: String,
    pub domain: ConvexDomain,
    pub rhs: Analytic,
    pub lambda: f64,
    pub solver: SolverChoice,
}

impl SolveCase {
    pub fn run(&self) -> Result<SolveReport> {
        match &self.solver {
            SolverChoice::Tensor { grid } => {
                let f = |x: &[f64]| self.rhs.value(x);
                solve(&self.domain, &f, self.lambda, grid).map(|(_, r)| r)
            }
            SolverChoice::Radial { n_r } => {
                let n = self.domain.dim();
                let f = |r: f64| {
                    let mut x = vec![0.0; n];
                    x[0] = r;
                    self.rhs.value(&x)
                };
                radial_solve(&self.domain, &f, self.lambda, n, *n_r).map(|(_, r)| r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum IdentityCheck {
    Ibp { name: String, domain: ConvexDomain, phi: Analytic, psi: Analytic, axis: usize, tolerance: f64 },
    Green { name: String, domain: ConvexDomain, phi: Analytic, psi: Analytic, tolerance: f64 },
    LogSobolev { name: String, domain: ConvexDomain, f: Analytic },
    Convexity { name: String, domain: ConvexDomain, u: Analytic },
    DriftContinuity { name: String, domain: ConvexDomain, f: Analytic },
}

impl IdentityCheck {
    pub fn name(&self) -> &str {
        match self {
            IdentityCheck::Ibp { name, .. }
            | IdentityCheck::Green { name, .. }
            | IdentityCheck::LogSobolev { name, .. }
            | IdentityCheck::Convexity { name, .. }
            | IdentityCheck::DriftContinuity { name, .. } => name,
        }
    }

    pub fn run(&self, spec: &QuadratureSpec) -> Result<CheckResult> {
        let quads = |d: &ConvexDomain| -> Result<(Quadrature, Quadrature)> {
            Ok((interior_quadrature(d, spec)?, boundary_quadrature(d, spec)?))
        };
        let result = match self {
            IdentityCheck::Ibp { domain, phi, psi, axis, tolerance, .. } => {
                let (qi, qb) = quads(domain)?;
                check_ibp(domain, phi, psi, *axis, &qi, &qb)?.with_tolerance(*tolerance)
            }
            IdentityCheck::Green { domain, phi, psi, tolerance, .. } => {
                let (qi, qb) = quads(domain)?;
                check_green(domain, phi, psi, &qi, &qb)?.with_tolerance(*tolerance)
            }
            IdentityCheck::LogSobolev { domain, f, .. } => {
                check_logsob(domain, f, &interior_quadrature(domain, spec)?, 2.0, true)?
            }
            IdentityCheck::Convexity { domain, u, .. } => {
                check_convexity_lemma(domain, u, &boundary_quadrature(domain, spec)?)?
            }
            IdentityCheck::DriftContinuity { domain, f, .. } => {
                check_drift_continuity(domain, f, &interior_quadrature(domain, spec)?)?
            }
        };
        Ok(result.renamed(self.name()))
    }
}

/// Versioned list of solver cases and identity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub quadrature: QuadratureSpec,
    pub solves: Vec<SolveCase>,
    pub checks: Vec<IdentityCheck>,
}

impl Manifest {
    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }

    /// Replaces the grid spacing of every tensor case.
    pub fn with_spacing(mut self, spacing: f64) -> Self {
        for case in &mut self.solves {
            if let SolverChoice::Tensor { grid } = &mut case.solver {
                grid.spacing = spacing;
            }
        }
        self
    }

    /// Keeps only solver cases at the given `lambda` values.
    pub fn with_lambdas(mut self, lambdas: &[f64]) -> Self {
        self.solves.retain(|c| lambdas.contains(&c.lambda));
        self
    }
}

pub const MANIFEST_VERSION: u32 = 1;

/// Lambda values of the battery.
pub const BATTERY_LAMBDAS: [f64; 3] = [0.1, 1.0, 10.0];

fn s2() -> f64 {
    0.5f64.sqrt()
}

/// The default battery: 26 solver cases and the identity checks.
pub fn default_manifest() -> Manifest {
    let tensor = GridSpec { spacing: 1.0 / 64.0, ..GridSpec::default() };
    let narrow = GridSpec { free_axis: crate::solver::FreeAxis::Hermite { modes: 8 }, ..tensor };
    let half = ConvexDomain::half_space(vec![1.0], 0.0).unwrap();
    let slab = ConvexDomain::slab(vec![1.0], 1.0).unwrap();
    let disk = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let r2 = |c: f64| Analytic::poly(&[(c, &[2, 0]), (c, &[0, 2])]);
    let disk_rhs = Analytic::Sum {
        terms: vec![
            Analytic::poly(&[(1.25, &[4, 0]), (2.5, &[2, 2]), (1.25, &[0, 4])]),
            r2(-5.5),
            Analytic::constant(2.0),
        ],
    };
    let rotated = crate::cylinder::CylindricalFunction::new(
        vec![vec![0.6, 0.8]],
        Analytic::axis_poly(0, &[0.0, -0.5, 1.0]),
    )
    .unwrap();
    let families: Vec<(&str, ConvexDomain, Analytic, SolverChoice)> = vec![
        ("halfspace_quadratic", half.clone(), Analytic::axis_poly(0, &[-0.5, 0.0, 1.0]), SolverChoice::Tensor { grid: tensor }),
        (
            "halfspace_bump",
            ConvexDomain::half_space(vec![1.0], 0.5).unwrap(),
            Analytic::bump(&[-0.3], 0.7, 1.0),
            SolverChoice::Tensor { grid: tensor },
        ),
        ("slab_cubic", slab.clone(), Analytic::axis_poly(0, &[0.0, -12.0, 0.0, 4.0]), SolverChoice::Tensor { grid: tensor }),
        (
            "slab_quartic",
            ConvexDomain::slab(vec![1.0], 0.8).unwrap(),
            Analytic::axis_poly(0, &[1.0, -1.0, 0.0, 0.0, 1.0]),
            SolverChoice::Tensor { grid: tensor },
        ),
        (
            "ball1d_bump",
            ConvexDomain::ball(vec![0.3], 1.2).unwrap(),
            Analytic::Sum { terms: vec![Analytic::bump(&[0.5], 0.4, 2.0), Analytic::axis_poly(0, &[0.0, 1.0])] },
            SolverChoice::Tensor { grid: tensor },
        ),
        ("disk_radial_quartic", disk.clone(), disk_rhs, SolverChoice::Radial { n_r: 257 }),
        (
            "cylinder_halfspace_quadratic",
            ConvexDomain::cylinder(half.clone(), 1).unwrap(),
            Analytic::poly(&[(1.0, &[2, 0]), (0.5, &[0, 1])]),
            SolverChoice::Tensor { grid: narrow },
        ),
        (
            "rotated_slab_cylindrical",
            ConvexDomain::slab(vec![s2(), s2()], 1.0).unwrap(),
            Analytic::Cylindrical(rotated),
            SolverChoice::Tensor { grid: narrow },
        ),
    ];
    let mut solves = Vec::new();
    for (name, domain, rhs, solver) in &families {
        for lam in BATTERY_LAMBDAS {
            solves.push(SolveCase {
                name: format!("{name}/lambda={lam}"),
                domain: domain.clone(),
                rhs: rhs.clone(),
                lambda: lam,
                solver: solver.clone(),
            });
        }
    }
    solves.push(SolveCase {
        name: "slab_constant/lambda=1".into(),
        domain: slab.clone(),
        rhs: Analytic::constant(1.0),
        lambda: 1.0,
        solver: SolverChoice::Tensor { grid: tensor },
    });
    solves.push(SolveCase {
        name: "disk_constant/lambda=2".into(),
        domain: disk.clone(),
        rhs: Analytic::constant(1.0),
        lambda: 2.0,
        solver: SolverChoice::Radial { n_r: 129 },
    });

    let whole = ConvexDomain::whole_space(1).unwrap();
    let one = Analytic::constant(1.0);
    let x = |axis: usize| Analytic::axis_poly(axis, &[0.0, 1.0]);
    let cylinder = ConvexDomain::cylinder(slab.clone(), 1).unwrap();
    let rot_half = ConvexDomain::half_space(vec![s2(), -s2()], 0.25).unwrap();
    let ball1 = ConvexDomain::ball(vec![0.0], 1.0).unwrap();
    let mut checks = vec![
        IdentityCheck::Ibp { name: "ibp/halfspace_1d_constant".into(), domain: half.clone(), phi: one.clone(), psi: one.clone(), axis: 0, tolerance: 1e-10 },
        IdentityCheck::Ibp { name: "ibp/wholespace_x".into(), domain: whole.clone(), phi: x(0), psi: one.clone(), axis: 0, tolerance: 1e-10 },
        IdentityCheck::Ibp { name: "ibp/disk_x1_x2".into(), domain: disk.clone(), phi: x(0), psi: x(1), axis: 0, tolerance: 1e-6 },
        IdentityCheck::Ibp {
            name: "ibp/slab_poly_bump".into(),
            domain: slab.clone(),
            phi: Analytic::axis_poly(0, &[1.0, 0.0, -2.0, 1.0]),
            psi: Analytic::bump(&[0.4], 0.5, 1.0),
            axis: 0,
            tolerance: 1e-8,
        },
        IdentityCheck::Ibp {
            name: "ibp/rotated_halfplane_axis1".into(),
            domain: rot_half.clone(),
            phi: Analytic::poly(&[(1.0, &[1, 1]), (0.5, &[0, 2])]),
            psi: Analytic::bump(&[0.2, -0.1], 1.0, 1.0),
            axis: 1,
            tolerance: 1e-8,
        },
        IdentityCheck::Ibp { name: "ibp/cylinder_axis1".into(), domain: cylinder.clone(), phi: x(1), psi: Analytic::axis_poly(0, &[1.0, 0.0, 1.0]), axis: 1, tolerance: 1e-8 },
        IdentityCheck::Green { name: "green/constant".into(), domain: half.clone(), phi: Analytic::constant(3.0), psi: x(0), tolerance: 1e-10 },
        IdentityCheck::Green {
            name: "green/slab_cubic_x".into(),
            domain: slab.clone(),
            phi: Analytic::axis_poly(0, &[0.0, -3.0, 0.0, 1.0]),
            psi: x(0),
            tolerance: 1e-7,
        },
        IdentityCheck::Green { name: "green/halfspace_x2_1".into(), domain: half.clone(), phi: Analytic::axis_poly(0, &[0.0, 0.0, 1.0]), psi: one.clone(), tolerance: 1e-7 },
        IdentityCheck::Green {
            name: "green/disk_poly".into(),
            domain: disk.clone(),
            phi: Analytic::poly(&[(1.0, &[2, 0]), (1.0, &[0, 1])]),
            psi: Analytic::poly(&[(1.0, &[1, 1]), (1.0, &[0, 0])]),
            tolerance: 1e-6,
        },
        IdentityCheck::Green {
            name: "green/rotated_halfplane".into(),
            domain: rot_half.clone(),
            phi: Analytic::bump(&[0.0, 0.5], 0.8, 1.0),
            psi: Analytic::poly(&[(1.0, &[1, 0]), (-1.0, &[0, 1])]),
            tolerance: 1e-8,
        },
        IdentityCheck::LogSobolev { name: "logsob/halfspace_constant".into(), domain: half.clone(), f: one.clone() },
        IdentityCheck::LogSobolev { name: "logsob/wholespace_exponential".into(), domain: whole.clone(), f: Analytic::ExpLinear { direction: vec![0.5], scale: 0.3 } },
        IdentityCheck::LogSobolev { name: "logsob/ball1d_linear".into(), domain: ball1.clone(), f: Analytic::axis_poly(0, &[1.0, 0.5]) },
        IdentityCheck::LogSobolev {
            name: "logsob/disk_poly".into(),
            domain: disk.clone(),
            f: Analytic::poly(&[(1.0, &[0, 0]), (0.3, &[1, 0]), (0.2, &[0, 2])]),
        },
        IdentityCheck::LogSobolev {
            name: "logsob/slab_bump".into(),
            domain: slab.clone(),
            f: Analytic::Sum { terms: vec![one.clone(), Analytic::bump(&[0.5], 0.3, 2.0)] },
        },
        IdentityCheck::LogSobolev {
            name: "logsob/halfspace_quadratic".into(),
            domain: half.clone(),
            f: Analytic::axis_poly(0, &[1.0, 0.0, 0.5]),
        },
        IdentityCheck::LogSobolev {
            name: "logsob/cylinder_mixed".into(),
            domain: cylinder.clone(),
            f: Analytic::poly(&[(2.0, &[0, 0]), (0.5, &[1, 0]), (0.25, &[0, 2])]),
        },
        IdentityCheck::Convexity {
            name: "convexity/disk_saddle".into(),
            domain: disk.clone(),
            u: Analytic::poly(&[(2.0, &[2, 0]), (-2.0, &[0, 2]), (-1.0, &[4, 0]), (1.0, &[0, 4])]),
        },
        IdentityCheck::Convexity {
            name: "convexity/slab_cubic_2d".into(),
            domain: ConvexDomain::slab(vec![1.0, 0.0], 1.0).unwrap(),
            u: Analytic::axis_poly(0, &[0.0, -3.0, 0.0, 1.0]),
        },
        IdentityCheck::Convexity {
            name: "convexity/disk_radial".into(),
            domain: disk.clone(),
            u: Analytic::Sum { terms: vec![Analytic::poly(&[(0.25, &[4, 0]), (0.5, &[2, 2]), (0.25, &[0, 4])]), r2(-0.5)] },
        },
        IdentityCheck::DriftContinuity { name: "drift/halfspace_x2".into(), domain: half.clone(), f: Analytic::axis_poly(0, &[0.0, 0.0, 1.0]) },
        IdentityCheck::DriftContinuity { name: "drift/constant".into(), domain: slab.clone(), f: one.clone() },
    ];
    for (name, domain, rhs, solver) in families {
        if matches!(solver, SolverChoice::Tensor { .. }) {
            checks.push(IdentityCheck::DriftContinuity { name: format!("drift/{name}"), domain, f: rhs });
        }
    }
    Manifest { version: MANIFEST_VERSION, quadrature: QuadratureSpec::default(), solves, checks }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub name: String,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub version: String,
    pub manifest_version: u32,
    pub manifest_hash: String,
    pub config_hash: String,
    pub passed: usize,
    pub failed: usize,
    /// Largest drift-continuity ratio seen, an empirical continuity constant.
    pub drift_constant: f64,
    pub checks: Vec<CheckResult>,
    pub solves: Vec<SolveRecord>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// One row per check.
    pub fn csv(&self) -> Result<String> {
        let rows: Vec<Vec<Cell>> = self
            .checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone().into(),
                    format!("{:?}", c.kind).to_lowercase().into(),
                    c.lhs.into(),
                    c.rhs.into(),
                    c.residual_or_slack.into(),
                    c.tolerance.into(),
                    c.pass.into(),
                ]
            })
            .collect();
        crate::report::to_csv(
            &Provenance::new(self.config_hash.clone()),
            &["name", "kind", "lhs", "rhs", "residual_or_slack", "tolerance", "pass"],
            &rows,
        )
    }
}

/// A-priori checks on one solver report: `r1, r2, r3, w22_ratio <= 1 + RATIO_MARGIN`.
pub fn apriori_checks(name: &str, rep: &SolveReport) -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = [("r1", rep.r1), ("r2", rep.r2), ("r3", rep.r3), ("w22", rep.w22_ratio)]
        .into_iter()
        .map(|(tag, r)| CheckResult::new(format!("apriori_{tag}/{name}"), CheckKind::Inequality, r, 1.0, 1.0 - r, RATIO_MARGIN))
        .collect();
    out.push(CheckResult::new(
        format!("cg_converged/{name}"),
        CheckKind::Bound,
        rep.cg_residual,
        crate::solver::CG_TOLERANCE,
        rep.cg_residual,
        crate::solver::CG_TOLERANCE,
    ));
    out
}

/// Runs every case and check of `manifest`; solver errors abort the run.
pub fn run_battery(manifest: &Manifest, config_hash: &str) -> Result<BatteryReport> {
    let solved: Vec<(String, SolveReport)> = manifest
        .solves
        .par_iter()
        .map(|case| case.run().map(|r| (case.name.clone(), r)))
        .collect::<Result<_>>()?;
    let identity: Vec<CheckResult> =
        manifest.checks.par_iter().map(|c| c.run(&manifest.quadrature)).collect::<Result<_>>()?;
    let mut checks = Vec::new();
    for (name, rep) in &solved {
        checks.extend(apriori_checks(name, rep));
        if rep.l2_f > 0.0 && rep.r2 == 0.0 && rep.r3 == 0.0 {
            checks.push(CheckResult::new(format!("constant_attains_r1/{name}"), CheckKind::Residual, rep.r1, 1.0, rep.r1 - 1.0, 1e-8));
        }
    }
    checks.extend(identity);
    let drift_constant = checks
        .iter()
        .filter(|c| c.kind == CheckKind::Bound && c.name.starts_with("drift/"))
        .map(|c| c.residual_or_slack)
        .fold(0.0, f64::max);
    let failed = checks.iter().filter(|c| !c.pass).count();
    Ok(BatteryReport {
        version: VERSION.to_string(),
        manifest_version: manifest.version,
        manifest_hash: manifest.hash(),
        config_hash: config_hash.to_string(),
        passed: checks.len() - failed,
        failed,
        drift_constant,
        checks,
        solves: solved.into_iter().map(|(name, report)| SolveRecord { name, report }).collect(),
    })
}
