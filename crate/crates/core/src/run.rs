//! Configuration-driven experiment runner behind the CLI.

use std::path::PathBuf;

use serde::Serialize;

use crate::config::{Command, ExperimentConfig, Format};
use crate::cylinder::{cylinder_equivalence, dimension_sweep, sweep_spread, EquivalenceReport, Interpolant, SweepProblem, SweepRow};
use crate::domain::{ConvexDomain, DomainKind};
use crate::error::{Error, Result};
use crate::functions::{Analytic, SmoothFunction};
use crate::oracle::{feynman_kac_with, McEstimate, MIN_DISCOUNT_HORIZON};
use crate::report::{to_csv, to_json, write_artifact, Cell, Provenance, VERSION};
use crate::solver::{radial_solve, solve, FreeAxis, GridFunction, GridSpec, SolveReport};
use crate::verify::{apriori_checks, default_manifest, run_battery, CheckKind, CheckResult, RATIO_MARGIN};

/// Largest relative spread of a ratio column across a dimension sweep.
pub const SWEEP_FLATNESS_TOL: f64 = 1e-6;
/// Equivalence discrepancy allowed per squared grid spacing.
pub const EQUIVALENCE_FACTOR: f64 = 5.0;

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success = 0,
    CheckFailed = 1,
    ConfigError = 2,
    RunFailed = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Exit status for an error raised while running.
    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidDomain(_) | Error::DimensionMismatch { .. } => {
                Status::ConfigError
            }
            _ => Status::RunFailed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub status: Status,
    /// Names of the failed checks.
    pub failures: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Outcome {
    fn failed(e: &Error) -> Self {
        Self { status: Status::of_error(e), failures: vec![], artifacts: vec![], error: Some(e.to_string()) }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    command: Command,
    config_hash: &'a str,
    passed: bool,
    failures: Vec<String>,
    checks: &'a [CheckResult],
    result: T,
}

#[derive(Serialize)]
struct SolveOutput {
    report: SolveReport,
    /// Smallest, largest and mu-mean value of the discrete solution.
    u_min: f64,
    u_max: f64,
    u_mean: f64,
}

#[derive(Serialize)]
struct OracleOutput {
    x0: Vec<f64>,
    estimate: McEstimate,
    budget: f64,
    /// Solver value at `x0`, when the domain is solvable on a grid.
    reference: Option<f64>,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    manifest_version: u32,
    manifest_hash: &'a str,
    drift_constant: f64,
    solves: &'a [crate::verify::SolveRecord],
}

/// Runs `config` and writes its artifacts to `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Outcome {
    if let Err(e) = config.validate() {
        return Outcome::failed(&e);
    }
    match execute(config) {
        Ok((checks, artifacts)) => {
            let failures: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
            let status = if failures.is_empty() { Status::Success } else { Status::CheckFailed };
            Outcome { status, failures, artifacts, error: None }
        }
        Err(e) => Outcome::failed(&e),
    }
}

struct Writer<'a> {
    config: &'a ExperimentConfig,
    hash: String,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_artifact(&self.config.output_dir, name, contents)?;
        self.written.push(self.config.output_dir.join(name));
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
        let text = to_csv(&Provenance::new(self.hash.clone()), header, rows)?;
        self.write(name, &text)
    }

    fn checks(&mut self, checks: &[CheckResult]) -> Result<()> {
        let rows: Vec<Vec<Cell>> = checks
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
        self.csv("checks.csv", &["name", "kind", "lhs", "rhs", "residual_or_slack", "tolerance", "pass"], &rows)
    }

    fn envelope<T: Serialize>(&mut self, checks: &[CheckResult], result: T) -> Result<()> {
        let failures: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        let env = Envelope {
            version: VERSION,
            command: self.config.command,
            config_hash: &self.hash,
            passed: failures.is_empty(),
            failures,
            checks,
            result,
        };
        let text = to_json(&env)?;
        self.write("report.json", &text)
    }
}

fn execute(config: &ExperimentConfig) -> Result<(Vec<CheckResult>, Vec<PathBuf>)> {
    let mut w = Writer { config, hash: config.hash(), written: vec![] };
    let checks = match config.command {
        Command::Solve => run_solve(&mut w)?,
        Command::Verify => run_verify(&mut w)?,
        Command::Sweep => run_sweep(&mut w)?,
        Command::Equivalence => run_equivalence(&mut w)?,
        Command::Oracle => run_oracle(&mut w)?,
    };
    w.checks(&checks)?;
    Ok((checks, w.written))
}

fn is_centered_ball(domain: &ConvexDomain) -> bool {
    matches!(domain.kind(), DomainKind::Ball { center, .. } if center.len() >= 2 && center.iter().all(|c| *c == 0.0))
}

/// Rejects right-hand sides that are not rotation invariant on a centered ball.
fn check_radial(rhs: &Analytic, dim: usize, radius: f64) -> Result<()> {
    let mut dirs: Vec<Vec<f64>> = (0..dim)
        .map(|k| {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            e
        })
        .collect();
    dirs.push(vec![1.0 / (dim as f64).sqrt(); dim]);
    dirs.push((0..dim).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / (dim as f64).sqrt()).collect());
    for s in [0.0, 0.3, 0.7, 1.0] {
        let r = s * radius;
        let at = |d: &Vec<f64>| rhs.value(&d.iter().map(|v| v * r).collect::<Vec<_>>());
        let v0 = at(&dirs[0]);
        if dirs.iter().any(|d| (at(d) - v0).abs() > 1e-12 * (1.0 + v0.abs())) {
            return Err(Error::Unsupported("balls in two or more dimensions need a radial right-hand side".into()));
        }
    }
    Ok(())
}

/// Solves on any supported domain: radially on centered balls, on a tensor grid otherwise.
fn solve_domain(config: &ExperimentConfig, grid: &GridSpec) -> Result<(GridFunction, SolveReport)> {
    let domain = &config.domain;
    let rhs = &config.rhs;
    if is_centered_ball(domain) {
        let DomainKind::Ball { radius, .. } = domain.kind() else { unreachable!() };
        check_radial(rhs, domain.dim(), *radius)?;
        let n = domain.dim();
        let f = |r: f64| {
            let mut x = vec![0.0; n];
            x[0] = r;
            rhs.value(&x)
        };
        radial_solve(domain, &f, config.lambda, n, config.radial_nodes)
    } else {
        let f = |x: &[f64]| rhs.value(x);
        solve(domain, &f, config.lambda, grid)
    }
}

fn solve_row(rep: &SolveReport) -> (Vec<&'static str>, Vec<Cell>) {
    let header = vec![
        "lambda", "l2_u", "l2_grad", "hs_hess", "l2_f", "drift_norm", "flux_norm", "cg_iterations", "cg_residual", "r1",
        "r2", "r3", "w22_ratio", "nodes", "spacing",
    ];
    let row = vec![
        rep.lambda.into(),
        rep.l2_u.into(),
        rep.l2_grad.into(),
        rep.hs_hess.into(),
        rep.l2_f.into(),
        rep.drift_norm.into(),
        rep.flux_norm.into(),
        rep.cg_iterations.into(),
        rep.cg_residual.into(),
        rep.r1.into(),
        rep.r2.into(),
        rep.r3.into(),
        rep.w22_ratio.into(),
        rep.nodes.into(),
        rep.spacing.into(),
    ];
    (header, row)
}

fn run_solve(w: &mut Writer) -> Result<Vec<CheckResult>> {
    let (u, rep) = solve_domain(w.config, &w.config.grid)?;
    let checks = if rep.l2_f > 0.0 { apriori_checks("solve", &rep) } else { vec![] };
    let mass = u.grid.masses();
    let total: f64 = mass.iter().sum();
    let out = SolveOutput {
        report: rep,
        u_min: u.values.iter().cloned().fold(f64::INFINITY, f64::min),
        u_max: u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        u_mean: mass.iter().zip(&u.values).map(|(m, v)| m * v).sum::<f64>() / total,
    };
    match w.config.format {
        Format::Json => w.envelope(&checks, out)?,
        Format::Csv => {
            let (mut header, mut row) = solve_row(&rep);
            header.extend(["u_min", "u_max", "u_mean"]);
            row.extend([out.u_min.into(), out.u_max.into(), out.u_mean.into()]);
            w.csv("report.csv", &header, &[row])?;
        }
    }
    Ok(checks)
}

fn run_verify(w: &mut Writer) -> Result<Vec<CheckResult>> {
    let mut manifest = default_manifest();
    if w.config.grid.spacing != GridSpec::default().spacing {
        manifest = manifest.with_spacing(w.config.grid.spacing);
    }
    let battery = run_battery(&manifest, &w.hash)?;
    match w.config.format {
        Format::Json => w.envelope(
            &battery.checks,
            VerifyOutput {
                manifest_version: battery.manifest_version,
                manifest_hash: &battery.manifest_hash,
                drift_constant: battery.drift_constant,
                solves: &battery.solves,
            },
        )?,
        Format::Csv => {
            let mut header = vec!["name"];
            let mut rows = vec![];
            for rec in &battery.solves {
                let (h, mut row) = solve_row(&rec.report);
                if header.len() == 1 {
                    header.extend(h);
                }
                row.insert(0, rec.name.clone().into());
                rows.push(row);
            }
            w.csv("report.csv", &header, &rows)?;
        }
    }
    Ok(battery.checks)
}

fn run_sweep(w: &mut Writer) -> Result<Vec<CheckResult>> {
    let cfg = w.config;
    let problem = SweepProblem {
        base: cfg.domain.clone(),
        rhs: cfg.rhs.clone(),
        grid: GridSpec { free_axis: FreeAxis::Hermite { modes: cfg.sweep.modes }, ..cfg.grid },
        record_timing: cfg.sweep.record_timing,
    };
    let mut rows: Vec<SweepRow> = vec![];
    let mut checks = vec![];
    for lam in cfg.sweep_lambdas() {
        let block = dimension_sweep(&problem, &cfg.sweep.dims, lam)?;
        let spread = sweep_spread(&block);
        for (tag, s) in ["r1", "r2", "r3", "w22"].iter().zip(spread) {
            checks.push(CheckResult::new(
                format!("sweep_flat_{tag}/lambda={lam}"),
                CheckKind::Bound,
                s,
                SWEEP_FLATNESS_TOL,
                s,
                SWEEP_FLATNESS_TOL,
            ));
        }
        for row in &block {
            for (tag, r) in [("r1", row.r1), ("r2", row.r2), ("r3", row.r3), ("w22", row.w22_ratio)] {
                let name = format!("apriori_{tag}/n={}/lambda={lam}", row.n);
                checks.push(CheckResult::new(name, CheckKind::Inequality, r, 1.0, 1.0 - r, RATIO_MARGIN));
            }
        }
        rows.extend(block);
    }
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.into(),
                r.lambda.into(),
                r.r1.into(),
                r.r2.into(),
                r.r3.into(),
                r.w22_ratio.into(),
                r.cg_iterations.into(),
                r.wall_time_ms.into(),
            ]
        })
        .collect();
    w.csv("sweep.csv", &["n", "lambda", "r1", "r2", "r3", "w22_ratio", "cg_iterations", "wall_time_ms"], &table)?;
    if cfg.format == Format::Json {
        w.envelope(&checks, &rows)?;
    }
    Ok(checks)
}

fn run_equivalence(w: &mut Writer) -> Result<Vec<CheckResult>> {
    let cfg = w.config;
    let f = |x: &[f64]| cfg.rhs.value(x);
    let direct_grid = GridSpec { free_axis: FreeAxis::Hermite { modes: cfg.equivalence.modes }, ..cfg.grid };
    let rep: EquivalenceReport =
        cylinder_equivalence(&cfg.domain, &f, cfg.lambda, cfg.equivalence.extra_dims, &cfg.grid, &direct_grid)?;
    let bound = EQUIVALENCE_FACTOR * rep.coarse_spacing * rep.coarse_spacing;
    let checks = vec![CheckResult::new("equivalence_l2", CheckKind::Bound, rep.l2_discrepancy, bound, rep.l2_discrepancy, bound)];
    match cfg.format {
        Format::Json => w.envelope(&checks, &rep)?,
        Format::Csv => w.csv(
            "report.csv",
            &["l2_discrepancy", "coarse_spacing", "clamped_points", "base_w22_ratio", "direct_w22_ratio"],
            &[vec![
                rep.l2_discrepancy.into(),
                rep.coarse_spacing.into(),
                rep.clamped_points.into(),
                rep.base.w22_ratio.into(),
                rep.direct.w22_ratio.into(),
            ]],
        )?,
    }
    Ok(checks)
}

/// Grid solution at `x0`, or `None` when the domain has no grid solver.
fn reference_value(cfg: &ExperimentConfig, x0: &[f64]) -> Result<Option<f64>> {
    match solve_domain(cfg, &cfg.grid) {
        Ok((u, _)) => Ok(Some(Interpolant::new(&u, &cfg.domain)?.eval(x0).0)),
        Err(Error::Unsupported(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_oracle(w: &mut Writer) -> Result<Vec<CheckResult>> {
    let cfg = w.config;
    let o = &cfg.oracle;
    let x0 = o.x0.clone().unwrap_or_else(|| vec![0.0; cfg.domain.dim()]);
    if !cfg.domain.contains(&x0) {
        return Err(Error::Config(format!("oracle x0 {x0:?} is not inside the domain")));
    }
    let t_max = o.t_max.unwrap_or(MIN_DISCOUNT_HORIZON / cfg.lambda);
    let f = |x: &[f64]| cfg.rhs.value(x);
    let estimate = feynman_kac_with(o.reflection, &cfg.domain, &f, cfg.lambda, &x0, o.n_paths, o.dt, t_max, cfg.seed)?;
    let budget = estimate.agreement_budget(&x0);
    let reference = reference_value(cfg, &x0)?;
    let checks: Vec<CheckResult> = reference
        .map(|r| CheckResult::new("oracle_agreement", CheckKind::Residual, estimate.value, r, estimate.value - r, budget))
        .into_iter()
        .collect();
    let out = OracleOutput { x0, estimate, budget, reference };
    match cfg.format {
        Format::Json => w.envelope(&checks, &out)?,
        Format::Csv => w.csv(
            "report.csv",
            &["value", "std_error", "n_paths", "dt", "t_max", "budget", "reference"],
            &[vec![
                estimate.value.into(),
                estimate.std_error.into(),
                estimate.n_paths.into(),
                estimate.dt.into(),
                estimate.t_max.into(),
                budget.into(),
                reference.map_or(Cell::Text(String::new()), Cell::Float),
            ]],
        )?,
    }
    Ok(checks)
}
