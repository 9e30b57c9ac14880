//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always printed.

use std::time::{Duration, Instant};

use ouneumann::config::{Command, ExperimentConfig};
use ouneumann::cylinder::{cylinder_equivalence, dimension_sweep, sweep_spread, Interpolant, SweepProblem};
use ouneumann::oracle::feynman_kac;
use ouneumann::run::{run, Status};
use ouneumann::solver::{radial_solve, solve, FreeAxis, GridFunction, GridSpec};
use ouneumann::verify::{default_manifest, run_battery, BatteryReport, CheckResult, SolverChoice, BATTERY_LAMBDAS};
use ouneumann::domain::DomainKind;
use ouneumann::{Analytic, ConvexDomain};

struct Verdict {
    pass: bool,
    summary: String,
}

fn verdict(pass: bool, summary: String) -> Verdict {
    Verdict { pass, summary }
}

fn slab1() -> ConvexDomain {
    ConvexDomain::slab(vec![1.0], 1.0).unwrap()
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn observed_orders(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn checks_with<'a>(battery: &'a BatteryReport, prefix: &str) -> Vec<&'a CheckResult> {
    battery.checks.iter().filter(|c| c.name.starts_with(prefix)).collect()
}

fn all_pass(checks: &[&CheckResult]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.pass)
}

fn worst_value(checks: &[&CheckResult], get: fn(&CheckResult) -> f64) -> f64 {
    checks.iter().map(|c| get(c)).fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_1() -> Verdict {
    let u_exact = |x: f64| x.powi(3) - 3.0 * x;
    let f = |x: &[f64]| 4.0 * x[0].powi(3) - 12.0 * x[0];
    let start = Instant::now();
    let mut errors = vec![];
    for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
        let (u, _) = solve(&slab1(), &f, 1.0, &GridSpec::with_spacing(h)).unwrap();
        let err = (0..u.values.len()).map(|i| (u.values[i] - u_exact(u.grid.node(i)[0])).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    let elapsed = start.elapsed();
    let orders = observed_orders(&errors);
    let pass = orders.iter().all(|&p| p >= 1.9) && elapsed < Duration::from_secs(1);
    verdict(pass, format!("max errors {}, orders {orders:.3?}, {elapsed:.2?}", sci(&errors)))
}

fn criterion_2(battery: &BatteryReport) -> Verdict {
    let r1 = checks_with(battery, "apriori_r1/");
    let r2 = checks_with(battery, "apriori_r2/");
    let constants = checks_with(battery, "constant_attains_r1/");
    let cases = battery.solves.len();
    let pass = cases >= 20 && all_pass(&r1) && all_pass(&r2) && all_pass(&constants);
    let worst_const = constants.iter().map(|c| c.residual_or_slack.abs()).fold(0.0, f64::max);
    verdict(
        pass,
        format!(
            "{cases} cases, max r1 {:.4}, max r2 {:.4}, constant-data |r1 - 1| <= {worst_const:.1e} over {} cases",
            worst_value(&r1, |c| c.lhs),
            worst_value(&r2, |c| c.lhs),
            constants.len()
        ),
    )
}

fn criterion_3(battery: &BatteryReport) -> Verdict {
    let r3 = checks_with(battery, "apriori_r3/");
    verdict(all_pass(&r3), format!("max r3 {:.4} over {} cases", worst_value(&r3, |c| c.lhs), r3.len()))
}

fn criterion_4(battery: &BatteryReport) -> Verdict {
    let w22 = checks_with(battery, "apriori_w22/");
    let lambdas_covered = BATTERY_LAMBDAS
        .iter()
        .all(|lam| battery.solves.iter().any(|s| s.report.lambda == *lam));
    let start = Instant::now();
    let half = ConvexDomain::half_space(vec![1.0], 0.0).unwrap();
    let grid = GridSpec { spacing: 1.0 / 32.0, free_axis: FreeAxis::Hermite { modes: 4 }, truncation: 8.0 };
    let profiles = [
        Analytic::axis_poly(0, &[-0.5, 0.0, 1.0]),
        Analytic::bump(&[-0.3], 0.7, 1.0),
        Analytic::Sum { terms: vec![Analytic::constant(1.0), Analytic::axis_poly(0, &[0.0, 1.0])] },
    ];
    let mut worst_spread: f64 = 0.0;
    let mut worst_w22: f64 = 0.0;
    let mut sweep_ok = true;
    for rhs in profiles {
        let problem = SweepProblem { base: half.clone(), rhs, grid, record_timing: false };
        for lam in BATTERY_LAMBDAS {
            match dimension_sweep(&problem, &[1, 2, 3, 4, 5], lam) {
                Ok(rows) => {
                    worst_spread = sweep_spread(&rows).into_iter().fold(worst_spread, f64::max);
                    worst_w22 = rows.iter().map(|r| r.w22_ratio).fold(worst_w22, f64::max);
                }
                Err(e) => {
                    eprintln!("sweep failed: {e}");
                    sweep_ok = false;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = all_pass(&w22)
        && lambdas_covered
        && sweep_ok
        && worst_spread <= 1e-6
        && worst_w22 <= 1.05
        && elapsed < Duration::from_secs(120);
    verdict(
        pass,
        format!(
            "battery max w22 {:.4}; sweep n=1..5 x lambda {BATTERY_LAMBDAS:?} x 3 profiles: spread {worst_spread:.2e}, max w22 {worst_w22:.4}, {elapsed:.2?}",
            worst_value(&w22, |c| c.lhs)
        ),
    )
}

fn criterion_5() -> Verdict {
    let h = 1.0 / 64.0;
    let base = GridSpec::with_spacing(h);
    let direct = GridSpec { spacing: h, free_axis: FreeAxis::Hermite { modes: 6 }, truncation: 8.0 };
    let cubic = |x: &[f64]| 4.0 * x[0].powi(3) - 12.0 * x[0];
    let rep = cylinder_equivalence(&slab1(), &cubic, 1.0, 1, &base, &direct).unwrap();
    let one = cylinder_equivalence(&slab1(), &|_: &[f64]| 1.0, 1.0, 1, &base, &direct).unwrap();
    let bound = 5.0 * h * h;
    let pass = rep.l2_discrepancy <= bound && one.l2_discrepancy <= 1e-12;
    verdict(
        pass,
        format!(
            "slab x R discrepancy {:.3e} <= 5h^2 = {bound:.3e}; f = 1 discrepancy {:.1e}",
            rep.l2_discrepancy, one.l2_discrepancy
        ),
    )
}

fn criterion_6() -> Verdict {
    let manifest = default_manifest();
    let cases = ["halfspace_quadratic/lambda=1", "slab_cubic/lambda=1", "ball1d_bump/lambda=1"];
    let spacings = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let mut pass = true;
    let mut lines = vec![];
    for name in cases {
        let case = manifest.solves.iter().find(|c| c.name == name).expect("battery case");
        let SolverChoice::Tensor { grid } = case.solver else { panic!("{name} is not a tensor case") };
        let fluxes: Vec<f64> = spacings
            .iter()
            .map(|&h| {
                let mut c = case.clone();
                c.solver = SolverChoice::Tensor { grid: GridSpec { spacing: h, ..grid } };
                c.run().unwrap().flux_norm
            })
            .collect();
        let orders = observed_orders(&fluxes);
        pass &= orders.iter().all(|&p| p >= 1.0) && *fluxes.last().unwrap() <= 1e-3;
        lines.push(format!("{name}: flux {} orders {orders:.2?}", sci(&fluxes)));
    }
    verdict(pass, lines.join("; "))
}

fn criterion_7(battery: &BatteryReport) -> Verdict {
    let c = checks_with(battery, "convexity/disk_saddle");
    let pass = c.len() == 1 && c[0].pass && c[0].lhs <= 1e-8 && c[0].details.get("nodes") == Some(&256.0);
    verdict(pass, format!("max boundary value {:.3e} at {:?} nodes", c[0].lhs, c[0].details.get("nodes")))
}

fn criterion_8(battery: &BatteryReport) -> Verdict {
    let half = checks_with(battery, "ibp/halfspace_1d_constant");
    let disk = checks_with(battery, "ibp/disk_x1_x2");
    let (rh, rd) = (half[0].residual_or_slack.abs(), disk[0].residual_or_slack.abs());
    verdict(rh <= 1e-10 && rd <= 1e-6, format!("half-line residual {rh:.2e}, disk residual {rd:.2e}"))
}

fn criterion_9(battery: &BatteryReport) -> Verdict {
    let ls = checks_with(battery, "logsob/");
    let slack = ls.iter().map(|c| c.residual_or_slack).fold(f64::INFINITY, f64::min);
    let literal: Vec<String> =
        ls.iter().map(|c| format!("{}={:.3e}", &c.name[7..], c.details["literal_slack"])).collect();
    let pass = ls.len() >= 5 && ls.iter().all(|c| c.residual_or_slack >= -1e-8);
    verdict(pass, format!("min normalized slack {slack:.3e} over {} cases; literal slack (recorded) {}", ls.len(), literal.join(", ")))
}

fn interpolate(u: &GridFunction, domain: &ConvexDomain, x0: &[f64]) -> f64 {
    Interpolant::new(u, domain).unwrap().eval(x0).0
}

struct OracleCase {
    label: &'static str,
    domain: ConvexDomain,
    rhs: fn(&[f64]) -> f64,
    lambda: f64,
    x0: Vec<f64>,
    seed: u64,
}

fn solver_reference(case: &OracleCase) -> f64 {
    let rhs = case.rhs;
    if case.domain.dim() == 2 && matches!(case.domain.kind(), DomainKind::Ball { .. }) {
        let (u, _) = radial_solve(&case.domain, &|r: f64| rhs(&[r, 0.0]), case.lambda, 2, 513).unwrap();
        return interpolate(&u, &case.domain, &case.x0);
    }
    let spec = if case.domain.dim() == 1 {
        GridSpec::with_spacing(1.0 / 512.0)
    } else {
        GridSpec { spacing: 1.0 / 256.0, free_axis: FreeAxis::Hermite { modes: 8 }, truncation: 8.0 }
    };
    let (u, _) = solve(&case.domain, &rhs, case.lambda, &spec).unwrap();
    interpolate(&u, &case.domain, &case.x0)
}

fn criterion_10() -> Verdict {
    let s = 0.5f64.sqrt();
    let cases = [
        OracleCase {
            label: "half-line x^2",
            domain: ConvexDomain::half_space(vec![1.0], 0.0).unwrap(),
            rhs: |x| x[0] * x[0],
            lambda: 1.0,
            x0: vec![-1.0],
            seed: 1,
        },
        OracleCase {
            label: "slab cubic",
            domain: slab1(),
            rhs: |x| 4.0 * x[0].powi(3) - 12.0 * x[0],
            lambda: 1.0,
            x0: vec![0.5],
            seed: 2,
        },
        OracleCase {
            label: "interval bump",
            domain: ConvexDomain::ball(vec![0.5], 1.0).unwrap(),
            rhs: |x| (-(x[0] - 1.0).powi(2) / 0.5).exp(),
            lambda: 2.0,
            x0: vec![0.0],
            seed: 3,
        },
        OracleCase {
            label: "disk radial quartic",
            domain: ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap(),
            rhs: |x| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                1.25 * r2 * r2 - 5.5 * r2 + 2.0
            },
            lambda: 1.0,
            x0: vec![0.5, 0.0],
            seed: 4,
        },
        OracleCase {
            label: "rotated half-plane",
            domain: ConvexDomain::half_space(vec![s, s], 0.3).unwrap(),
            rhs: |x| x[0] * x[0] + 0.5 * x[1],
            lambda: 2.0,
            x0: vec![-0.4, 0.2],
            seed: 5,
        },
    ];
    let mut pass = true;
    let mut lines = vec![];
    for case in &cases {
        let reference = solver_reference(case);
        let start = Instant::now();
        let t_max = 20.0 / case.lambda;
        let est = feynman_kac(&case.domain, &case.rhs, case.lambda, &case.x0, 100_000, 1e-3, t_max, case.seed).unwrap();
        let elapsed = start.elapsed();
        let diff = est.value - reference;
        let budget = est.agreement_budget(&case.x0);
        let ok = diff.abs() <= budget && elapsed < Duration::from_secs(120);
        pass &= ok;
        lines.push(format!("{}: |diff| {:.2e} / budget {:.2e} ({:.1?})", case.label, diff.abs(), budget, elapsed));
    }
    verdict(pass, lines.join("; "))
}

fn criterion_11() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let mut outputs = vec![];
    for run_dir in ["a", "b"] {
        let cfg = ExperimentConfig { command: Command::Verify, seed: 7, output_dir: root.path().join(run_dir), ..Default::default() };
        let out = run(&cfg);
        if out.status != Status::Success {
            return verdict(false, format!("verify run failed: {:?}", out.failures));
        }
        let mut files: Vec<(String, Vec<u8>)> = out
            .artifacts
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    let pass = outputs[0] == outputs[1] && names.len() >= 2;
    verdict(pass, format!("artifacts {names:?} byte-identical: {}", outputs[0] == outputs[1]))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn main() {
    let start = Instant::now();
    let battery = run_battery(&default_manifest(), "acceptance").expect("battery runs");
    let criteria: Vec<Criterion> = vec![
        ("manufactured-solution convergence", Box::new(criterion_1)),
        ("a-priori r1, r2", Box::new(|| criterion_2(&battery))),
        ("second-derivative bound r3", Box::new(|| criterion_3(&battery))),
        ("dimension-free W22 constant", Box::new(|| criterion_4(&battery))),
        ("solve-and-lift equivalence", Box::new(criterion_5)),
        ("Neumann trace", Box::new(criterion_6)),
        ("convexity lemma", Box::new(|| criterion_7(&battery))),
        ("integration by parts", Box::new(|| criterion_8(&battery))),
        ("log-Sobolev", Box::new(|| criterion_9(&battery))),
        ("oracle agreement", Box::new(criterion_10)),
        ("determinism", Box::new(criterion_11)),
    ];
    // Optional criterion numbers on the command line select a subset.
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !selected.is_empty() && !selected.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("criterion {:>2} {}: {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.summary);
    }
    println!("acceptance: {} passed, {failed} failed ({:.1?})", ran - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
