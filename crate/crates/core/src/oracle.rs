//! Feynman-Kac estimates `u(x0) = E int_0^inf e^{-lam t} f(X_t) dt` for the
//! OU diffusion `dX = -X dt + sqrt(2) dW` reflected into the domain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ConvexDomain, BOUNDARY_TOL};
use crate::error::{Error, Result};
use crate::linalg::compensated_sum;

/// Smallest accepted `lam * t_max`; the discarded tail is below `e^{-20}`.
pub const MIN_DISCOUNT_HORIZON: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    /// Sample standard deviation over paths divided by `sqrt(n_paths)`.
    pub std_error: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
}

impl McEstimate {
    /// `3 std_error + 5 dt (1 + |x0|^2)`.
    pub fn agreement_budget(&self, x0: &[f64]) -> f64 {
        3.0 * self.std_error + 5.0 * self.dt * (1.0 + crate::linalg::norm_sq(x0))
    }
}

/// Euler-Maruyama step `x' = x - x dt + sqrt(2 dt) noise` followed by projection onto the closure.
pub fn reflected_ou_step(x: &[f64], dt: f64, noise: &[f64], domain: &ConvexDomain) -> Vec<f64> {
    let mut y = x.to_vec();
    step_in_place(&mut y, dt, noise, domain);
    y
}

/// Euler-Maruyama step followed by mirror reflection `x' -> 2 P(x') - x'` through the
/// boundary, with a projection as safeguard when the mirror image is still outside.
pub fn symmetrized_ou_step(x: &[f64], dt: f64, noise: &[f64], domain: &ConvexDomain) -> Vec<f64> {
    let mut y = x.to_vec();
    symmetrized_in_place(&mut y, dt, noise, domain);
    y
}

/// How paths are returned to the domain after each Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reflection {
    /// Projection onto the closure; weak error of order `sqrt(dt)` near the boundary.
    Projection,
    /// Mirror image through the boundary; weak order one for smooth convex domains.
    #[default]
    Symmetrized,
}

fn euler(x: &mut [f64], dt: f64, noise: &[f64]) {
    let s = (2.0 * dt).sqrt();
    for (xi, z) in x.iter_mut().zip(noise) {
        *xi += -*xi * dt + s * z;
    }
}

fn step_in_place(x: &mut [f64], dt: f64, noise: &[f64], domain: &ConvexDomain) {
    euler(x, dt, noise);
    domain.project_in_place(x);
}

fn symmetrized_in_place(x: &mut [f64], dt: f64, noise: &[f64], domain: &ConvexDomain) {
    euler(x, dt, noise);
    if domain.g_unchecked(x) > 0.0 {
        let p = domain.project_to_closure(x);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi = 2.0 * pi - *xi);
        domain.project_in_place(x);
    }
}

fn advance(scheme: Reflection, x: &mut [f64], dt: f64, noise: &[f64], domain: &ConvexDomain) {
    match scheme {
        Reflection::Projection => step_in_place(x, dt, noise, domain),
        Reflection::Symmetrized => symmetrized_in_place(x, dt, noise, domain),
    }
}

/// Generator for path `index`: the seed fixes the key, the path index the stream.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Estimates the solution of `lam u - L u = f` with Neumann conditions at `x0`,
/// using [`Reflection::Symmetrized`] paths.
///
/// `f` is held at the left end of each step while the discount is integrated
/// exactly; the last state carries the discounted tail beyond `t_max`.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac<F>(
    domain: &ConvexDomain,
    f: &F,
    lam: f64,
    x0: &[f64],
    n_paths: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    feynman_kac_with(Reflection::default(), domain, f, lam, x0, n_paths, dt, t_max, seed)
}

/// [`feynman_kac`] with an explicit reflection scheme.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_with<F>(
    scheme: Reflection,
    domain: &ConvexDomain,
    f: &F,
    lam: f64,
    x0: &[f64],
    n_paths: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lam}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if n_paths < 2 {
        return Err(Error::InvalidParameter("at least two paths are needed for a standard error".into()));
    }
    if x0.len() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), got: x0.len() });
    }
    if domain.g_unchecked(x0) > BOUNDARY_TOL {
        return Err(Error::Precondition("starting point lies outside the domain".into()));
    }
    if lam * t_max < MIN_DISCOUNT_HORIZON * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "lam * t_max = {} is below {MIN_DISCOUNT_HORIZON}",
            lam * t_max
        )));
    }
    let steps = (t_max / dt).round() as usize;
    let decay = (-lam * dt).exp();
    let step_weight = -(-lam * dt).exp_m1() / lam;
    let mut weights = Vec::with_capacity(steps + 1);
    let mut discount = 1.0;
    for _ in 0..steps {
        weights.push(discount * step_weight);
        discount *= decay;
    }
    weights.push(discount / lam);

    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut x = x0.to_vec();
            let mut noise = vec![0.0; x.len()];
            let mut acc = 0.0;
            for w in &weights[..steps] {
                acc += w * f(&x);
                noise.iter_mut().for_each(|z| *z = StandardNormal.sample(&mut rng));
                advance(scheme, &mut x, dt, &noise, domain);
            }
            acc + weights[steps] * f(&x)
        })
        .collect();
    let n = n_paths as f64;
    let mean = compensated_sum(samples.iter().copied()) / n;
    let var = compensated_sum(samples.iter().map(|s| (s - mean) * (s - mean))) / (n - 1.0);
    Ok(McEstimate { value: mean, std_error: (var / n).sqrt(), n_paths, dt, t_max: steps as f64 * dt })
}

/// Estimates at `dt, dt/2, ..., dt/2^(levels-1)` driven by the same Brownian paths:
/// the increments of a coarse step are sums of the finer increments it spans.
#[allow(clippy::too_many_arguments)]
pub fn dt_refinement<F>(
    scheme: Reflection,
    domain: &ConvexDomain,
    f: &F,
    lam: f64,
    x0: &[f64],
    n_paths: usize,
    dt: f64,
    levels: usize,
    t_max: f64,
    seed: u64,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    if levels == 0 || levels > 12 {
        return Err(Error::InvalidParameter(format!("levels must lie in 1..=12, got {levels}")));
    }
    // Validates the shared arguments once.
    feynman_kac(domain, f, lam, x0, 2, dt, t_max, seed)?;
    let fine_dt = dt / (1usize << (levels - 1)) as f64;
    let fine_steps = (t_max / dt).round() as usize * (1usize << (levels - 1));
    let dim = x0.len();
    let samples: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut xs = vec![x0.to_vec(); levels];
            let mut acc = vec![0.0; levels];
            let mut discount = vec![1.0; levels];
            let mut pending = vec![vec![0.0; dim]; levels];
            let mut noise = vec![0.0; dim];
            for step in 0..fine_steps {
                for lvl in 0..levels {
                    let stride = 1usize << (levels - 1 - lvl);
                    if step % stride == 0 {
                        let h = fine_dt * stride as f64;
                        acc[lvl] += discount[lvl] * -(-lam * h).exp_m1() / lam * f(&xs[lvl]);
                        discount[lvl] *= (-lam * h).exp();
                    }
                }
                let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                for lvl in 0..levels {
                    let stride = 1usize << (levels - 1 - lvl);
                    pending[lvl].iter_mut().zip(&z).for_each(|(a, b)| *a += b);
                    if (step + 1) % stride == 0 {
                        let scale = 1.0 / (stride as f64).sqrt();
                        noise.iter_mut().zip(&pending[lvl]).for_each(|(n, s)| *n = s * scale);
                        advance(scheme, &mut xs[lvl], fine_dt * stride as f64, &noise, domain);
                        pending[lvl].iter_mut().for_each(|a| *a = 0.0);
                    }
                }
            }
            (0..levels).map(|l| acc[l] + discount[l] / lam * f(&xs[l])).collect()
        })
        .collect();
    let n = n_paths as f64;
    Ok((0..levels)
        .map(|l| {
            let mean = compensated_sum(samples.iter().map(|s| s[l])) / n;
            let var = compensated_sum(samples.iter().map(|s| (s[l] - mean).powi(2))) / (n - 1.0);
            McEstimate {
                value: mean,
                std_error: (var / n).sqrt(),
                n_paths,
                dt: dt / (1usize << l) as f64,
                t_max: fine_steps as f64 * fine_dt,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn half_line() -> ConvexDomain {
        ConvexDomain::half_space(vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn zero_noise_step_contracts() {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let y = reflected_ou_step(&[0.5, -0.2], 1e-3, &[0.0, 0.0], &d);
        assert!((y[0] - 0.5 * 0.999).abs() < 1e-15 && (y[1] + 0.2 * 0.999).abs() < 1e-15);
        assert!(d.contains(&y));
    }

    #[test]
    fn outward_noise_lands_on_the_sphere() {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let y = reflected_ou_step(&[1.0, 0.0], 1e-2, &[3.0, 0.0], &d);
        assert!(d.g(&y).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mirror_step_reflects_the_overshoot() {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let dt: f64 = 1e-2;
        let z = 0.5 / (2.0 * dt).sqrt();
        // Euler lands at radius 1.49 on the x axis; the mirror image sits at 0.51.
        let y = symmetrized_ou_step(&[1.0, 0.0], dt, &[z, 0.0], &d);
        assert!((y[0] - 0.51).abs() < 1e-12 && y[1] == 0.0);
        let h = ConvexDomain::half_space(vec![1.0], 0.0).unwrap();
        assert_eq!(symmetrized_ou_step(&[-0.5], dt, &[0.0], &h), reflected_ou_step(&[-0.5], dt, &[0.0], &h));
    }

    #[test]
    fn step_variance_is_two_dt() {
        let d = ConvexDomain::whole_space(1).unwrap();
        let dt = 0.01;
        let x = 0.7;
        let mut rng = path_rng(7, 0);
        let m = 100_000;
        let inc: Vec<f64> = (0..m)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                reflected_ou_step(&[x], dt, &[z], &d)[0] - x * (1.0 - dt)
            })
            .collect();
        let mean = inc.iter().sum::<f64>() / m as f64;
        let var = inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        // Standard error of a Gaussian sample variance: var * sqrt(2 / (m - 1)).
        let se = 2.0 * dt * (2.0 / (m - 1) as f64).sqrt();
        assert!((var - 2.0 * dt).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn constant_data_gives_inverse_lambda() {
        for (d, x0) in [
            (half_line(), vec![-0.3]),
            (ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap(), vec![0.9, 0.0]),
            (ConvexDomain::whole_space(3).unwrap(), vec![1.0, 2.0, 3.0]),
        ] {
            let est = feynman_kac(&d, &|_: &[f64]| 1.0, 1.0, &x0, 200, 1e-2, 20.0, 3).unwrap();
            assert!((est.value - 1.0).abs() <= 3.0 * est.std_error + 1e-12);
        }
    }

    #[test]
    fn whole_line_quadratic_matches_closed_form() {
        // u = (x^2 + 2) / 3 solves u - u'' + x u' = x^2.
        let d = ConvexDomain::whole_space(1).unwrap();
        let est = feynman_kac(&d, &|x: &[f64]| x[0] * x[0], 1.0, &[0.0], 4000, 1e-2, 20.0, 11).unwrap();
        assert!((est.value - 2.0 / 3.0).abs() <= est.agreement_budget(&[0.0]), "{est:?}");
    }

    #[test]
    fn seeded_runs_are_identical() {
        let f = |x: &[f64]| x[0] * x[0];
        let a = feynman_kac(&half_line(), &f, 2.0, &[-1.0], 300, 1e-2, 10.0, 42).unwrap();
        let b = feynman_kac(&half_line(), &f, 2.0, &[-1.0], 300, 1e-2, 10.0, 42).unwrap();
        let c = feynman_kac(&half_line(), &f, 2.0, &[-1.0], 300, 1e-2, 10.0, 43).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn path_streams_do_not_depend_on_scheduling() {
        let first: f64 = path_rng(5, 17).sample(StandardNormal);
        let _: f64 = path_rng(5, 3).sample(StandardNormal);
        let again: f64 = path_rng(5, 17).sample(StandardNormal);
        assert_eq!(first, again);
    }

    #[test]
    fn step_refinement_shrinks_the_gap() {
        let f = |x: &[f64]| x[0] * x[0];
        let est = dt_refinement(Reflection::Projection, &half_line(), &f, 2.0, &[-0.2], 2000, 0.04, 4, 10.0, 9).unwrap();
        let gaps: Vec<f64> = est.windows(2).map(|w| (w[0].value - w[1].value).abs()).collect();
        assert!(gaps.windows(2).all(|g| g[1] < g[0]), "{gaps:?}");
        assert_eq!(est[3].dt, 0.005);
    }

    #[test]
    fn refinement_levels_match_single_level_runs_in_law() {
        let f = |x: &[f64]| x[0] * x[0];
        let coupled = dt_refinement(Reflection::Projection, &half_line(), &f, 2.0, &[-0.5], 4000, 0.02, 2, 10.0, 1).unwrap();
        let single = feynman_kac_with(Reflection::Projection, &half_line(), &f, 2.0, &[-0.5], 4000, 0.01, 10.0, 2).unwrap();
        let tol = 3.0 * (coupled[1].std_error.powi(2) + single.std_error.powi(2)).sqrt();
        assert!((coupled[1].value - single.value).abs() < tol);
    }

    #[test]
    fn rejects_invalid_input() {
        let f = |_: &[f64]| 1.0;
        assert!(feynman_kac(&half_line(), &f, 1.0, &[0.5], 10, 1e-2, 20.0, 0).is_err());
        assert!(feynman_kac(&half_line(), &f, 1.0, &[-0.5], 10, 1e-2, 10.0, 0).is_err());
        assert!(feynman_kac(&half_line(), &f, 0.0, &[-0.5], 10, 1e-2, 20.0, 0).is_err());
        assert!(feynman_kac(&half_line(), &f, 1.0, &[-0.5, 0.0], 10, 1e-2, 20.0, 0).is_err());
        assert!(feynman_kac(&half_line(), &f, 1.0, &[-0.5], 1, 1e-2, 20.0, 0).is_err());
    }
}
