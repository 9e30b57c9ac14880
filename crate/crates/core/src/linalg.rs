//! Small dense helpers on `f64` slices.

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Orthogonal symmetric matrix whose first row (and column) is the unit vector `a`.
///
/// Householder reflection mapping `e1` onto `a`; the identity when `a == e1`.
pub fn frame_from_direction(a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut v: Vec<f64> = a.to_vec();
    v[0] -= 1.0;
    let vv = norm_sq(&v);
    let mut h = DMatrix::identity(n, n);
    if vv < 1e-30 {
        return h;
    }
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= 2.0 * v[i] * v[j] / vv;
        }
    }
    h
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Standard normal density in one dimension.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard Gaussian density `(2 pi)^{-n/2} exp(-|x|^2 / 2)` in `x.len()` dimensions.
pub fn gaussian_density(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    (-0.5 * norm_sq(x)).exp() * (2.0 * std::f64::consts::PI).powf(-0.5 * n)
}
