//! Open convex sets `{x : g(x) < 0}` with smooth convex defining functions.
//!
//! Every supported kind has an analytic metric projection onto its closure,
//! which the reflected diffusion and all boundary queries rely on.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Tolerance on `|g|` for a point to count as a boundary point.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// Smallest admissible `|grad g|` on the boundary.
pub const MIN_GRADIENT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// `<a, x> < b`
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// `|x - c| < r`
    Ball { center: Vec<f64>, radius: f64 },
    /// `|<a, x>| < b`
    Slab { normal: Vec<f64>, half_width: f64 },
    /// `base x R^extra_dims`, the base acting on the leading coordinates.
    Cylinder { base: Box<ConvexDomain>, extra_dims: usize },
    WholeSpace { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainKind", into = "DomainKind")]
pub struct ConvexDomain {
    kind: DomainKind,
    dim: usize,
}

impl TryFrom<DomainKind> for ConvexDomain {
    type Error = Error;

    fn try_from(kind: DomainKind) -> Result<Self> {
        match kind {
            DomainKind::HalfSpace { normal, offset } => ConvexDomain::half_space(normal, offset),
            DomainKind::Ball { center, radius } => ConvexDomain::ball(center, radius),
            DomainKind::Slab { normal, half_width } => ConvexDomain::slab(normal, half_width),
            DomainKind::Cylinder { base, extra_dims } => ConvexDomain::cylinder(*base, extra_dims),
            DomainKind::WholeSpace { dim } => ConvexDomain::whole_space(dim),
        }
    }
}

impl From<ConvexDomain> for DomainKind {
    fn from(d: ConvexDomain) -> Self {
        d.kind
    }
}

fn check_unit(a: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidDomain("normal vector is empty".into()));
    }
    let len = norm(a);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDomain(format!("normal vector must have unit length, got {len}")));
    }
    Ok(())
}

/// How a domain decomposes into independent coordinate intervals after a rotation.
///
/// Produced for the kinds that tensor grids and tensor quadrature can resolve:
/// the defining direction becomes the first rotated axis, every other rotated
/// axis is unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisLayout {
    /// Orthogonal matrix `R`; rotated coordinates are `y = R x`, and `R` is symmetric.
    pub frame: DMatrix<f64>,
    /// Per rotated axis: `None` when unbounded, otherwise `(lo, hi)` with flags
    /// telling whether each end lies on the boundary of the domain.
    pub intervals: Vec<Option<Interval>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_is_boundary: bool,
    pub hi_is_boundary: bool,
}

impl ConvexDomain {
    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        check_unit(&normal)?;
        if !offset.is_finite() {
            return Err(Error::InvalidDomain("half-space offset must be finite".into()));
        }
        let dim = normal.len();
        Ok(Self { kind: DomainKind::HalfSpace { normal, offset }, dim })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidDomain("ball center is empty".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDomain(format!("ball radius must be positive, got {radius}")));
        }
        let dim = center.len();
        Ok(Self { kind: DomainKind::Ball { center, radius }, dim })
    }

    pub fn slab(normal: Vec<f64>, half_width: f64) -> Result<Self> {
        check_unit(&normal)?;
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "slab half-width must be positive, got {half_width}"
            )));
        }
        let dim = normal.len();
        Ok(Self { kind: DomainKind::Slab { normal, half_width }, dim })
    }

    pub fn cylinder(base: ConvexDomain, extra_dims: usize) -> Result<Self> {
        if extra_dims == 0 {
            return Err(Error::InvalidDomain("cylinder needs at least one extra dimension".into()));
        }
        let dim = base.dim + extra_dims;
        Ok(Self { kind: DomainKind::Cylinder { base: Box::new(base), extra_dims }, dim })
    }

    pub fn whole_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        Ok(Self { kind: DomainKind::WholeSpace { dim }, dim })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `false` only for the whole space.
    pub fn has_boundary(&self) -> bool {
        match &self.kind {
            DomainKind::WholeSpace { .. } => false,
            DomainKind::Cylinder { base, .. } => base.has_boundary(),
            _ => true,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn g(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.g_unchecked(x))
    }

    pub(crate) fn g_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::HalfSpace { normal, offset } => dot(normal, x) - offset,
            DomainKind::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
                d2 - radius * radius
            }
            DomainKind::Slab { normal, half_width } => {
                let t = dot(normal, x);
                t * t - half_width * half_width
            }
            DomainKind::Cylinder { base, .. } => base.g_unchecked(&x[..base.dim]),
            DomainKind::WholeSpace { .. } => -1.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.g_unchecked(x) < 0.0
    }

    pub fn grad_g(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.grad_g_unchecked(x))
    }

    pub(crate) fn grad_g_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DomainKind::HalfSpace { normal, .. } => normal.clone(),
            DomainKind::Ball { center, .. } => {
                x.iter().zip(center).map(|(xi, ci)| 2.0 * (xi - ci)).collect()
            }
            DomainKind::Slab { normal, .. } => {
                let t = dot(normal, x);
                normal.iter().map(|a| 2.0 * t * a).collect()
            }
            DomainKind::Cylinder { base, .. } => {
                let mut grad = base.grad_g_unchecked(&x[..base.dim]);
                grad.resize(self.dim, 0.0);
                grad
            }
            DomainKind::WholeSpace { dim } => vec![0.0; *dim],
        }
    }

    pub fn hess_g(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        Ok(self.hess_g_unchecked(x))
    }

    pub(crate) fn hess_g_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        match &self.kind {
            DomainKind::HalfSpace { .. } | DomainKind::WholeSpace { .. } => DMatrix::zeros(n, n),
            DomainKind::Ball { .. } => DMatrix::identity(n, n) * 2.0,
            DomainKind::Slab { normal, .. } => {
                DMatrix::from_fn(n, n, |i, j| 2.0 * normal[i] * normal[j])
            }
            DomainKind::Cylinder { base, .. } => {
                let q = base.dim;
                let hb = base.hess_g_unchecked(&x[..q]);
                let mut h = DMatrix::zeros(n, n);
                h.view_mut((0, 0), (q, q)).copy_from(&hb);
                h
            }
        }
    }

    /// Unit exterior normal `grad g / |grad g|` at a boundary point.
    pub fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let g = self.g_unchecked(x);
        if !self.has_boundary() || g.abs() > BOUNDARY_TOL {
            return Err(Error::NotOnBoundary { g });
        }
        let grad = self.grad_g_unchecked(x);
        let len = norm(&grad);
        if len < MIN_GRADIENT {
            return Err(Error::DegenerateGradient { norm: len });
        }
        Ok(grad.into_iter().map(|v| v / len).collect())
    }

    /// Euclidean projection onto the closed set `{g <= 0}`.
    ///
    /// Returns `x` unchanged when it already lies in the closure.
    pub fn project_to_closure(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.project_in_place(&mut y);
        y
    }

    /// In-place variant of [`project_to_closure`](Self::project_to_closure).
    pub fn project_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim, "dimension mismatch in projection");
        match &self.kind {
            DomainKind::HalfSpace { normal, offset } => {
                let t = dot(normal, x);
                if t > *offset {
                    let shift = offset - t;
                    x.iter_mut().zip(normal).for_each(|(xi, a)| *xi += shift * a);
                }
            }
            DomainKind::Slab { normal, half_width } => {
                let t = dot(normal, x);
                let clamped = t.clamp(-half_width, *half_width);
                if clamped != t {
                    let shift = clamped - t;
                    x.iter_mut().zip(normal).for_each(|(xi, a)| *xi += shift * a);
                }
            }
            DomainKind::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
                if d2 > radius * radius {
                    let scale = radius / d2.sqrt();
                    x.iter_mut()
                        .zip(center)
                        .for_each(|(xi, ci)| *xi = ci + (*xi - ci) * scale);
                }
            }
            DomainKind::Cylinder { base, .. } => base.project_in_place(&mut x[..base.dim]),
            DomainKind::WholeSpace { .. } => {}
        }
    }

    /// Rotated interval decomposition for tensor grids and tensor quadrature.
    ///
    /// Available for half-spaces, slabs, one-dimensional balls, the whole space
    /// and cylinders over those. `truncation` bounds the unbounded side of a
    /// half-space; unbounded axes are left as `None`.
    pub fn axis_layout(&self, truncation: f64) -> Result<AxisLayout> {
        let n = self.dim;
        match &self.kind {
            DomainKind::HalfSpace { normal, offset } => {
                if *offset <= -truncation {
                    return Err(Error::InvalidDomain(format!(
                        "half-space offset {offset} lies beyond the truncation box"
                    )));
                }
                let hi = offset.min(truncation);
                let mut intervals = vec![None; n];
                intervals[0] = Some(Interval {
                    lo: -truncation,
                    hi,
                    lo_is_boundary: false,
                    hi_is_boundary: *offset <= truncation,
                });
                Ok(AxisLayout { frame: crate::linalg::frame_from_direction(normal), intervals })
            }
            DomainKind::Slab { normal, half_width } => {
                let mut intervals = vec![None; n];
                intervals[0] = Some(Interval {
                    lo: -half_width,
                    hi: *half_width,
                    lo_is_boundary: true,
                    hi_is_boundary: true,
                });
                Ok(AxisLayout { frame: crate::linalg::frame_from_direction(normal), intervals })
            }
            DomainKind::Ball { center, radius } if n == 1 => Ok(AxisLayout {
                frame: DMatrix::identity(1, 1),
                intervals: vec![Some(Interval {
                    lo: center[0] - radius,
                    hi: center[0] + radius,
                    lo_is_boundary: true,
                    hi_is_boundary: true,
                })],
            }),
            DomainKind::Ball { .. } => Err(Error::Unsupported(format!(
                "a ball in dimension {n} has no axis decomposition"
            ))),
            DomainKind::WholeSpace { dim } => {
                Ok(AxisLayout { frame: DMatrix::identity(*dim, *dim), intervals: vec![None; *dim] })
            }
            DomainKind::Cylinder { base, extra_dims } => {
                let inner = base.axis_layout(truncation)?;
                let q = base.dim;
                let mut frame = DMatrix::identity(n, n);
                frame.view_mut((0, 0), (q, q)).copy_from(&inner.frame);
                let mut intervals = inner.intervals;
                intervals.extend(std::iter::repeat_n(None, *extra_dims));
                Ok(AxisLayout { frame, intervals })
            }
        }
    }

    /// Innermost non-cylinder domain and the number of stacked free dimensions.
    pub fn split_cylinder(&self) -> (&ConvexDomain, usize) {
        match &self.kind {
            DomainKind::Cylinder { base, extra_dims } => {
                let (inner, extra) = base.split_cylinder();
                (inner, extra + extra_dims)
            }
            _ => (self, 0),
        }
    }
}
