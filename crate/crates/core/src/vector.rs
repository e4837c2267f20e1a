//! Dense parameter vectors and Euclidean-ball projection.

use std::ops::{Deref, DerefMut};

use crate::{Error, Result, Scalar};

/// Dense vector of model coefficients. The length is fixed once created.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector<S>(Vec<S>);

impl<S: Scalar> ParameterVector<S> {
    pub fn zeros(dim: usize) -> Self {
        ParameterVector(vec![S::zero(); dim])
    }

    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<S>) -> Result<Self> {
        let v = ParameterVector(values);
        v.check_finite("parameter vector")?;
        Ok(v)
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| S::lit(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn dot(&self, other: &Self) -> S {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> S {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Self) -> S {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<S>()
            .sqrt()
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: S, other: &[S]) {
        for (a, &b) in self.0.iter_mut().zip(other) {
            *a += scale * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        ParameterVector(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    pub fn scaled(&self, factor: S) -> Self {
        ParameterVector(self.0.iter().map(|&a| a * factor).collect())
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }
}

impl<S> Deref for ParameterVector<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

impl<S> DerefMut for ParameterVector<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.0
    }
}

impl<S> From<ParameterVector<S>> for Vec<S> {
    fn from(v: ParameterVector<S>) -> Self {
        v.0
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Closed Euclidean ball, or the whole space.
#[derive(Debug, Clone, PartialEq)]
pub enum BallDomain<S> {
    Unbounded,
    Ball {
        center: ParameterVector<S>,
        radius: S,
    },
}

impl<S: Scalar> BallDomain<S> {
    /// Ball of positive `radius` around `center`.
    pub fn ball(center: ParameterVector<S>, radius: S) -> Result<Self> {
        center.check_finite("ball center")?;
        if !(radius.is_finite() && radius > S::zero()) {
            return Err(Error::invalid(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(BallDomain::Ball { center, radius })
    }

    /// Ball of `radius` around the origin of dimension `dim`.
    pub fn centered(dim: usize, radius: S) -> Result<Self> {
        Self::ball(ParameterVector::zeros(dim), radius)
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, BallDomain::Ball { .. })
    }

    pub fn radius(&self) -> Option<S> {
        match self {
            BallDomain::Unbounded => None,
            BallDomain::Ball { radius, .. } => Some(*radius),
        }
    }

    pub fn center(&self) -> Option<&ParameterVector<S>> {
        match self {
            BallDomain::Unbounded => None,
            BallDomain::Ball { center, .. } => Some(center),
        }
    }

    /// Largest norm of any point in the domain, `None` when unbounded.
    pub fn max_norm(&self) -> Option<S> {
        match self {
            BallDomain::Unbounded => None,
            BallDomain::Ball { center, radius } => Some(center.norm() + *radius),
        }
    }

    /// Membership test with relative slack `tol` on the radius.
    pub fn contains(&self, x: &[S], tol: S) -> bool {
        match self {
            BallDomain::Unbounded => true,
            BallDomain::Ball { center, radius } => dist(x, center) <= *radius * (S::one() + tol),
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, x: &ParameterVector<S>) -> Result<ParameterVector<S>> {
        let mut out = x.clone();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    /// In-place Euclidean projection. Points already inside are untouched.
    pub fn project_in_place(&self, x: &mut [S]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection input"));
        }
        if let BallDomain::Ball { center, radius } = self {
            if center.dim() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: center.dim(),
                    found: x.len(),
                });
            }
            let d = dist(x, center);
            // points within a few ulps of the sphere count as inside, which
            // keeps projection exactly idempotent
            if d > *radius * (S::one() + S::lit(8.0) * S::epsilon()) {
                let scale = *radius / d;
                for (xi, &ci) in x.iter_mut().zip(center.iter()) {
                    *xi = ci + scale * (*xi - ci);
                }
            }
        }
        Ok(())
    }
}

fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<S>()
        .sqrt()
}

/// Projects `x` onto `domain`.
pub fn project_ball<S: Scalar>(
    x: &ParameterVector<S>,
    domain: &BallDomain<S>,
) -> Result<ParameterVector<S>> {
    domain.project(x)
}
