//! Per-sample losses, their regularity constants and the proximal wrapper.
//!
//! Linear models use `m = a^T x` and a label `b`:
//!
//! | kind           | data term                  |
//! |----------------|----------------------------|
//! | hinge          | `max(0, 1 - b m)`          |
//! | logistic       | `ln(1 + exp(-b m))`        |
//! | least squares  | `(m - b)^2 / 2`            |
//!
//! An optional ridge term `(l2/2)||x||^2` is added to every kind, so a model
//! with `l2 > 0` is exactly `l2`-strongly convex.
//!
//! `PlSine` is coordinate-wise `x^2 + 3 sin^2 x` plus the linear noise term
//! `<a, x>`; it is 4-weakly convex, 8-smooth and satisfies the PL inequality
//! with modulus 1/32 when the noise averages to zero.

use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Sample, SparseVector};
use crate::sampling::rng_from_seed;
use crate::vector::{BallDomain, ParameterVector};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Hinge,
    Logistic,
    LeastSquares,
    PlSine,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
            LossKind::LeastSquares => "least-squares",
            LossKind::PlSine => "pl-sine",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, LossKind::Hinge)
    }

    pub fn is_convex(self) -> bool {
        !matches!(self, LossKind::PlSine)
    }
}

/// Regularity constants. `None` means unknown; bound evaluators needing an
/// unknown constant refuse.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constants<S> {
    /// Bound `G` on stochastic gradient norms over the domain.
    pub lipschitz: Option<S>,
    /// Smoothness `L` of every per-sample loss.
    pub smoothness: Option<S>,
    pub strong_convexity: Option<S>,
    /// Weak convexity modulus `rho` (zero for convex kinds).
    pub weak_convexity: Option<S>,
    /// PL modulus `mu` of the empirical objective.
    pub pl: Option<S>,
    /// Per-sample values lie in `[0, 1]` on the domain.
    pub unit_bounded: bool,
}

/// Objective accessed through per-sample oracles, as consumed by SGD.
pub trait Objective<S: Scalar>: Sync {
    fn value(&self, x: &[S], z: &Sample<S>) -> Result<S>;

    /// `out += scale * g` where `g` is a subgradient at `x` on sample `z`.
    fn add_subgradient(&self, x: &[S], z: &Sample<S>, scale: S, out: &mut [S]) -> Result<()>;

    fn constants(&self) -> Constants<S>;

    /// Empirical objective `F_S(x) = (1/n) sum f(x; z_i)`.
    fn full_value(&self, x: &[S], data: &Dataset<S>) -> Result<S> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut total = S::zero();
        for z in data.samples() {
            total += self.value(x, z)?;
        }
        Ok(total / S::from_count(data.len()))
    }

    /// Full gradient of the empirical objective.
    fn full_gradient(&self, x: &[S], data: &Dataset<S>) -> Result<Vec<S>> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut g = vec![S::zero(); x.len()];
        let w = S::one() / S::from_count(data.len());
        for z in data.samples() {
            self.add_subgradient(x, z, w, &mut g)?;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel<S> {
    kind: LossKind,
    l2: S,
    /// Multiplier on the data term; `1` except for normalized variants.
    scale: S,
    normalization: Option<S>,
    constants: Constants<S>,
}

fn check_dim<S: Scalar>(x: &[S], z: &Sample<S>) -> Result<()> {
    if z.features.min_dim() > x.len() {
        Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.features.min_dim(),
        })
    } else {
        Ok(())
    }
}

fn sigmoid<S: Scalar>(t: S) -> S {
    if t >= S::zero() {
        S::one() / (S::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (S::one() + e)
    }
}

/// `ln(1 + exp(t))` without overflow.
fn softplus<S: Scalar>(t: S) -> S {
    if t > S::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl<S: Scalar> LossModel<S> {
    pub fn new(kind: LossKind, l2: S) -> Result<Self> {
        if !(l2.is_finite() && l2 >= S::zero()) {
            return Err(Error::invalid(format!("l2 weight must be >= 0, got {l2}")));
        }
        let mut m = LossModel {
            kind,
            l2,
            scale: S::one(),
            normalization: None,
            constants: Constants::default(),
        };
        m.constants = m.intrinsic_constants();
        Ok(m)
    }

    pub fn hinge() -> Self {
        Self::new(LossKind::Hinge, S::zero()).expect("valid")
    }

    pub fn logistic() -> Self {
        Self::new(LossKind::Logistic, S::zero()).expect("valid")
    }

    pub fn least_squares() -> Self {
        Self::new(LossKind::LeastSquares, S::zero()).expect("valid")
    }

    pub fn pl_sine() -> Self {
        Self::new(LossKind::PlSine, S::zero()).expect("valid")
    }

    /// Logistic + ridge divided by `C = ln(1 + exp(A R)) + l2 R^2 / 2`, so that
    /// values lie in `[0, 1]` on the ball of norm `R` for features of norm at
    /// most `A`. Smooth, and `l2 / C`-strongly convex.
    pub fn normalized_logistic(l2: S, max_feature_norm: S, max_param_norm: S) -> Result<Self> {
        let c = softplus(max_feature_norm * max_param_norm)
            + S::lit(0.5) * l2 * max_param_norm * max_param_norm;
        let mut m = Self::new(LossKind::Logistic, l2 / c)?;
        m.scale = S::one() / c;
        m.normalization = Some(c);
        m.constants = m.intrinsic_constants();
        m.constants.unit_bounded = true;
        Ok(m)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn l2(&self) -> S {
        self.l2
    }

    /// Normalization constant divided out of a normalized variant.
    pub fn normalization(&self) -> Option<S> {
        self.normalization
    }

    pub fn name(&self) -> String {
        let base = self.kind.name();
        match (self.normalization.is_some(), self.l2 > S::zero()) {
            (true, _) => format!("normalized-{base}+l2"),
            (false, true) => format!("{base}+l2"),
            (false, false) => base.to_string(),
        }
    }

    /// Replaces the declared constants.
    pub fn with_constants(mut self, constants: Constants<S>) -> Self {
        self.constants = constants;
        self
    }

    /// Constants that do not depend on data or domain.
    fn intrinsic_constants(&self) -> Constants<S> {
        let strong = (self.l2 > S::zero()).then_some(self.l2);
        match self.kind {
            LossKind::PlSine => Constants {
                lipschitz: None,
                smoothness: Some(S::lit(8.0) + self.l2),
                strong_convexity: None,
                weak_convexity: Some((S::lit(4.0) - self.l2).max(S::zero())),
                pl: Some(S::lit(1.0 / 32.0)),
                unit_bounded: false,
            },
            _ => Constants {
                lipschitz: None,
                smoothness: None,
                strong_convexity: strong,
                weak_convexity: Some(S::zero()),
                pl: None,
                unit_bounded: false,
            },
        }
    }

    /// Constants for running on `data` inside `domain`: gradient bound `G`,
    /// smoothness `L`, strong/weak convexity. `G` is unknown when it would
    /// need an unbounded domain to be bounded.
    pub fn derive_constants(&self, data: &Dataset<S>, domain: &BallDomain<S>) -> Constants<S> {
        let a = data.max_feature_norm();
        let r = domain.max_norm();
        let reg_g = |g: S| -> Option<S> {
            if self.l2 > S::zero() {
                r.map(|r| g + self.l2 * r)
            } else {
                Some(g)
            }
        };
        let mut c = self.intrinsic_constants();
        c.unit_bounded = self.constants.unit_bounded;
        match self.kind {
            LossKind::Hinge => {
                c.lipschitz = reg_g(self.scale * a);
            }
            LossKind::Logistic => {
                c.lipschitz = reg_g(self.scale * a);
                c.smoothness = Some(self.scale * a * a / S::lit(4.0) + self.l2);
            }
            LossKind::LeastSquares => {
                // max_i ||a_i|| (|a_i^T c - b_i| + ||a_i|| radius) over the ball
                c.lipschitz = match domain {
                    BallDomain::Unbounded => None,
                    BallDomain::Ball { center, radius } => {
                        let worst = data
                            .samples()
                            .iter()
                            .map(|z| {
                                let na = z.features.norm();
                                na * ((z.features.dot(center) - z.label).abs() + na * *radius)
                            })
                            .fold(S::zero(), S::max);
                        Some(self.scale * worst + self.l2 * (center.norm() + *radius))
                    }
                };
                c.smoothness = Some(self.scale * a * a + self.l2);
            }
            LossKind::PlSine => {
                let sqrt_d = S::from_count(data.dim()).sqrt();
                c.lipschitz = r.map(|r| (S::lit(2.0) + self.l2) * r + S::lit(3.0) * sqrt_d + a);
            }
        }
        c
    }

    /// Returns the model with constants derived for `data` and `domain`,
    /// keeping a previously declared PL modulus.
    pub fn with_derived_constants(mut self, data: &Dataset<S>, domain: &BallDomain<S>) -> Self {
        let pl = self.constants.pl;
        self.constants = self.derive_constants(data, domain);
        if self.constants.pl.is_none() {
            self.constants.pl = pl;
        }
        self
    }

    pub fn with_pl(mut self, mu: S) -> Self {
        self.constants.pl = Some(mu);
        self
    }

    fn ridge(&self, x: &[S]) -> S {
        if self.l2 > S::zero() {
            S::lit(0.5) * self.l2 * x.iter().map(|&v| v * v).sum::<S>()
        } else {
            S::zero()
        }
    }

    /// Data term without the ridge penalty.
    fn data_value(&self, x: &[S], z: &Sample<S>) -> S {
        let raw = match self.kind {
            LossKind::Hinge => (S::one() - z.label * z.features.dot(x)).max(S::zero()),
            LossKind::Logistic => softplus(-z.label * z.features.dot(x)),
            LossKind::LeastSquares => {
                let r = z.features.dot(x) - z.label;
                S::lit(0.5) * r * r
            }
            LossKind::PlSine => {
                let three = S::lit(3.0);
                let base: S = x
                    .iter()
                    .map(|&v| {
                        let s = v.sin();
                        v * v + three * s * s
                    })
                    .sum();
                base + z.features.dot(x)
            }
        };
        self.scale * raw
    }

    fn add_data_gradient(&self, x: &[S], z: &Sample<S>, scale: S, out: &mut [S]) {
        let s = scale * self.scale;
        match self.kind {
            LossKind::Hinge => {
                // zero subgradient at the kink
                if z.label * z.features.dot(x) < S::one() {
                    z.features.axpy_into(-s * z.label, out);
                }
            }
            LossKind::Logistic => {
                let m = z.label * z.features.dot(x);
                z.features.axpy_into(-s * z.label * sigmoid(-m), out);
            }
            LossKind::LeastSquares => {
                let r = z.features.dot(x) - z.label;
                z.features.axpy_into(s * r, out);
            }
            LossKind::PlSine => {
                let (two, three) = (S::lit(2.0), S::lit(3.0));
                for (o, &v) in out.iter_mut().zip(x) {
                    *o += s * (two * v + three * (two * v).sin());
                }
                z.features.axpy_into(s, out);
            }
        }
    }
}

impl<S: Scalar> Objective<S> for LossModel<S> {
    fn value(&self, x: &[S], z: &Sample<S>) -> Result<S> {
        check_dim(x, z)?;
        Ok(self.data_value(x, z) + self.ridge(x))
    }

    fn add_subgradient(&self, x: &[S], z: &Sample<S>, scale: S, out: &mut [S]) -> Result<()> {
        check_dim(x, z)?;
        self.add_data_gradient(x, z, scale, out);
        if self.l2 > S::zero() {
            let c = scale * self.l2;
            for (o, &v) in out.iter_mut().zip(x) {
                *o += c * v;
            }
        }
        Ok(())
    }

    fn constants(&self) -> Constants<S> {
        self.constants.clone()
    }

    /// Mean data term plus the ridge penalty, counted once.
    fn full_value(&self, x: &[S], data: &Dataset<S>) -> Result<S> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut total = S::zero();
        for z in data.samples() {
            check_dim(x, z)?;
            total += self.data_value(x, z);
        }
        Ok(total / S::from_count(data.len()) + self.ridge(x))
    }
}

/// Per-sample loss value.
pub fn loss_value<S: Scalar>(
    model: &LossModel<S>,
    x: &ParameterVector<S>,
    z: &Sample<S>,
) -> Result<S> {
    model.value(x, z)
}

/// Per-sample subgradient as a fresh vector.
pub fn loss_subgrad<S: Scalar>(
    model: &impl Objective<S>,
    x: &ParameterVector<S>,
    z: &Sample<S>,
) -> Result<ParameterVector<S>> {
    let mut g = vec![S::zero(); x.dim()];
    model.add_subgradient(x, z, S::one(), &mut g)?;
    ParameterVector::new(g)
}

/// Empirical objective `F_S(x)`.
pub fn full_objective<S: Scalar>(
    model: &impl Objective<S>,
    x: &ParameterVector<S>,
    data: &Dataset<S>,
) -> Result<S> {
    model.full_value(x, data)
}

/// Scalar `x^2 + 3 sin^2 x + z x` and its derivative.
pub fn pl_sine_value<S: Scalar>(x: S, z: S) -> (S, S) {
    let s = x.sin();
    let three = S::lit(3.0);
    let two = S::lit(2.0);
    (
        x * x + three * s * s + z * x,
        two * x + three * (two * x).sin() + z,
    )
}

/// Noise samples for `PlSine`: Gaussian vectors of standard deviation
/// `noise`, centered so the empirical mean is zero.
pub fn pl_sine_dataset<S: Scalar>(n: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset<S>> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("pl-sine data needs n >= 1 and d >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise * z
                })
                .collect()
        })
        .collect();
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        rows.iter_mut().for_each(|r| r[j] -= mean);
    }
    let samples = rows
        .into_iter()
        .map(|r| {
            let v: Vec<S> = r.into_iter().map(S::lit).collect();
            Sample::new(SparseVector::from_dense(&v), S::zero())
        })
        .collect();
    Dataset::new(
        samples,
        d,
        format!("pl-sine noise n={n} d={d} sigma={noise} seed={seed}"),
    )
}

/// Fraction of samples whose label disagrees with `sign(a^T x)`; a zero
/// score predicts `+1`.
pub fn misclassification_rate<S: Scalar>(x: &[S], data: &Dataset<S>) -> Result<S> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let wrong = data
        .samples()
        .iter()
        .filter(|z| {
            let pred = if z.features.dot(x) >= S::zero() {
                S::one()
            } else {
                -S::one()
            };
            pred != z.label.signum()
        })
        .count();
    Ok(S::from_count(wrong) / S::from_count(data.len()))
}

/// `F_k(x) = f(x; z) + ||x - anchor||^2 / (2 gamma)`: the convexified stage
/// objective of the stagewise method.
#[derive(Debug, Clone)]
pub struct ProximalLoss<'a, S> {
    base: &'a LossModel<S>,
    anchor: ParameterVector<S>,
    gamma: S,
}

impl<'a, S: Scalar> ProximalLoss<'a, S> {
    pub fn anchor(&self) -> &ParameterVector<S> {
        &self.anchor
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn base(&self) -> &LossModel<S> {
        self.base
    }

    fn prox_term(&self, x: &[S]) -> S {
        let sq: S = x
            .iter()
            .zip(self.anchor.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        sq / (S::lit(2.0) * self.gamma)
    }
}

/// Wraps `base` with a proximal term anchored at `anchor`.
pub fn prox_wrap<'a, S: Scalar>(
    base: &'a LossModel<S>,
    anchor: ParameterVector<S>,
    gamma: S,
) -> Result<ProximalLoss<'a, S>> {
    if !(gamma.is_finite() && gamma > S::zero()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    anchor.check_finite("proximal anchor")?;
    Ok(ProximalLoss {
        base,
        anchor,
        gamma,
    })
}

impl<'a, S: Scalar> Objective<S> for ProximalLoss<'a, S> {
    fn value(&self, x: &[S], z: &Sample<S>) -> Result<S> {
        Ok(self.base.value(x, z)? + self.prox_term(x))
    }

    fn add_subgradient(&self, x: &[S], z: &Sample<S>, scale: S, out: &mut [S]) -> Result<()> {
        self.base.add_subgradient(x, z, scale, out)?;
        let c = scale / self.gamma;
        for ((o, &v), &a) in out.iter_mut().zip(x).zip(self.anchor.iter()) {
            *o += c * (v - a);
        }
        Ok(())
    }

    fn constants(&self) -> Constants<S> {
        let b = self.base.constants();
        let inv = S::one() / self.gamma;
        let base_strong = b.strong_convexity.unwrap_or(S::zero());
        Constants {
            lipschitz: None,
            smoothness: b.smoothness.map(|l| l + inv),
            strong_convexity: b.weak_convexity.map(|rho| inv - rho + base_strong),
            weak_convexity: b.weak_convexity.map(|rho| (rho - inv).max(S::zero())),
            pl: None,
            unit_bounded: false,
        }
    }

    fn full_value(&self, x: &[S], data: &Dataset<S>) -> Result<S> {
        Ok(self.base.full_value(x, data)? + self.prox_term(x))
    }
}
