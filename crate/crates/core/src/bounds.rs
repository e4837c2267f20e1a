//! Closed-form optimization and stability bounds, and power-sum brackets.
//!
//! Every evaluator reads the fields it needs from [`BoundInputs`] and refuses
//! with [`Error::MissingInput`] when one is unknown. Products of large powers
//! are evaluated in log space.

use crate::optimizer::StepSchedule;
use crate::{Error, Result, Scalar};

/// Symbols appearing in the bounds. `None` is "unknown".
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundInputs<S> {
    pub alpha: Option<S>,
    /// Gradient norm bound `G`.
    pub g: Option<S>,
    /// Smoothness `L`.
    pub l: Option<S>,
    /// Domain diameter `D`.
    pub d: Option<S>,
    pub eta1: Option<S>,
    /// Strong convexity `lambda`.
    pub lambda: Option<S>,
    /// PL modulus `mu`.
    pub mu: Option<S>,
    /// Training set size.
    pub n: Option<usize>,
    /// Horizon `T`.
    pub t: Option<usize>,
    /// Stagewise step constant.
    pub c: Option<S>,
    pub delta: Option<S>,
    /// Number of stages.
    pub k: Option<usize>,
    /// Iterations spent before the last stage.
    pub s_prev: Option<usize>,
    /// Per-sample losses are declared to lie in `[0, 1]`.
    pub unit_bounded: bool,
}

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(Error::MissingInput(name))
}

fn positive<S: Scalar>(v: Option<S>, name: &'static str) -> Result<S> {
    let v = need(v, name)?;
    if v.is_finite() && v > S::zero() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

fn alpha_of<S: Scalar>(inputs: &BoundInputs<S>) -> Result<S> {
    let a = need(inputs.alpha, "alpha")?;
    if a.is_finite() && a >= S::zero() {
        Ok(a)
    } else {
        Err(Error::invalid(format!("alpha must be >= 0, got {a}")))
    }
}

fn count(v: Option<usize>, name: &'static str) -> Result<usize> {
    match need(v, name)? {
        0 => Err(Error::invalid(format!("{name} must be >= 1"))),
        c => Ok(c),
    }
}

fn finite<S: Scalar>(v: S, what: &'static str) -> Result<S> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Convex rate for `eta_t = eta_1 / sqrt(t)`:
///
/// ```text
/// (a+1) D^2 / (2 eta_1 sqrt T) + (a+1) eta_1 G^2 / ((2a+1) sqrt T)   if a < 1/2
/// (a+1) D^2 / (2 eta_1 sqrt T) + (a+1) eta_1 G^2 / sqrt T            otherwise
/// ```
pub fn bound_opt_convex<S: Scalar>(inputs: &BoundInputs<S>) -> Result<S> {
    let a = alpha_of(inputs)?;
    let d = positive(inputs.d, "D")?;
    let g = positive(inputs.g, "G")?;
    let eta = positive(inputs.eta1, "eta1")?;
    let sqrt_t = S::from_count(count(inputs.t, "T")?).sqrt();
    let a1 = a + S::one();
    let two = S::lit(2.0);
    let first = a1 * d * d / (two * eta * sqrt_t);
    let second = if a < S::lit(0.5) {
        a1 * eta * g * g / ((two * a + S::one()) * sqrt_t)
    } else {
        a1 * eta * g * g / sqrt_t
    };
    finite(first + second, "convex optimization bound")
}

/// Uniform stability of the weighted average for smooth convex losses with
/// `eta_1 <= 2 / L`:
///
/// ```text
/// 4 eta_1 G^2 (a+1) (T+1)^(a+1.5) / (n (a+1.5) T^(a+1))
/// ```
pub fn bound_stab_convex<S: Scalar>(inputs: &BoundInputs<S>) -> Result<S> {
    let a = alpha_of(inputs)?;
    let g = positive(inputs.g, "G")?;
    let eta = positive(inputs.eta1, "eta1")?;
    let l = positive(inputs.l, "L")?;
    if eta > S::lit(2.0) / l * (S::one() + S::lit(1e-12)) {
        return Err(Error::Refused(format!(
            "eta1={eta} exceeds 2/L={}; the stability bound needs eta1 <= 2/L",
            S::lit(2.0) / l
        )));
    }
    let n = S::from_count(count(inputs.n, "n")?);
    let t = S::from_count(count(inputs.t, "T")?);
    let a1 = a + S::one();
    let a15 = a + S::lit(1.5);
    let log_ratio = a15 * (t + S::one()).ln() - a1 * t.ln();
    let v = S::lit(4.0) * eta * g * g * a1 / (n * a15) * log_ratio.exp();
    finite(v, "convex stability bound")
}

/// Strongly convex rate for `eta_t = 2 (a+1) / (lambda t)`:
///
/// ```text
/// a = 0:      G^2 (1 + ln T) / (lambda T)
/// 0 < a < 1:  (a+1)^2 G^2 / (a lambda T)
/// a >= 1:     (a+1)^2 G^2 (T+1)^a / (a lambda T^(a+1))
/// ```
pub fn bound_opt_strongly<S: Scalar>(inputs: &BoundInputs<S>) -> Result<S> {
    let a = alpha_of(inputs)?;
    let g = positive(inputs.g, "G")?;
    let lam = positive(inputs.lambda, "lambda")?;
    let t = S::from_count(count(inputs.t, "T")?);
    let g2 = g * g;
    let a1 = a + S::one();
    let v = if a == S::zero() {
        g2 * (S::one() + t.ln()) / (lam * t)
    } else if a < S::one() {
        a1 * a1 * g2 / (a * lam * t)
    } else {
        let growth = (a * ((t + S::one()).ln() - t.ln())).exp();
        a1 * a1 * g2 * growth / (a * lam * t)
    };
    finite(v, "strongly convex optimization bound")
}

/// Uniform stability for strongly convex smooth losses bounded in `[0, 1]`.
/// Returns `(t0, bound)` with
///
/// ```text
/// t0 = max(2 (a+1) G / lambda, 1),   bound = t0 / n + 4 G^2 (a+1) / (lambda n)
/// ```
pub fn bound_stab_strongly<S: Scalar>(inputs: &BoundInputs<S>) -> Result<(S, S)> {
    if !inputs.unit_bounded {
        return Err(Error::Refused(
            "the strongly convex stability bound needs losses bounded in [0, 1]".into(),
        ));
    }
    let a = alpha_of(inputs)?;
    let g = positive(inputs.g, "G")?;
    let lam = positive(inputs.lambda, "lambda")?;
    let n = S::from_count(count(inputs.n, "n")?);
    let a1 = a + S::one();
    let t0 = (S::lit(2.0) * a1 * g / lam).max(S::one());
    let bound = t0 / n + S::lit(4.0) * g * g * a1 / (lam * n);
    Ok((t0, finite(bound, "strongly convex stability bound")?))
}

/// Stability of the stagewise method:
///
/// ```text
/// S_{K-1} / n + ((1 + 1/(L c)) / (n - 1)) (2 (a+1) c L^2)^(1/(1+Lc)) T^(Lc/(1+Lc))
/// ```
pub fn bound_stab_stagewise<S: Scalar>(inputs: &BoundInputs<S>) -> Result<S> {
    let a = alpha_of(inputs)?;
    let l = positive(inputs.l, "L")?;
    let c = positive(inputs.c, "c")?;
    let n = need(inputs.n, "n")?;
    if n < 2 {
        return Err(Error::Refused(format!(
            "the stagewise stability bound needs n >= 2, got {n}"
        )));
    }
    let s_prev = S::from_count(need(inputs.s_prev, "S_{K-1}")?);
    let t = S::from_count(count(inputs.t, "T")?);
    let nf = S::from_count(n);
    let lc = l * c;
    let one = S::one();
    let log_tail = ((S::lit(2.0) * (a + one) * c * l * l).ln() + lc * t.ln()) / (one + lc);
    let v = s_prev / nf + (one + one / lc) / (nf - one) * log_tail.exp();
    finite(v, "stagewise stability bound")
}

/// Coefficient on the high-probability deviation term of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeviationCoefficient {
    Two,
    /// The value carried through the full derivation.
    #[default]
    Four,
}

impl DeviationCoefficient {
    pub fn value(self) -> f64 {
        match self {
            DeviationCoefficient::Two => 2.0,
            DeviationCoefficient::Four => 4.0,
        }
    }
}

/// High-probability deviation term of one stage:
/// `coef (a+1) G D sqrt(2 ln(1/delta)) / sqrt(T)`, with `G` the stage
/// gradient bound and `D` the stage radius.
pub fn stage_deviation_term<S: Scalar>(
    inputs: &BoundInputs<S>,
    coefficient: DeviationCoefficient,
) -> Result<S> {
    let a = alpha_of(inputs)?;
    let g = positive(inputs.g, "G")?;
    let d = positive(inputs.d, "D")?;
    let delta = positive(inputs.delta, "delta")?;
    if delta >= S::one() {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    let t = S::from_count(count(inputs.t, "T")?);
    let dev = (S::lit(2.0) * (S::one() / delta).ln()).sqrt() / t.sqrt();
    finite(
        S::lit(coefficient.value()) * (a + S::one()) * g * d * dev,
        "stage deviation term",
    )
}

/// Expected parameter deviation of coupled runs on neighbouring datasets:
/// `(2 G / n) sum_{t < T} eta_t`.
pub fn param_deviation_bound<S: Scalar>(
    g: S,
    n: usize,
    schedule: &StepSchedule,
    horizon: usize,
) -> Result<S> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let mut total = S::zero();
    for t in 1..horizon {
        total += schedule.step::<S>(t)?;
    }
    finite(
        S::lit(2.0) * g / S::from_count(n) * total,
        "parameter deviation bound",
    )
}

/// `sum_{s=1}^{S} s^alpha` by direct summation.
pub fn power_sum(s: usize, alpha: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::invalid("power sum needs S >= 1"));
    }
    let mut total = 0.0;
    for k in 1..=s {
        total += (k as f64).powf(alpha);
    }
    if !total.is_finite() || total > 1e300 {
        return Err(Error::WeightOverflow { t: s, alpha });
    }
    Ok(total)
}

/// `S^(a+1) / (a+1)`, a lower bracket of `sum s^a` for `a >= 0`.
pub fn power_sum_lower(s: usize, alpha: f64) -> f64 {
    (s as f64).powf(alpha + 1.0) / (alpha + 1.0)
}

/// `(S+1)^(a+1) / (a+1)`, an upper bracket of `sum s^a` for `a >= 0`.
pub fn power_sum_upper(s: usize, alpha: f64) -> f64 {
    (s as f64 + 1.0).powf(alpha + 1.0) / (alpha + 1.0)
}

/// Upper bracket of `sum s^(a-1)`: `S^a` for `a >= 1`, `S^a / a` for
/// `0 < a < 1`.
pub fn shifted_power_sum_upper(s: usize, alpha: f64) -> Result<f64> {
    if alpha >= 1.0 {
        Ok((s as f64).powf(alpha))
    } else if alpha > 0.0 {
        Ok((s as f64).powf(alpha) / alpha)
    } else {
        Err(Error::invalid(
            "the shifted power-sum bracket needs alpha > 0",
        ))
    }
}

/// `ln S + 1`, an upper bracket of the harmonic sum.
pub fn harmonic_upper(s: usize) -> f64 {
    (s as f64).ln() + 1.0
}
