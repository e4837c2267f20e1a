//! Incremental iterate averaging.
//!
//! Every scheme consumes `x_1, x_2, ...` strictly in order through
//! [`AveragingState::update`] and reports the current average through
//! [`AveragingState::finalize`]. Weighted schemes keep only the running mean
//! and the running weight sum:
//!
//! ```text
//! W_t = W_{t-1} + w_t,    mean <- mean + (w_t / W_t) (x_t - mean)
//! ```

use crate::vector::ParameterVector;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// The most recent iterate.
    Last,
    /// Equal weights.
    Uniform,
    /// Weights `w_t = t^alpha`.
    Piwa { alpha: f64 },
    /// Uniform over the last `ceil(fraction * T)` iterates of a horizon `T`.
    Suffix { fraction: f64 },
    /// `mean <- (1 - c_t) mean + c_t x_t` with `c_t = (eta + 1) / (t + eta)`.
    PolyDecay { eta: f64 },
    /// `mean <- beta mean + (1 - beta) x_t`, started at `x_1`.
    Ema { beta: f64 },
}

impl Scheme {
    pub fn piwa(alpha: f64) -> Self {
        Scheme::Piwa { alpha }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Last => "last",
            Scheme::Uniform => "uniform",
            Scheme::Piwa { .. } => "piwa",
            Scheme::Suffix { .. } => "suffix",
            Scheme::PolyDecay { .. } => "poly-decay",
            Scheme::Ema { .. } => "ema",
        }
    }

    /// Weight exponent; uniform averaging reports zero.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Scheme::Piwa { alpha } => Some(*alpha),
            Scheme::Uniform => Some(0.0),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Scheme::Last | Scheme::Uniform => true,
            Scheme::Piwa { alpha } => alpha.is_finite() && alpha >= 0.0,
            Scheme::Suffix { fraction } => fraction > 0.0 && fraction <= 1.0,
            Scheme::PolyDecay { eta } => eta.is_finite() && eta >= 0.0,
            Scheme::Ema { beta } => beta > 0.0 && beta < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid averaging parameters: {self:?}"
            )))
        }
    }

    pub fn needs_horizon(&self) -> bool {
        matches!(self, Scheme::Suffix { .. })
    }
}

/// `t^alpha` computed as `exp(alpha ln t)`, refusing values beyond the
/// scalar's overflow guard.
pub fn piwa_weight<S: Scalar>(t: usize, alpha: f64) -> Result<S> {
    let w = S::lit(alpha * (t as f64).ln()).exp();
    if !w.is_finite() || w > S::weight_limit() {
        return Err(Error::WeightOverflow { t, alpha });
    }
    Ok(w)
}

/// First iteration that enters a suffix average of `fraction` over `horizon`.
pub fn suffix_start(fraction: f64, horizon: usize) -> usize {
    // small slack so that e.g. 0.3 * 10 counts as exactly 3 iterates
    let kept = ((fraction * horizon as f64) - 1e-9).ceil().max(1.0) as usize;
    horizon - kept.min(horizon) + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingState<S> {
    scheme: Scheme,
    horizon: Option<usize>,
    mean: Option<Vec<S>>,
    weight_sum: S,
    t: usize,
}

impl<S: Scalar> AveragingState<S> {
    pub fn new(scheme: Scheme) -> Result<Self> {
        scheme.validate()?;
        Ok(AveragingState {
            scheme,
            horizon: None,
            mean: None,
            weight_sum: S::zero(),
            t: 0,
        })
    }

    /// Declares the run length `T`; required by suffix averaging.
    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if self.t > horizon {
            return Err(Error::BeforeHorizon { t: self.t, horizon });
        }
        self.horizon = Some(horizon);
        Ok(self)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    /// Number of iterates consumed.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Sum of weights of the iterates included so far.
    pub fn weight_sum(&self) -> S {
        self.weight_sum
    }

    /// Current average, or `None` when nothing has entered it yet.
    pub fn current(&self) -> Option<&[S]> {
        self.mean.as_deref()
    }

    /// Feeds `x_t`; `t` must be one more than the previous call.
    pub fn update(&mut self, x: &[S], t: usize) -> Result<()> {
        if t != self.t + 1 {
            return Err(Error::NotSequential {
                expected: self.t + 1,
                got: t,
            });
        }
        if let Some(m) = &self.mean {
            if m.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.len(),
                    found: x.len(),
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("averaged iterate"));
        }
        // coefficient on x_t; None skips the iterate
        let coef: Option<S> = match self.scheme {
            Scheme::Last => Some(S::one()),
            Scheme::Uniform => Some(self.push_weight(S::one())?),
            Scheme::Piwa { alpha } => {
                let w = piwa_weight(t, alpha)?;
                Some(self.push_weight(w)?)
            }
            Scheme::Suffix { fraction } => {
                let horizon = self
                    .horizon
                    .ok_or(Error::MissingInput("suffix averaging horizon"))?;
                if t > horizon {
                    return Err(Error::invalid(format!(
                        "update t={t} beyond horizon {horizon}"
                    )));
                }
                if t >= suffix_start(fraction, horizon) {
                    Some(self.push_weight(S::one())?)
                } else {
                    None
                }
            }
            Scheme::PolyDecay { eta } => {
                let eta = S::lit(eta);
                Some((eta + S::one()) / (S::from_count(t) + eta))
            }
            Scheme::Ema { beta } => Some(if t == 1 {
                S::one()
            } else {
                S::one() - S::lit(beta)
            }),
        };
        self.t = t;
        let Some(c) = coef else { return Ok(()) };
        match &mut self.mean {
            None => self.mean = Some(x.to_vec()),
            Some(m) if c == S::one() => m.copy_from_slice(x),
            Some(m) => {
                for (mi, &xi) in m.iter_mut().zip(x) {
                    *mi += c * (xi - *mi);
                }
            }
        }
        Ok(())
    }

    /// Adds `w` to the weight sum and returns the ratio `w / W`.
    fn push_weight(&mut self, w: S) -> Result<S> {
        let total = self.weight_sum + w;
        if !total.is_finite() || total > S::weight_limit() {
            return Err(Error::WeightOverflow {
                t: self.t + 1,
                alpha: self.scheme.alpha().unwrap_or(0.0),
            });
        }
        self.weight_sum = total;
        Ok(w / total)
    }

    /// The current average. Does not modify the state.
    pub fn finalize(&self) -> Result<ParameterVector<S>> {
        if self.t == 0 {
            return Err(Error::NoUpdates);
        }
        if let (Scheme::Suffix { .. }, Some(h)) = (self.scheme, self.horizon) {
            if self.t < h {
                return Err(Error::BeforeHorizon {
                    t: self.t,
                    horizon: h,
                });
            }
        }
        match &self.mean {
            Some(m) => ParameterVector::new(m.clone()),
            None => Err(Error::NoUpdates),
        }
    }
}

/// Consuming form of [`AveragingState::update`].
pub fn avg_update<S: Scalar>(
    mut state: AveragingState<S>,
    x: &[S],
    t: usize,
) -> Result<AveragingState<S>> {
    state.update(x, t)?;
    Ok(state)
}

pub fn avg_finalize<S: Scalar>(state: &AveragingState<S>) -> Result<ParameterVector<S>> {
    state.finalize()
}

/// `H_T(alpha) = sum t^alpha F_t / sum t^alpha` with `t` starting at 1.
pub fn h_value<S: Scalar>(alpha: f64, values: &[S]) -> Result<S> {
    if values.is_empty() {
        return Err(Error::invalid("h_value needs at least one value"));
    }
    let mut num = S::zero();
    let mut den = S::zero();
    for (i, &f) in values.iter().enumerate() {
        let w: S = piwa_weight(i + 1, alpha)?;
        num += w * f;
        den += w;
    }
    if !den.is_finite() || den > S::weight_limit() {
        return Err(Error::WeightOverflow {
            t: values.len(),
            alpha,
        });
    }
    Ok(num / den)
}
