//! Projected SGD with online averaging, and the stagewise proximal driver.
//!
//! One run executes
//!
//! ```text
//! for t = 1 .. T-1:
//!     i_t      ~ uniform{0..n}
//!     x_{t+1}  = proj(x_t - eta_t * g(x_t; z_{i_t}))
//! ```
//!
//! and feeds every iterate `x_1 .. x_T` to the averaging state.

use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::averaging::{AveragingState, Scheme};
use crate::data::Dataset;
use crate::losses::{prox_wrap, LossModel, Objective};
use crate::sampling::SampleStream;
use crate::vector::{BallDomain, ParameterVector};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `eta_1 / sqrt(t)`
    ConvexSqrt {
        eta1: f64,
    },
    /// `2 (alpha + 1) / (lambda t)`
    StronglyConvex {
        lambda: f64,
        alpha: f64,
    },
    Constant {
        eta: f64,
    },
}

impl StepSchedule {
    pub fn name(&self) -> &'static str {
        match self {
            StepSchedule::ConvexSqrt { .. } => "convex-sqrt",
            StepSchedule::StronglyConvex { .. } => "strongly-convex",
            StepSchedule::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let ok = match *self {
            StepSchedule::ConvexSqrt { eta1 } => pos(eta1),
            StepSchedule::StronglyConvex { lambda, alpha } => {
                pos(lambda) && alpha.is_finite() && alpha >= 0.0
            }
            StepSchedule::Constant { eta } => pos(eta),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid step schedule {self:?}")))
        }
    }

    /// Step size at iteration `t >= 1`.
    pub fn step<S: Scalar>(&self, t: usize) -> Result<S> {
        if t < 1 {
            return Err(Error::invalid("step size requested for t < 1"));
        }
        let t = S::from_count(t);
        Ok(match *self {
            StepSchedule::ConvexSqrt { eta1 } => S::lit(eta1) / t.sqrt(),
            StepSchedule::StronglyConvex { lambda, alpha } => {
                S::lit(2.0 * (alpha + 1.0)) / (S::lit(lambda) * t)
            }
            StepSchedule::Constant { eta } => S::lit(eta),
        })
    }

    /// Initial step `eta_1`.
    pub fn first(&self) -> f64 {
        self.step::<f64>(1).unwrap_or(f64::NAN)
    }
}

pub fn step_size<S: Scalar>(schedule: &StepSchedule, t: usize) -> Result<S> {
    schedule.step(t)
}

/// Iterations at which the full objective is evaluated. The final iteration
/// `T` is always included.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Checkpoints {
    /// `1, 2, 4, 8, ...` up to `T`.
    #[default]
    PowersOfTwo,
    /// `round(10^(k / per_decade))` up to `T`.
    LogSpaced {
        per_decade: usize,
    },
    Explicit(Vec<usize>),
    FinalOnly,
}

impl Checkpoints {
    pub fn resolve(&self, horizon: usize) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            Checkpoints::PowersOfTwo => std::iter::successors(Some(1usize), |&p| p.checked_mul(2))
                .take_while(|&p| p <= horizon)
                .collect(),
            Checkpoints::LogSpaced { per_decade } => {
                let per = (*per_decade).max(1) as f64;
                (0..)
                    .map(|k| 10f64.powf(k as f64 / per).round() as usize)
                    .take_while(|&p| p <= horizon)
                    .collect()
            }
            Checkpoints::Explicit(v) => v
                .iter()
                .copied()
                .filter(|&t| t >= 1 && t <= horizon)
                .collect(),
            Checkpoints::FinalOnly => Vec::new(),
        };
        out.push(horizon);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig<S> {
    pub schedule: StepSchedule,
    /// Horizon `T`: the number of iterates produced, including `x_1`.
    pub iterations: usize,
    pub domain: BallDomain<S>,
    pub scheme: Scheme,
    pub checkpoints: Checkpoints,
    /// Abort when a stochastic gradient norm exceeds this value.
    pub gradient_bound: Option<S>,
    /// Samples per stochastic gradient; 1 unless stress-testing.
    pub batch_size: usize,
    /// Record elapsed milliseconds at checkpoints; zero otherwise.
    pub record_wall_time: bool,
}

impl<S: Scalar> SgdConfig<S> {
    pub fn new(schedule: StepSchedule, iterations: usize, scheme: Scheme) -> Self {
        SgdConfig {
            schedule,
            iterations,
            domain: BallDomain::Unbounded,
            scheme,
            checkpoints: Checkpoints::default(),
            gradient_bound: None,
            batch_size: 1,
            record_wall_time: false,
        }
    }

    pub fn with_domain(mut self, domain: BallDomain<S>) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Checkpoints) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        self.schedule.validate()?;
        self.scheme.validate()
    }

    /// Stable SHA-256 of the configuration, hex.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub t: usize,
    /// Training objective at the average; `None` while the average is empty
    /// (suffix averaging before its window).
    pub obj_avg: Option<S>,
    pub obj_last: S,
    pub test_metric: Option<S>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<S> {
    pub checkpoints: Vec<Checkpoint<S>>,
    pub final_average: ParameterVector<S>,
    pub final_last: ParameterVector<S>,
    pub config_fingerprint: String,
}

impl<S: Scalar> RunTrace<S> {
    pub fn last_checkpoint(&self) -> &Checkpoint<S> {
        self.checkpoints.last().expect("a trace always records T")
    }
}

/// Hooks invoked at checkpoints. `()` does nothing.
pub trait Observer<S: Scalar> {
    /// Test metric for the reported point (the average when available).
    fn test_metric(&self, _x: &[S]) -> Result<Option<S>> {
        Ok(None)
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint<S>) -> Result<()> {
        Ok(())
    }
}

impl<S: Scalar> Observer<S> for () {}

/// Step-at-a-time SGD state.
pub struct SgdRunner<'a, S: Scalar, O: Objective<S> + ?Sized> {
    objective: &'a O,
    data: &'a Dataset<S>,
    config: &'a SgdConfig<S>,
    x: Vec<S>,
    grad: Vec<S>,
    avg: AveragingState<S>,
    t: usize,
}

impl<'a, S: Scalar, O: Objective<S> + ?Sized> SgdRunner<'a, S, O> {
    /// Starts at `x1`, which is already counted as the first iterate.
    pub fn new(
        objective: &'a O,
        data: &'a Dataset<S>,
        x1: &ParameterVector<S>,
        config: &'a SgdConfig<S>,
    ) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        x1.ensure_dim(data.dim())?;
        x1.check_finite("initial point")?;
        let tol = S::lit(1e-9);
        if !config.domain.contains(x1, tol) {
            return Err(Error::invalid("initial point lies outside the domain"));
        }
        let mut avg = AveragingState::new(config.scheme)?.with_horizon(config.iterations)?;
        avg.update(x1, 1)?;
        Ok(SgdRunner {
            objective,
            data,
            config,
            x: x1.to_vec(),
            grad: vec![S::zero(); x1.dim()],
            avg,
            t: 1,
        })
    }

    /// Index of the current iterate `x_t`.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn iterate(&self) -> &[S] {
        &self.x
    }

    pub fn average(&self) -> Option<&[S]> {
        self.avg.current()
    }

    pub fn averaging(&self) -> &AveragingState<S> {
        &self.avg
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.iterations
    }

    /// Produces `x_{t+1}` from `x_t` using the next draw(s) of `stream`.
    pub fn step(&mut self, stream: &mut SampleStream) -> Result<()> {
        if self.is_done() {
            return Err(Error::invalid("run already reached its horizon"));
        }
        if stream.len() != self.data.len() {
            return Err(Error::invalid(format!(
                "sample stream over {} indices used with {} samples",
                stream.len(),
                self.data.len()
            )));
        }
        let eta: S = self.config.schedule.step(self.t)?;
        self.grad.iter_mut().for_each(|g| *g = S::zero());
        let w = S::one() / S::from_count(self.config.batch_size);
        let samples = self.data.samples();
        for _ in 0..self.config.batch_size {
            let z = &samples[stream.next_index()];
            self.objective
                .add_subgradient(&self.x, z, w, &mut self.grad)?;
        }
        let diverged = Error::Diverged {
            t: self.t + 1,
            last_finite: self.t,
        };
        if let Some(bound) = self.config.gradient_bound {
            let norm = self.grad.iter().map(|&g| g * g).sum::<S>().sqrt();
            if !norm.is_finite() {
                return Err(diverged);
            }
            if norm > bound * (S::one() + S::lit(1e-9)) {
                return Err(Error::GradientBound {
                    t: self.t,
                    norm: norm.as_f64(),
                    bound: bound.as_f64(),
                });
            }
        }
        for (x, &g) in self.x.iter_mut().zip(&self.grad) {
            *x -= eta * g;
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(diverged);
        }
        self.config.domain.project_in_place(&mut self.x)?;
        self.t += 1;
        self.avg.update(&self.x, self.t)
    }

    /// Final average and last iterate.
    pub fn finish(self) -> Result<(ParameterVector<S>, ParameterVector<S>)> {
        Ok((self.avg.finalize()?, ParameterVector::new(self.x)?))
    }
}

/// Runs SGD for `config.iterations` iterates and records checkpoints.
pub fn sgd_piwa<S: Scalar, O: Objective<S> + ?Sized>(
    objective: &O,
    data: &Dataset<S>,
    x1: &ParameterVector<S>,
    config: &SgdConfig<S>,
    stream: &mut SampleStream,
) -> Result<RunTrace<S>> {
    sgd_piwa_observed(objective, data, x1, config, stream, &mut ())
}

pub fn sgd_piwa_observed<S: Scalar, O: Objective<S> + ?Sized>(
    objective: &O,
    data: &Dataset<S>,
    x1: &ParameterVector<S>,
    config: &SgdConfig<S>,
    stream: &mut SampleStream,
    observer: &mut dyn Observer<S>,
) -> Result<RunTrace<S>> {
    let start = Instant::now();
    let marks = config.checkpoints.resolve(config.iterations);
    let mut runner = SgdRunner::new(objective, data, x1, config)?;
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next = 0;
    loop {
        if marks.get(next) == Some(&runner.t()) {
            let cp = record(
                &runner,
                data,
                observer,
                config.record_wall_time.then(|| start.elapsed()),
            )?;
            observer.on_checkpoint(&cp)?;
            checkpoints.push(cp);
            next += 1;
        }
        if runner.is_done() {
            break;
        }
        runner.step(stream)?;
    }
    let (final_average, final_last) = runner.finish()?;
    Ok(RunTrace {
        checkpoints,
        final_average,
        final_last,
        config_fingerprint: config.fingerprint(),
    })
}

fn record<S: Scalar, O: Objective<S> + ?Sized>(
    runner: &SgdRunner<'_, S, O>,
    data: &Dataset<S>,
    observer: &dyn Observer<S>,
    elapsed: Option<std::time::Duration>,
) -> Result<Checkpoint<S>> {
    let obj_last = runner.objective.full_value(runner.iterate(), data)?;
    let obj_avg = runner
        .average()
        .map(|m| runner.objective.full_value(m, data))
        .transpose()?;
    let reported = runner.average().unwrap_or(runner.iterate());
    Ok(Checkpoint {
        t: runner.t(),
        obj_avg,
        obj_last,
        test_metric: observer.test_metric(reported)?,
        wall_ms: elapsed.map_or(0.0, |d| d.as_secs_f64() * 1e3),
    })
}

/// Inputs to the per-stage parameter formulas. `c` and `d` default to the
/// largest admissible `c` and the smallest admissible `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInputs {
    pub eps0: f64,
    /// PL modulus of the empirical objective.
    pub mu: f64,
    pub alpha: f64,
    /// Failure probability.
    pub delta: f64,
    pub c: Option<f64>,
    pub d: Option<f64>,
    /// Smoothness of the per-sample loss, when known.
    pub smoothness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub k: usize,
    pub eps_k: f64,
    pub eta_k: f64,
    pub t_k: usize,
    /// Radius of the stage ball.
    pub radius: f64,
    pub gamma: f64,
    pub ghat_sq: f64,
    pub c: f64,
    pub d: f64,
    pub c_auto: bool,
    pub d_auto: bool,
    /// The step was lowered to `1 / L`.
    pub eta_capped: bool,
}

/// Stage `k` parameters:
///
/// ```text
/// eps_k = eps0 / 2^k          eta_k = c eps_k / (2 Ghat^2)    (capped at 1/L)
/// T_k   = ceil(d / (mu eps_k)) gamma = 4 / mu                   D_k = sqrt(eps_{k-1} / mu)
/// c    <= min(1, 2 Ghat^2 / (L eps0))
/// d    >= max(32 (alpha+1) Ghat^2 / c, 512 (alpha+1)^2 Ghat^2 ln(1/delta))
/// ```
pub fn stage_params(k: usize, inputs: &StageInputs, ghat_sq: f64) -> Result<StageParams> {
    let pos = |v: f64| v.is_finite() && v > 0.0;
    if k < 1 {
        return Err(Error::invalid("stages are numbered from 1"));
    }
    if !(pos(inputs.eps0) && pos(inputs.mu) && pos(ghat_sq)) {
        return Err(Error::invalid("eps0, mu and Ghat^2 must be positive"));
    }
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    if !(inputs.alpha.is_finite() && inputs.alpha >= 0.0) {
        return Err(Error::invalid("alpha must be >= 0"));
    }
    let a1 = inputs.alpha + 1.0;
    let c_max = match inputs.smoothness {
        Some(l) if pos(l) => 1f64.min(2.0 * ghat_sq / (l * inputs.eps0)),
        Some(l) => {
            return Err(Error::invalid(format!(
                "smoothness must be positive, got {l}"
            )))
        }
        None => 1.0,
    };
    let c = match inputs.c {
        Some(c) if !pos(c) => return Err(Error::invalid(format!("c must be positive, got {c}"))),
        Some(c) if c > c_max * (1.0 + 1e-12) => {
            return Err(Error::invalid(format!(
                "c={c} exceeds its admissible maximum {c_max}"
            )))
        }
        Some(c) => c,
        None => c_max,
    };
    let d_min =
        (32.0 * a1 * ghat_sq / c).max(512.0 * a1 * a1 * ghat_sq * (1.0 / inputs.delta).ln());
    let d = match inputs.d {
        Some(d) if !pos(d) => return Err(Error::invalid(format!("d must be positive, got {d}"))),
        Some(d) => d,
        None => d_min,
    };
    let eps_prev = inputs.eps0 / 2f64.powi(k as i32 - 1);
    let eps_k = eps_prev / 2.0;
    let mut eta_k = c * eps_k / (2.0 * ghat_sq);
    let mut eta_capped = false;
    if let Some(l) = inputs.smoothness {
        if eta_k > 1.0 / l {
            eta_k = 1.0 / l;
            eta_capped = true;
        }
    }
    let t_k = (d / (inputs.mu * eps_k)).ceil();
    if !(t_k.is_finite() && t_k < usize::MAX as f64) {
        return Err(Error::invalid(format!(
            "stage {k} iteration budget {t_k} is not representable"
        )));
    }
    Ok(StageParams {
        k,
        eps_k,
        eta_k,
        t_k: (t_k as usize).max(1),
        radius: (eps_prev / inputs.mu).sqrt(),
        gamma: 4.0 / inputs.mu,
        ghat_sq,
        c,
        d,
        c_auto: inputs.c.is_none(),
        d_auto: inputs.d.is_none(),
        eta_capped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusRule {
    /// `D_1 = sqrt(eps0 / mu)`, then `D_{k+1} = D_k / 2`.
    #[default]
    Halving,
    /// `D_k = sqrt(eps_{k-1} / mu)` at every stage.
    Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagewiseConfig {
    pub stages: usize,
    pub inputs: StageInputs,
    /// Gradient bound `G` of the base loss; derived per stage ball when absent.
    pub g: Option<f64>,
    /// Proximal weight; `4 / mu` when absent.
    pub gamma: Option<f64>,
    pub radius_rule: RadiusRule,
    /// Overrides `T_k` at every stage.
    pub fixed_iterations: Option<usize>,
    /// Overrides `eta_k` at every stage.
    pub fixed_step: Option<f64>,
    /// Refuse stages whose budget exceeds this.
    pub max_stage_iterations: Option<usize>,
    pub checkpoints: Checkpoints,
}

impl StagewiseConfig {
    pub fn new(stages: usize, inputs: StageInputs) -> Self {
        StagewiseConfig {
            stages,
            inputs,
            g: None,
            gamma: None,
            radius_rule: RadiusRule::Halving,
            fixed_iterations: None,
            fixed_step: None,
            max_stage_iterations: None,
            checkpoints: Checkpoints::FinalOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome<S> {
    pub params: StageParams,
    pub trace: RunTrace<S>,
    /// Stage output `x_k`.
    pub x: ParameterVector<S>,
    /// `F_S(x_k)` of the base loss.
    pub objective: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagewiseResult<S> {
    pub x: ParameterVector<S>,
    pub stages: Vec<StageOutcome<S>>,
}

/// Runs `K` stages; stage `k` minimizes `F_S + ||x - x_{k-1}||^2 / (2 gamma)`
/// over the ball around `x_{k-1}` with constant step and weighted averaging.
pub fn stagewise<S: Scalar>(
    loss: &LossModel<S>,
    data: &Dataset<S>,
    x1: &ParameterVector<S>,
    config: &StagewiseConfig,
    stream: &mut SampleStream,
) -> Result<StagewiseResult<S>> {
    if config.stages == 0 {
        return Err(Error::invalid("stagewise needs at least one stage"));
    }
    let inputs = &config.inputs;
    if !(inputs.mu.is_finite() && inputs.mu > 0.0) {
        return Err(Error::invalid("mu must be positive"));
    }
    let gamma = config.gamma.unwrap_or(4.0 / inputs.mu);
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    let rho = loss
        .constants()
        .weak_convexity
        .ok_or(Error::MissingInput("weak convexity modulus"))?
        .as_f64();
    if rho > 0.0 && gamma > 1.0 / rho {
        return Err(Error::invalid(format!(
            "gamma={gamma} exceeds 1/rho={}",
            1.0 / rho
        )));
    }
    let inputs = StageInputs {
        smoothness: inputs
            .smoothness
            .or(loss.constants().smoothness.map(|l| l.as_f64())),
        ..inputs.clone()
    };
    let d1 = (inputs.eps0 / inputs.mu).sqrt();
    let mut x_prev = x1.clone();
    let mut stages = Vec::with_capacity(config.stages);
    for k in 1..=config.stages {
        let in_stage = |e: Error| Error::Stage {
            stage: k,
            source: Box::new(e),
        };
        let radius = match config.radius_rule {
            RadiusRule::Halving => d1 / 2f64.powi(k as i32 - 1),
            RadiusRule::Formula => (inputs.eps0 / 2f64.powi(k as i32 - 1) / inputs.mu).sqrt(),
        };
        let domain = BallDomain::ball(x_prev.clone(), S::lit(radius)).map_err(in_stage)?;
        let g = match config.g {
            Some(g) => g,
            None => loss
                .derive_constants(data, &domain)
                .lipschitz
                .ok_or(Error::MissingInput("gradient bound G"))
                .map_err(in_stage)?
                .as_f64(),
        };
        let ghat_sq = 2.0 * g * g + 2.0 * radius * radius / (gamma * gamma);
        let mut params = stage_params(k, &inputs, ghat_sq).map_err(in_stage)?;
        params.radius = radius;
        params.gamma = gamma;
        if let Some(t) = config.fixed_iterations {
            params.t_k = t;
        }
        if let Some(eta) = config.fixed_step {
            params.eta_k = eta;
        }
        if let Some(cap) = config.max_stage_iterations {
            if params.t_k > cap {
                return Err(in_stage(Error::Refused(format!(
                    "stage budget T_k={} exceeds the cap {cap}",
                    params.t_k
                ))));
            }
        }
        let prox = prox_wrap(loss, x_prev.clone(), S::lit(gamma)).map_err(in_stage)?;
        let run = SgdConfig {
            schedule: StepSchedule::Constant { eta: params.eta_k },
            iterations: params.t_k,
            domain,
            scheme: Scheme::piwa(inputs.alpha),
            checkpoints: config.checkpoints.clone(),
            gradient_bound: None,
            batch_size: 1,
            record_wall_time: false,
        };
        let trace = sgd_piwa(&prox, data, &x_prev, &run, stream).map_err(in_stage)?;
        let x = trace.final_average.clone();
        let objective = loss.full_value(&x, data).map_err(in_stage)?;
        stages.push(StageOutcome {
            params,
            trace,
            x: x.clone(),
            objective,
        });
        x_prev = x;
    }
    Ok(StagewiseResult { x: x_prev, stages })
}
