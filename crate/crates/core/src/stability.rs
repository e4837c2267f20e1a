//! Empirical uniform stability through coupled runs.
//!
//! Two SGD runs on datasets that differ in one position share the same index
//! stream, so their iterates coincide until the differing position is first
//! drawn. The gap between their outputs measures the sensitivity of the
//! algorithm to that one sample.

use rand::Rng;
use rayon::prelude::*;

use crate::averaging::Scheme;
use crate::bounds::{bound_stab_convex, bound_stab_strongly, param_deviation_bound, BoundInputs};
use crate::data::{Dataset, Sample};
use crate::losses::Objective;
use crate::optimizer::{SgdConfig, SgdRunner, StepSchedule};
use crate::sampling::{derive_seed, rng_from_seed, SampleStream};
use crate::vector::ParameterVector;
use crate::{Error, Result, Scalar};

/// Datasets identical except at `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPair<S> {
    pub original: Dataset<S>,
    pub neighbor: Dataset<S>,
    pub index: usize,
    pub replacement: Sample<S>,
}

pub fn make_neighbor<S: Scalar>(
    data: &Dataset<S>,
    j: usize,
    z_new: Sample<S>,
) -> Result<NeighborPair<S>> {
    let neighbor = data.replaced(j, z_new.clone())?;
    Ok(NeighborPair {
        original: data.clone(),
        neighbor,
        index: j,
        replacement: z_new,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledOutcome<S> {
    /// `||avg - avg'||`
    pub param_dev_avg: S,
    /// `||x_T - x'_T||`
    pub param_dev_last: S,
    /// `max_z |f(avg; z) - f(avg'; z)|` over the probe set.
    pub loss_dev_max: S,
    /// First draw of the differing index, if any.
    pub first_draw: Option<usize>,
    /// First iteration whose iterates differ, if any.
    pub first_divergence: Option<usize>,
}

/// Runs the pair with the same stream seeded by `seed`.
pub fn coupled_run<S: Scalar, O: Objective<S> + ?Sized>(
    loss: &O,
    pair: &NeighborPair<S>,
    config: &SgdConfig<S>,
    x1: &ParameterVector<S>,
    seed: u64,
    probe: &[Sample<S>],
) -> Result<CoupledOutcome<S>> {
    coupled_run_with(loss, pair, (config, config), x1, seed, probe)
}

/// As [`coupled_run`] with a configuration per side; they must be equal.
pub fn coupled_run_with<S: Scalar, O: Objective<S> + ?Sized>(
    loss: &O,
    pair: &NeighborPair<S>,
    configs: (&SgdConfig<S>, &SgdConfig<S>),
    x1: &ParameterVector<S>,
    seed: u64,
    probe: &[Sample<S>],
) -> Result<CoupledOutcome<S>> {
    let (config, other) = configs;
    if config != other {
        return Err(Error::invalid("coupled runs need identical configurations"));
    }
    if probe.is_empty() {
        return Err(Error::invalid("stability probe set is empty"));
    }
    if pair.original.len() != pair.neighbor.len() {
        return Err(Error::invalid("neighbouring datasets differ in size"));
    }
    let n = pair.original.len();
    let mut sa = SampleStream::new(seed, n)?;
    let mut sb = SampleStream::new(seed, n)?;
    let mut a = SgdRunner::new(loss, &pair.original, x1, config)?;
    let mut b = SgdRunner::new(loss, &pair.neighbor, x1, config)?;
    let mut first_draw = None;
    let mut first_divergence = None;
    while !a.is_done() {
        if first_draw.is_none() {
            let mut peek = sa.clone();
            if (0..config.batch_size).any(|_| peek.next_index() == pair.index) {
                first_draw = Some(a.t());
            }
        }
        a.step(&mut sa)?;
        b.step(&mut sb)?;
        if first_divergence.is_none() && a.iterate() != b.iterate() {
            first_divergence = Some(a.t());
        }
    }
    let (avg_a, last_a) = a.finish()?;
    let (avg_b, last_b) = b.finish()?;
    let mut loss_dev_max = S::zero();
    for z in probe {
        let d = (loss.value(&avg_a, z)? - loss.value(&avg_b, z)?).abs();
        loss_dev_max = loss_dev_max.max(d);
    }
    Ok(CoupledOutcome {
        param_dev_avg: avg_a.distance(&avg_b),
        param_dev_last: last_a.distance(&last_b),
        loss_dev_max,
        first_draw,
        first_divergence,
    })
}

/// Which closed-form stability bound annotates a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StabilityBound {
    #[default]
    None,
    /// Smooth convex losses with `eta_1 <= 2/L`.
    Convex,
    /// Strongly convex smooth losses bounded in `[0, 1]`.
    StronglyConvex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig<S> {
    /// Base run; its averaging scheme is replaced by weights `t^alpha` for
    /// every alpha of the grid (as is the alpha of a strongly convex schedule).
    pub run: SgdConfig<S>,
    pub trials: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub bound: StabilityBound,
    /// Constants for the bound annotation; `alpha`, `n` and `T` are filled in.
    pub bound_inputs: BoundInputs<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult<S> {
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub index: usize,
    pub outcome: CoupledOutcome<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSummary<S> {
    pub alpha: f64,
    pub trials: usize,
    pub mean_param_dev_avg: S,
    pub se_param_dev_avg: S,
    pub max_param_dev_avg: S,
    pub mean_param_dev_last: S,
    pub max_param_dev_last: S,
    pub mean_loss_dev: S,
    pub max_loss_dev: S,
    /// Closed-form stability bound, when requested and applicable.
    pub bound: Option<S>,
    /// `(2G/n) sum_{t<T} eta_t`, when `G` is known.
    pub param_bound: Option<S>,
    /// Trials with `||x_T - x'_T||` within `param_bound`.
    pub within_param_bound: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<S> {
    pub trials: Vec<TrialResult<S>>,
    pub summaries: Vec<AlphaSummary<S>>,
}

/// Configuration of one grid point.
pub fn config_for_alpha<S: Scalar>(base: &SgdConfig<S>, alpha: f64) -> SgdConfig<S> {
    let mut c = base.clone();
    c.scheme = Scheme::piwa(alpha);
    if let StepSchedule::StronglyConvex { lambda, .. } = c.schedule {
        c.schedule = StepSchedule::StronglyConvex { lambda, alpha };
    }
    c
}

/// Monte Carlo over `(j, z_new, seed)` triples. Replacements are drawn from
/// `pool`; loss deviations are measured on `probe`. The same triples are
/// reused for every alpha.
pub fn stability_sweep<S: Scalar, O: Objective<S> + ?Sized>(
    loss: &O,
    data: &Dataset<S>,
    pool: &[Sample<S>],
    probe: &[Sample<S>],
    x1: &ParameterVector<S>,
    config: &SweepConfig<S>,
) -> Result<StabilityReport<S>> {
    if config.trials == 0 {
        return Err(Error::invalid("stability sweep needs at least one trial"));
    }
    if pool.is_empty() {
        return Err(Error::invalid("replacement pool is empty"));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let draws: Vec<(usize, usize, u64)> = (0..config.trials)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(config.seed, i as u64));
            (
                rng.random_range(0..n),
                rng.random_range(0..pool.len()),
                rng.random(),
            )
        })
        .collect();
    let mut trials = Vec::with_capacity(config.trials * config.alphas.len());
    let mut summaries = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let run = config_for_alpha(&config.run, alpha);
        let results: Vec<TrialResult<S>> = draws
            .par_iter()
            .enumerate()
            .map(|(trial, &(j, p, seed))| {
                let pair = make_neighbor(data, j, pool[p].clone())?;
                let outcome = coupled_run(loss, &pair, &run, x1, seed, probe)?;
                Ok(TrialResult {
                    alpha,
                    trial,
                    seed,
                    index: j,
                    outcome,
                })
            })
            .collect::<Result<_>>()?;
        summaries.push(summarize(alpha, &results, &run, n, config)?);
        trials.extend(results);
    }
    Ok(StabilityReport { trials, summaries })
}

fn summarize<S: Scalar>(
    alpha: f64,
    results: &[TrialResult<S>],
    run: &SgdConfig<S>,
    n: usize,
    config: &SweepConfig<S>,
) -> Result<AlphaSummary<S>> {
    let m = S::from_count(results.len());
    let avg: Vec<S> = results.iter().map(|r| r.outcome.param_dev_avg).collect();
    let last: Vec<S> = results.iter().map(|r| r.outcome.param_dev_last).collect();
    let loss: Vec<S> = results.iter().map(|r| r.outcome.loss_dev_max).collect();
    let mean = |v: &[S]| v.iter().copied().sum::<S>() / m;
    let max = |v: &[S]| v.iter().copied().fold(S::zero(), S::max);
    let mean_avg = mean(&avg);
    let se = if results.len() > 1 {
        let var = avg
            .iter()
            .map(|&v| (v - mean_avg) * (v - mean_avg))
            .sum::<S>()
            / (m - S::one());
        (var / m).sqrt()
    } else {
        S::zero()
    };
    let inputs = BoundInputs {
        alpha: Some(S::lit(alpha)),
        n: Some(n),
        t: Some(run.iterations),
        eta1: config
            .bound_inputs
            .eta1
            .or(Some(S::lit(run.schedule.first()))),
        ..config.bound_inputs.clone()
    };
    let bound = match config.bound {
        StabilityBound::None => None,
        StabilityBound::Convex => Some(bound_stab_convex(&inputs)?),
        StabilityBound::StronglyConvex => Some(bound_stab_strongly(&inputs)?.1),
    };
    let param_bound = config
        .bound_inputs
        .g
        .map(|g| param_deviation_bound(g, n, &run.schedule, run.iterations))
        .transpose()?;
    let within_param_bound = param_bound.map(|b| last.iter().filter(|&&v| v <= b).count());
    Ok(AlphaSummary {
        alpha,
        trials: results.len(),
        mean_param_dev_avg: mean_avg,
        se_param_dev_avg: se,
        max_param_dev_avg: max(&avg),
        mean_param_dev_last: mean(&last),
        max_param_dev_last: max(&last),
        mean_loss_dev: mean(&loss),
        max_loss_dev: max(&loss),
        bound,
        param_bound,
        within_param_bound,
    })
}
