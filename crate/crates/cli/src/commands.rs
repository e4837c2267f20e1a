//! Subcommand implementations. Each returns the paths it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use piwa_core::averaging::Scheme;
use piwa_core::bounds::BoundInputs;
use piwa_core::data::serialize_libsvm;
use piwa_core::losses::Objective;
use piwa_core::optimizer::{sgd_piwa_observed, stagewise, SgdConfig, StageInputs, StagewiseConfig};
use piwa_core::sampling::SampleStream;
use piwa_core::stability::{stability_sweep, StabilityBound, SweepConfig};
use piwa_core::{RunConfig, Trace};
use rayon::prelude::*;

use crate::config::{scheme_tag, BaselineRule, BoundKind, ExperimentConfig, SchemeName};
use crate::error::{CliError, CliResult};
use crate::output::{create_dir, num, opt, trace_name, CsvFile, TraceWriter, STABILITY_HEADER};
use crate::problem::Problem;
use crate::rate::{fit_rate_skipping, RateFit};

/// One optimizer run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub scheme: Scheme,
    pub seed: u64,
}

pub struct JobResult {
    pub job: Job,
    pub trace: Trace,
    pub path: PathBuf,
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "fingerprint",
    "scheme",
    "alpha",
    "seeds",
    "final_obj_avg_mean",
    "final_obj_avg_se",
    "best_obj_avg_mean",
    "final_test_mean",
    "final_test_se",
    "best_test_mean",
    "baseline",
    "rate_slope",
    "rate_intercept",
    "rate_r2",
    "rate_points",
    "rate_skipped",
];

fn run_config(cfg: &ExperimentConfig, problem: &Problem, scheme: Scheme) -> CliResult<RunConfig> {
    let a = &cfg.algorithm;
    let schedule = cfg.schedule(scheme.alpha().unwrap_or(a.alpha))?;
    let mut run = SgdConfig::new(schedule, a.iterations, scheme)
        .with_domain(problem.domain.clone())
        .with_checkpoints(cfg.checkpoints());
    run.batch_size = a.batch_size;
    run.gradient_bound = a.gradient_bound;
    run.record_wall_time = cfg.evaluation.record_wall_time;
    Ok(run)
}

fn run_job(
    cfg: &ExperimentConfig,
    problem: &Problem,
    fingerprint: &str,
    job: Job,
    dir: &Path,
) -> CliResult<JobResult> {
    let run = run_config(cfg, problem, job.scheme)?;
    let path = dir.join(trace_name(&job.scheme, job.seed));
    let mut writer = TraceWriter::create(
        &path,
        fingerprint,
        job.seed,
        &job.scheme,
        cfg.evaluation.test_metric,
        &problem.loss,
        problem.test.as_ref(),
    )?;
    let mut stream = SampleStream::new(job.seed, problem.train.len())?;
    let result = sgd_piwa_observed(
        &problem.loss,
        &problem.train,
        &problem.x1,
        &run,
        &mut stream,
        &mut writer,
    );
    if let Some(e) = writer.take_failure() {
        return Err(e);
    }
    Ok(JobResult {
        job,
        trace: result?,
        path,
    })
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))
}

/// Runs every job, at most `threads` at a time, each writing its own trace.
/// Results come back in job order.
pub fn run_jobs(
    cfg: &ExperimentConfig,
    problem: &Problem,
    jobs: &[Job],
    dir: &Path,
    threads: usize,
) -> CliResult<Vec<JobResult>> {
    create_dir(dir)?;
    let fingerprint = cfg.fingerprint();
    pool(threads)?.install(|| {
        jobs.par_iter()
            .map(|&job| run_job(cfg, problem, &fingerprint, job, dir))
            .collect()
    })
}

/// `run`: the configured scheme over every seed.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<Vec<JobResult>> {
    let problem = Problem::build(cfg, 0)?;
    let scheme = cfg.scheme(cfg.algorithm.scheme, cfg.algorithm.alpha)?;
    let jobs: Vec<Job> = cfg.seeds.iter().map(|&seed| Job { scheme, seed }).collect();
    run_jobs(cfg, &problem, &jobs, &cfg.output.dir, cfg.sweep.threads)
}

/// Schemes of a sweep; schemes with a weight exponent expand over `sweep.alphas`.
pub fn sweep_schemes(cfg: &ExperimentConfig) -> CliResult<Vec<Scheme>> {
    let mut out = Vec::new();
    for &name in &cfg.sweep.schemes {
        if name.uses_alpha() {
            for &a in &cfg.sweep.alphas {
                out.push(cfg.scheme(name, a)?);
            }
        } else {
            out.push(cfg.scheme(name, cfg.algorithm.alpha)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("sweep has no schemes"));
    }
    Ok(out)
}

/// Aggregate row of one scheme over the seeds of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub seeds: usize,
    pub final_obj_avg_mean: Option<f64>,
    pub final_obj_avg_se: Option<f64>,
    /// Mean over seeds of the smallest averaged-iterate objective along the
    /// trajectory.
    pub best_obj_avg_mean: Option<f64>,
    pub final_test_mean: Option<f64>,
    pub final_test_se: Option<f64>,
    /// Mean over seeds of the smallest test metric along the trajectory.
    pub best_test_mean: Option<f64>,
    pub baseline: Option<f64>,
    pub rate: Option<RateFit>,
}

pub struct SweepOutcome {
    pub results: Vec<JobResult>,
    pub summaries: Vec<SchemeSummary>,
    pub summary_path: PathBuf,
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(m)`; zero for a single value).
pub fn mean_se(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let se = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    Some((mean, se))
}

fn min_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    v.fold(None, |acc: Option<f64>, x| {
        Some(acc.map_or(x, |a| a.min(x)))
    })
}

/// Baseline for gap curves, following `evaluation.baseline`.
pub fn baseline(
    cfg: &ExperimentConfig,
    problem: &Problem,
    results: &[JobResult],
) -> CliResult<f64> {
    let e = &cfg.evaluation;
    let best = min_of(results.iter().flat_map(|r| {
        r.trace
            .checkpoints
            .iter()
            .flat_map(|c| c.obj_avg.into_iter().chain(std::iter::once(c.obj_last)))
    }))
    .ok_or_else(|| CliError::Numeric("no objective values recorded".into()))?;
    Ok(match e.baseline {
        BaselineRule::Value => e.baseline_value.expect("validated"),
        BaselineRule::Best => best - e.baseline_slack,
        BaselineRule::Auto => match problem.reference()? {
            Some(r) => best.min(r.value) - r.slack - e.baseline_slack,
            None => best - e.baseline_slack,
        },
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    runs: &[&JobResult],
    base: Option<f64>,
) -> SchemeSummary {
    let finals: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.trace.last_checkpoint().obj_avg)
        .collect();
    let bests: Vec<f64> = runs
        .iter()
        .filter_map(|r| min_of(r.trace.checkpoints.iter().filter_map(|c| c.obj_avg)))
        .collect();
    let tests: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.trace.last_checkpoint().test_metric)
        .collect();
    let best_tests: Vec<f64> = runs
        .iter()
        .filter_map(|r| min_of(r.trace.checkpoints.iter().filter_map(|c| c.test_metric)))
        .collect();
    let fin = mean_se(&finals);
    let test = mean_se(&tests);
    let rate = base.and_then(|b| {
        // mean gap over seeds at every checkpoint where all seeds report an average
        let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in runs {
            for c in &r.trace.checkpoints {
                if let Some(v) = c.obj_avg {
                    by_t.entry(c.t).or_default().push(v - b);
                }
            }
        }
        let points: Vec<(f64, f64)> = by_t
            .into_iter()
            .filter(|(t, v)| *t >= cfg.evaluation.fit_from && v.len() == runs.len())
            .map(|(t, v)| (t as f64, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        fit_rate_skipping(&points).ok()
    });
    SchemeSummary {
        scheme,
        seeds: runs.len(),
        final_obj_avg_mean: fin.map(|p| p.0),
        final_obj_avg_se: fin.map(|p| p.1),
        best_obj_avg_mean: mean_se(&bests).map(|p| p.0),
        final_test_mean: test.map(|p| p.0),
        final_test_se: test.map(|p| p.1),
        best_test_mean: mean_se(&best_tests).map(|p| p.0),
        baseline: base,
        rate,
    }
}

/// `sweep`: every (scheme, alpha) over every seed, then `summary.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<SweepOutcome> {
    let problem = Problem::build(cfg, 0)?;
    let schemes = sweep_schemes(cfg)?;
    let jobs: Vec<Job> = schemes
        .iter()
        .flat_map(|&scheme| cfg.seeds.iter().map(move |&seed| Job { scheme, seed }))
        .collect();
    let dir = &cfg.output.dir;
    let results = run_jobs(cfg, &problem, &jobs, dir, cfg.sweep.threads)?;

    let base = if cfg.evaluation.fit_rate {
        Some(baseline(cfg, &problem, &results)?)
    } else {
        None
    };
    let fingerprint = cfg.fingerprint();
    let summary_path = dir.join("summary.csv");
    let mut file = CsvFile::create(&summary_path, SUMMARY_HEADER)?;
    let mut summaries = Vec::with_capacity(schemes.len());
    for &scheme in &schemes {
        let runs: Vec<&JobResult> = results.iter().filter(|r| r.job.scheme == scheme).collect();
        let s = summarize(cfg, scheme, &runs, base);
        let rate = s.rate.as_ref();
        file.row([
            fingerprint.clone(),
            scheme_tag(&scheme),
            opt(scheme.alpha()),
            s.seeds.to_string(),
            opt(s.final_obj_avg_mean),
            opt(s.final_obj_avg_se),
            opt(s.best_obj_avg_mean),
            opt(s.final_test_mean),
            opt(s.final_test_se),
            opt(s.best_test_mean),
            opt(s.baseline),
            opt(rate.map(|r| r.slope)),
            opt(rate.map(|r| r.intercept)),
            opt(rate.map(|r| r.r_squared)),
            rate.map(|r| r.points.len().to_string()).unwrap_or_default(),
            rate.map(|r| r.skipped.to_string()).unwrap_or_default(),
        ])?;
        summaries.push(s);
    }
    Ok(SweepOutcome {
        results,
        summaries,
        summary_path,
    })
}

pub struct StabilityOutcome {
    pub report: piwa_core::stability::StabilityReport<f64>,
    pub trials_path: PathBuf,
    pub summary_path: PathBuf,
}

pub const STABILITY_SUMMARY_HEADER: [&str; 14] = [
    "fingerprint",
    "alpha",
    "trials",
    "mean_param_dev_avg",
    "se_param_dev_avg",
    "max_param_dev_avg",
    "mean_param_dev_last",
    "max_param_dev_last",
    "mean_loss_dev",
    "max_loss_dev",
    "bound_kind",
    "thm_bound",
    "param_bound",
    "within_param_bound",
];

/// `stability`: coupled runs on neighbouring datasets for every alpha.
/// Replacement candidates and probe points come from samples held out of
/// training (fresh draws for synthetic sources, the test split for files).
pub fn cmd_stability(cfg: &ExperimentConfig) -> CliResult<StabilityOutcome> {
    let st = &cfg.stability;
    let problem = Problem::build(cfg, st.pool_size + st.probe_size)?;
    let held = &problem.held_out;
    let pool_end = st.pool_size.min(held.len());
    let replacements = &held[..pool_end];
    let probe = &held[pool_end..(pool_end + st.probe_size).min(held.len())];
    if replacements.is_empty() {
        return Err(CliError::config(
            "no held-out samples for the replacement pool",
        ));
    }
    if probe.is_empty() {
        return Err(CliError::config(
            "no held-out samples left for the probe set",
        ));
    }
    let scheme = cfg.scheme(SchemeName::Piwa, cfg.algorithm.alpha)?;
    let run = run_config(cfg, &problem, scheme)?
        .with_checkpoints(piwa_core::optimizer::Checkpoints::FinalOnly);
    let constants = problem.loss.constants();
    let bound_inputs = BoundInputs {
        g: st.g.or(constants.lipschitz),
        l: st.l.or(constants.smoothness),
        lambda: match run.schedule {
            piwa_core::optimizer::StepSchedule::StronglyConvex { lambda, .. } => Some(lambda),
            _ => constants.strong_convexity,
        },
        d: problem.domain.radius().map(|r| 2.0 * r),
        unit_bounded: st.unit_bounded || constants.unit_bounded,
        ..Default::default()
    };
    let bound = match st.bound {
        BoundKind::None => StabilityBound::None,
        BoundKind::Convex => StabilityBound::Convex,
        BoundKind::StronglyConvex => StabilityBound::StronglyConvex,
    };
    if bound != StabilityBound::None && !problem.loss.kind().is_smooth() {
        return Err(CliError::config("bound comparison needs a smooth loss"));
    }
    let sweep = SweepConfig {
        run,
        trials: st.trials,
        alphas: st.alphas.clone(),
        seed: st.seed,
        bound,
        bound_inputs,
    };
    let threads = cfg.sweep.threads;
    let report = pool(threads)?.install(|| {
        stability_sweep(
            &problem.loss,
            &problem.train,
            replacements,
            probe,
            &problem.x1,
            &sweep,
        )
    })?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let fingerprint = cfg.fingerprint();
    let bound_for = |alpha: f64| {
        report
            .summaries
            .iter()
            .find(|s| s.alpha == alpha)
            .and_then(|s| s.bound)
    };
    let trials_path = dir.join("stability.csv");
    let mut file = CsvFile::create(&trials_path, STABILITY_HEADER)?;
    for t in &report.trials {
        file.row([
            fingerprint.clone(),
            t.seed.to_string(),
            num(t.alpha),
            t.trial.to_string(),
            num(t.outcome.param_dev_avg),
            num(t.outcome.param_dev_last),
            num(t.outcome.loss_dev_max),
            opt(bound_for(t.alpha)),
        ])?;
    }
    let kind = match st.bound {
        BoundKind::None => "",
        BoundKind::Convex => "convex",
        BoundKind::StronglyConvex => "strongly-convex",
    };
    let summary_path = dir.join("stability_summary.csv");
    let mut file = CsvFile::create(&summary_path, STABILITY_SUMMARY_HEADER)?;
    for s in &report.summaries {
        file.row([
            fingerprint.clone(),
            num(s.alpha),
            s.trials.to_string(),
            num(s.mean_param_dev_avg),
            num(s.se_param_dev_avg),
            num(s.max_param_dev_avg),
            num(s.mean_param_dev_last),
            num(s.max_param_dev_last),
            num(s.mean_loss_dev),
            num(s.max_loss_dev),
            kind.to_string(),
            opt(s.bound),
            opt(s.param_bound),
            s.within_param_bound
                .map(|w| w.to_string())
                .unwrap_or_default(),
        ])?;
    }
    Ok(StabilityOutcome {
        report,
        trials_path,
        summary_path,
    })
}

pub const STAGEWISE_HEADER: [&str; 13] = [
    "fingerprint",
    "seed",
    "stage",
    "eps_k",
    "eta_k",
    "t_k",
    "radius",
    "c",
    "d",
    "objective",
    "gap",
    "target",
    "within_target",
];

/// One row of `stagewise.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub seed: u64,
    pub stage: usize,
    pub objective: f64,
    pub gap: Option<f64>,
    /// `eps0 / 2^k`.
    pub target: f64,
}

pub struct StagewiseOutcome {
    pub rows: Vec<StageRow>,
    pub eps0: f64,
    pub f_star: Option<f64>,
    pub path: PathBuf,
}

/// `stagewise`: the proximal stagewise method for every seed.
pub fn cmd_stagewise(cfg: &ExperimentConfig) -> CliResult<StagewiseOutcome> {
    let sw = &cfg.stagewise;
    let problem = Problem::build(cfg, 0)?;
    let mu = sw
        .mu
        .or(problem.pl_mu)
        .ok_or_else(|| CliError::config("stagewise needs stagewise.mu for this instance"))?;
    let f_star = match sw.f_star {
        Some(v) => Some(v),
        None => problem.reference()?.map(|r| r.value - r.slack),
    };
    let eps0 = match (sw.eps0, f_star) {
        (Some(e), _) => e,
        (None, Some(f)) => problem.objective(&problem.x1)? - f,
        (None, None) => {
            return Err(CliError::config(
                "stagewise needs stagewise.eps0 or a known optimum",
            ))
        }
    };
    if eps0.is_nan() || eps0 <= 0.0 {
        return Err(CliError::config(format!(
            "initial error bound must be positive, got {eps0}"
        )));
    }
    let mut config = StagewiseConfig::new(
        sw.stages,
        StageInputs {
            eps0,
            mu,
            alpha: sw.alpha,
            delta: sw.delta,
            c: sw.c,
            d: sw.d,
            smoothness: None,
        },
    );
    config.g = sw.g;
    config.gamma = sw.gamma;
    config.radius_rule = cfg.radius_rule();
    config.max_stage_iterations = sw.max_stage_iterations;

    let results: Vec<(u64, piwa_core::optimizer::StagewiseResult<f64>)> = pool(cfg.sweep.threads)?
        .install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let mut stream = SampleStream::new(seed, problem.train.len())?;
                    let r = stagewise(
                        &problem.loss,
                        &problem.train,
                        &problem.x1,
                        &config,
                        &mut stream,
                    )?;
                    Ok((seed, r))
                })
                .collect::<CliResult<_>>()
        })?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let fingerprint = cfg.fingerprint();
    let path = dir.join("stagewise.csv");
    let mut file = CsvFile::create(&path, STAGEWISE_HEADER)?;
    let mut rows = Vec::new();
    for (seed, r) in &results {
        for s in &r.stages {
            let p = &s.params;
            let target = eps0 / 2f64.powi(p.k as i32);
            let gap = f_star.map(|f| s.objective - f);
            file.row([
                fingerprint.clone(),
                seed.to_string(),
                p.k.to_string(),
                num(p.eps_k),
                num(p.eta_k),
                p.t_k.to_string(),
                num(p.radius),
                num(p.c),
                num(p.d),
                num(s.objective),
                opt(gap),
                num(target),
                gap.map(|g| (g <= target).to_string()).unwrap_or_default(),
            ])?;
            rows.push(StageRow {
                seed: *seed,
                stage: p.k,
                objective: s.objective,
                gap,
                target,
            });
        }
    }
    Ok(StagewiseOutcome {
        rows,
        eps0,
        f_star,
        path,
    })
}

/// `gen-data`: writes the configured training (and test) set in LIBSVM format.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let problem = Problem::build(cfg, 0)?;
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut out = Vec::new();
    let sets = std::iter::once(("train.libsvm", &problem.train))
        .chain(problem.test.as_ref().map(|t| ("test.libsvm", t)));
    for (name, data) in sets {
        let path = dir.join(name);
        std::fs::write(&path, serialize_libsvm(data))
            .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))?;
        out.push(path);
    }
    Ok(out)
}

/// Options of `fit-rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRateArgs {
    pub files: Vec<PathBuf>,
    pub baseline: f64,
    /// Subtracted from the baseline.
    pub slack: f64,
    /// First iteration included.
    pub from: usize,
    /// `obj_avg`, `obj_last` or `test_metric`.
    pub column: String,
}

/// `fit-rate`: averages `column - (baseline - slack)` over all rows sharing
/// an iteration across the given trace files, then fits the log-log line.
pub fn cmd_fit_rate(args: &FitRateArgs) -> CliResult<RateFit> {
    if args.files.is_empty() {
        return Err(CliError::config("fit-rate needs at least one trace file"));
    }
    let floor = args.baseline - args.slack;
    let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut fingerprint: Option<String> = None;
    for path in &args.files {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| CliError::io(&format!("cannot read {}", path.display()), e))?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::data(format!("{} has no `{name}` column", path.display())))
        };
        let (fp, tc, vc) = (col("fingerprint")?, col("t")?, col(&args.column)?);
        for rec in reader.records() {
            let rec = rec?;
            match &fingerprint {
                None => fingerprint = Some(rec[fp].to_string()),
                Some(f) if f != &rec[fp] => {
                    return Err(CliError::data(format!(
                        "{} mixes fingerprint {} with {f}",
                        path.display(),
                        &rec[fp]
                    )))
                }
                Some(_) => {}
            }
            let t: usize = rec[tc].parse().map_err(|_| {
                CliError::data(format!(
                    "bad iteration `{}` in {}",
                    &rec[tc],
                    path.display()
                ))
            })?;
            if t < args.from || rec[vc].is_empty() {
                continue;
            }
            let v: f64 = rec[vc].parse().map_err(|_| {
                CliError::data(format!("bad value `{}` in {}", &rec[vc], path.display()))
            })?;
            by_t.entry(t).or_default().push(v - floor);
        }
    }
    let points: Vec<(f64, f64)> = by_t
        .into_iter()
        .map(|(t, v)| (t as f64, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    fit_rate_skipping(&points)
}
