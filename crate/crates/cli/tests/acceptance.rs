//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use piwa_cli::commands::{
    cmd_run, cmd_stability, cmd_stagewise, cmd_sweep, JobResult, SweepOutcome,
};
use piwa_cli::output::{STABILITY_HEADER, TRACE_HEADER};
use piwa_cli::problem::Problem;
use piwa_cli::ExperimentConfig;
use piwa_core::averaging::{h_value, AveragingState, Scheme};
use piwa_core::bounds::{
    bound_opt_strongly, harmonic_upper, power_sum, power_sum_lower, power_sum_upper,
    shifted_power_sum_upper, BoundInputs,
};
use piwa_core::data::ridge_solution;
use piwa_core::sampling::rng_from_seed;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(text)
        .unwrap_or_else(|e| panic!("bad test config: {e}\n{text}"));
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn seeds(k: u64) -> String {
    let list: Vec<String> = (0..k).map(|s| s.to_string()).collect();
    format!("seeds = [{}]\n", list.join(", "))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and standard error of the mean.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
    (m, (var / v.len() as f64).sqrt())
}

fn final_avg(r: &JobResult) -> f64 {
    r.trace.last_checkpoint().obj_avg.expect("average recorded")
}

fn runs_for(out: &SweepOutcome, alpha: f64) -> Vec<&JobResult> {
    out.results
        .iter()
        .filter(|r| r.job.scheme == Scheme::piwa(alpha))
        .collect()
}

/// Weighted means of non-increasing sequences do not increase with the exponent.
fn monotone_h() -> Outcome {
    let alphas = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
    let mut rng = rng_from_seed(11);
    let mut worst = f64::NEG_INFINITY;
    for case in 0..1000 {
        let len = rng.random_range(1..=1000);
        let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(0.5..10.0)).collect();
        if case % 2 == 0 {
            // plateaus
            v.iter_mut().for_each(|x| *x = (*x * 2.0).round() / 2.0);
        }
        v.sort_by(|a, b| b.total_cmp(a));
        let h: Vec<f64> = alphas.iter().map(|&a| h_value(a, &v).unwrap()).collect();
        for w in h.windows(2) {
            worst = worst.max((w[1] - w[0]) / w[0].abs());
        }
    }
    outcome(worst <= 1e-12, format!("max relative increase {worst:.3e}"))
}

/// Batch recomputation of a scheme's average over `xs`.
fn batch_average(scheme: Scheme, xs: &[Vec<f64>]) -> Vec<f64> {
    let t_max = xs.len();
    let weights: Vec<f64> = match scheme {
        Scheme::Last => (1..=t_max)
            .map(|t| if t == t_max { 1.0 } else { 0.0 })
            .collect(),
        Scheme::Uniform => vec![1.0; t_max],
        Scheme::Piwa { alpha } => (1..=t_max)
            .map(|t| (t as f64 / t_max as f64).powf(alpha))
            .collect(),
        Scheme::Suffix { fraction } => {
            let kept = (fraction * t_max as f64).ceil() as usize;
            (1..=t_max)
                .map(|t| if t > t_max - kept { 1.0 } else { 0.0 })
                .collect()
        }
        Scheme::PolyDecay { eta } => {
            // weight of x_s is c_s prod_{k > s} (1 - c_k)
            let c = |t: usize| (eta + 1.0) / (t as f64 + eta);
            let mut w = vec![0.0; t_max];
            let mut tail = 1.0;
            for s in (1..=t_max).rev() {
                w[s - 1] = c(s) * tail;
                tail *= 1.0 - c(s);
            }
            w
        }
        Scheme::Ema { beta } => (1..=t_max)
            .map(|s| {
                let decay = beta.powi((t_max - s) as i32);
                if s == 1 {
                    decay
                } else {
                    (1.0 - beta) * decay
                }
            })
            .collect(),
    };
    let total: f64 = weights.iter().sum();
    let d = xs[0].len();
    (0..d)
        .map(|j| xs.iter().zip(&weights).map(|(x, w)| w * x[j]).sum::<f64>() / total)
        .collect()
}

fn online_batch() -> Outcome {
    let t_max = 10_000;
    let d = 5;
    let mut rng = rng_from_seed(5);
    let mut x = vec![5.0; d];
    let xs: Vec<Vec<f64>> = (0..t_max)
        .map(|_| {
            x.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
            x.clone()
        })
        .collect();
    let mut schemes = vec![
        Scheme::Last,
        Scheme::Uniform,
        Scheme::Suffix { fraction: 0.5 },
        Scheme::PolyDecay { eta: 3.0 },
        Scheme::Ema { beta: 0.9 },
    ];
    schemes.extend([0.0, 1.0, 5.0, 20.0].map(Scheme::piwa));
    let mut worst = 0.0f64;
    let mut worst_scheme = String::new();
    for scheme in schemes {
        let mut st = AveragingState::<f64>::new(scheme)
            .unwrap()
            .with_horizon(t_max)
            .unwrap();
        for (i, xi) in xs.iter().enumerate() {
            st.update(xi, i + 1).unwrap();
        }
        let online = st.finalize().unwrap();
        let batch = batch_average(scheme, &xs);
        let num = online
            .iter()
            .zip(&batch)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let den = batch.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if num / den > worst {
            worst = num / den;
            worst_scheme = format!("{scheme:?}");
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max relative error {worst:.3e} ({worst_scheme})"),
    )
}

fn strongly_convex_rate(dir: &Path) -> Outcome {
    let base = format!(
        "problem.loss = \"least-squares\"\n\
         problem.l2 = 0.1\n\
         problem.data.source = \"rank-deficient-ls\"\n\
         problem.data.n = 200\n\
         problem.data.d = 20\n\
         problem.data.rank = 20\n\
         problem.data.noise = 0.5\n\
         problem.data.seed = 0\n\
         algorithm.schedule = \"strongly-convex\"\n\
         algorithm.iterations = 100000\n\
         evaluation.checkpoints = \"log-spaced\"\n\
         evaluation.per_decade = 4\n\
         evaluation.fit_rate = true\n\
         evaluation.fit_from = 10000\n\
         sweep.alphas = [0.0, 1.0]\n{}",
        seeds(10)
    );
    let probe = config(&base, dir);
    let problem = Problem::build(&probe, 0).unwrap();
    let (x_star, f_star) = ridge_solution(&problem.train, 0.1).unwrap();
    let radius = 2.0 * x_star.norm() + 1.0;
    let cfg = config(&format!("{base}algorithm.radius = {radius}\n"), dir);
    let out = cmd_sweep(&cfg).unwrap();
    let s1 = &out.summaries[1];
    let gap = |alpha: f64| {
        mean(
            &runs_for(&out, alpha)
                .iter()
                .map(|r| final_avg(r) - f_star)
                .collect::<Vec<_>>(),
        )
    };
    let (g0, g1) = (gap(0.0), gap(1.0));
    let slope = s1.rate.as_ref().map_or(f64::NAN, |r| r.slope);
    outcome(
        (-1.2..=-0.8).contains(&slope) && g1 <= g0,
        format!("alpha=1 slope {slope:.3}; mean final gap alpha=1 {g1:.3e} vs alpha=0 {g0:.3e}"),
    )
}

fn convex_rate(dir: &Path) -> Outcome {
    let cfg = config(
        &format!(
            "problem.loss = \"hinge\"\n\
             problem.data.source = \"synthetic-classification\"\n\
             problem.data.n = 1000\n\
             problem.data.d = 50\n\
             problem.data.flip_rate = 0.1\n\
             problem.data.margin = 0.05\n\
             problem.data.seed = 0\n\
             algorithm.schedule = \"convex-sqrt\"\n\
             algorithm.eta1 = 10.0\n\
             algorithm.radius = 10.0\n\
             algorithm.iterations = 100000\n\
             evaluation.checkpoints = \"log-spaced\"\n\
             evaluation.fit_rate = true\n\
             evaluation.fit_from = 10000\n\
             evaluation.baseline = \"auto\"\n\
             sweep.alphas = [1.0]\n{}",
            seeds(10)
        ),
        dir,
    );
    let out = cmd_sweep(&cfg).unwrap();
    let s = &out.summaries[0];
    let rate = s.rate.as_ref().expect("rate fitted");
    outcome(
        (-0.65..=-0.35).contains(&rate.slope),
        format!(
            "alpha=1 slope {:.3} (r2 {:.3}, {} points, baseline {:.6})",
            rate.slope,
            rate.r_squared,
            rate.points.len(),
            s.baseline.unwrap()
        ),
    )
}

fn bound_domination(dir: &Path) -> Outcome {
    let lambda: f64 = 0.01;
    let radius = (2.0 * std::f64::consts::LN_2 / lambda).sqrt();
    let cfg = config(
        &format!(
            "problem.loss = \"logistic\"\n\
             problem.l2 = {lambda}\n\
             problem.data.source = \"synthetic-classification\"\n\
             problem.data.n = 500\n\
             problem.data.d = 20\n\
             problem.data.flip_rate = 0.1\n\
             problem.data.seed = 0\n\
             algorithm.schedule = \"strongly-convex\"\n\
             algorithm.radius = {radius}\n\
             algorithm.iterations = 100000\n\
             evaluation.checkpoints = \"log-spaced\"\n\
             sweep.alphas = [0.0, 1.0, 5.0]\n{}",
            seeds(10)
        ),
        dir,
    );
    let problem = Problem::build(&cfg, 0).unwrap();
    let reference = problem.reference().unwrap().expect("smooth reference");
    let f_lower = reference.value - reference.slack;
    // declared gradient bound over the ball
    let g = problem.train.max_feature_norm() + lambda * radius;
    let out = cmd_sweep(&cfg).unwrap();
    let mut worst = 0.0f64;
    let mut violations = 0;
    for r in &out.results {
        let alpha = r.job.scheme.alpha().unwrap();
        for c in &r.trace.checkpoints {
            let bound = bound_opt_strongly(&BoundInputs {
                alpha: Some(alpha),
                g: Some(g),
                lambda: Some(lambda),
                t: Some(c.t),
                ..Default::default()
            })
            .unwrap();
            let ratio = (c.obj_avg.unwrap() - f_lower) / bound;
            worst = worst.max(ratio);
            if ratio > 1.0 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!(
            "max gap/bound {worst:.4} over {} runs, {violations} violations",
            out.results.len()
        ),
    )
}

fn stagewise_decrease(dir: &Path) -> Outcome {
    let cfg = config(
        &format!(
            "problem.loss = \"least-squares\"\n\
             problem.data.source = \"rank-deficient-ls\"\n\
             problem.data.n = 100\n\
             problem.data.d = 10\n\
             problem.data.rank = 2\n\
             problem.data.noise = 0.0\n\
             algorithm.schedule = \"constant\"\n\
             algorithm.eta = 0.1\n\
             algorithm.iterations = 1\n\
             stagewise.stages = 6\n\
             stagewise.alpha = 1.0\n\
             stagewise.delta = 0.1\n{}",
            seeds(10)
        ),
        dir,
    );
    let out = cmd_stagewise(&cfg).unwrap();
    let good = cfg
        .seeds
        .iter()
        .filter(|&&s| {
            out.rows
                .iter()
                .filter(|r| r.seed == s)
                .all(|r| r.gap.unwrap() <= r.target)
        })
        .count();
    let worst = out
        .rows
        .iter()
        .map(|r| r.gap.unwrap() / r.target)
        .fold(0.0, f64::max);
    outcome(
        good >= 9 && out.rows.len() == 60,
        format!("{good}/10 seeds within eps0/2^k at every stage; max gap/target {worst:.3}"),
    )
}

fn stability_bound(dir: &Path) -> Outcome {
    let base = "problem.loss = \"logistic\"\n\
                problem.data.source = \"synthetic-classification\"\n\
                problem.data.n = 200\n\
                problem.data.d = 20\n\
                problem.data.flip_rate = 0.1\n\
                problem.data.seed = 0\n\
                algorithm.schedule = \"convex-sqrt\"\n\
                algorithm.iterations = 10000\n\
                stability.trials = 50\n\
                stability.alphas = [0.0, 1.0, 5.0]\n\
                stability.seed = 7\n\
                stability.bound = \"convex\"\n\
                stability.pool_size = 200\n\
                stability.probe_size = 1000\n";
    let probe = config(&format!("{base}algorithm.eta1 = 1.0\n"), dir);
    let a = Problem::build(&probe, 0).unwrap().train.max_feature_norm();
    let l = a * a / 4.0;
    let cfg = config(
        &format!(
            "{base}algorithm.eta1 = {}\nstability.g = {a}\nstability.l = {l}\n",
            2.0 / l
        ),
        dir,
    );
    let out = cmd_stability(&cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &out.report.summaries {
        let bound = s.bound.unwrap();
        let within = s.within_param_bound.unwrap() as f64 / s.trials as f64;
        pass &= s.trials >= 50 && s.mean_param_dev_avg <= bound && within >= 0.95;
        parts.push(format!(
            "alpha={}: mean dev {:.3e} <= {:.3e}, last-iterate within {:.0}%",
            s.alpha,
            s.mean_param_dev_avg,
            bound,
            100.0 * within
        ));
    }
    outcome(pass, parts.join("; "))
}

fn tradeoff(dir: &Path) -> Outcome {
    let base = format!(
        "problem.loss = \"logistic\"\n\
         problem.data.source = \"synthetic-classification\"\n\
         problem.data.n = 500\n\
         problem.data.n_test = 2000\n\
         problem.data.d = 50\n\
         problem.data.flip_rate = 0.15\n\
         problem.data.seed = 0\n\
         algorithm.schedule = \"convex-sqrt\"\n\
         algorithm.iterations = 20000\n\
         evaluation.checkpoints = \"final\"\n\
         evaluation.test_metric = \"misclassification\"\n{}",
        seeds(20)
    );
    // tune eta1 on the uniform average's training objective
    let grid = [5.0, 1.0, 0.1, 0.01];
    let mut best = (f64::INFINITY, grid[0]);
    for eta1 in grid {
        let cfg = config(
            &format!("{base}algorithm.eta1 = {eta1}\nsweep.alphas = [0.0]\n"),
            dir,
        );
        let out = cmd_sweep(&cfg).unwrap();
        let m = out.summaries[0].final_obj_avg_mean.unwrap();
        if m < best.0 {
            best = (m, eta1);
        }
    }
    let eta1 = best.1;
    let cfg = config(
        &format!("{base}algorithm.eta1 = {eta1}\nsweep.alphas = [0.0, 1.0, 5.0, 20.0]\n"),
        dir,
    );
    let out = cmd_sweep(&cfg).unwrap();
    let alphas = [0.0, 1.0, 5.0, 20.0];
    let train: Vec<(f64, f64)> = alphas
        .iter()
        .map(|&a| {
            mean_se(
                &runs_for(&out, a)
                    .iter()
                    .map(|r| final_avg(r))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let test: Vec<(f64, f64)> = alphas
        .iter()
        .map(|&a| {
            mean_se(
                &runs_for(&out, a)
                    .iter()
                    .map(|r| r.trace.last_checkpoint().test_metric.unwrap())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let pair_se = |a: (f64, f64), b: (f64, f64)| (a.1 * a.1 + b.1 * b.1).sqrt();
    let train_ok = train
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + pair_se(w[0], w[1]));
    let test_ok = test
        .windows(2)
        .all(|w| w[1].0 >= w[0].0 - pair_se(w[0], w[1]));
    let fmt = |v: &[(f64, f64)]| {
        v.iter()
            .map(|p| format!("{:.5}", p.0))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        train_ok && test_ok,
        format!(
            "eta1={eta1}; train [{}] non-increasing: {train_ok}; test [{}] non-decreasing: {test_ok}",
            fmt(&train),
            fmt(&test)
        ),
    )
}

fn brackets() -> Outcome {
    let alphas = [0.1, 0.5, 1.0, 2.0, 5.0, 20.0];
    let s_max = 10_000;
    let mut failures = Vec::new();
    let mut harmonic = 0.0;
    for s in 1..=s_max {
        harmonic += 1.0 / s as f64;
        if harmonic > harmonic_upper(s) {
            failures.push(format!("harmonic S={s}"));
        }
    }
    for &a in &alphas {
        let mut sum = 0.0;
        let mut shifted = 0.0;
        for s in 1..=s_max {
            // same summation order as power_sum
            sum += (s as f64).powf(a);
            shifted += (s as f64).powf(a - 1.0);
            if s % 997 == 0 || s == s_max {
                assert_eq!(sum, power_sum(s, a).unwrap());
            }
            if sum < power_sum_lower(s, a) || sum > power_sum_upper(s, a) {
                failures.push(format!("power sum a={a} S={s}"));
            }
            if shifted > shifted_power_sum_upper(s, a).unwrap() {
                failures.push(format!("shifted sum a={a} S={s}"));
            }
        }
    }
    let n = failures.len();
    outcome(
        n == 0,
        format!(
            "{n} violations over S <= {s_max} {:?}",
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let text = format!(
        "problem.loss = \"logistic\"\n\
         problem.l2 = 0.01\n\
         problem.data.source = \"synthetic-classification\"\n\
         problem.data.n = 100\n\
         problem.data.n_test = 50\n\
         problem.data.d = 5\n\
         algorithm.schedule = \"strongly-convex\"\n\
         algorithm.iterations = 2000\n\
         evaluation.test_metric = \"misclassification\"\n\
         stability.trials = 2\n\
         stability.pool_size = 10\n\
         stability.probe_size = 20\n{}",
        seeds(3)
    );
    let (a, b) = (dir.join("a"), dir.join("b"));
    let ra = cmd_run(&config(&text, &a)).unwrap();
    let rb = cmd_run(&config(&text, &b)).unwrap();
    let mut identical = ra.len() == rb.len();
    let mut header_ok = true;
    for (x, y) in ra.iter().zip(&rb) {
        let (tx, ty) = (
            std::fs::read(&x.path).unwrap(),
            std::fs::read(&y.path).unwrap(),
        );
        identical &= tx == ty;
        let first = String::from_utf8(tx)
            .unwrap()
            .lines()
            .next()
            .unwrap_or("")
            .to_string();
        header_ok &= first == TRACE_HEADER.join(",");
    }
    let st = cmd_stability(&config(&text, &dir.join("s"))).unwrap();
    let text_s = std::fs::read_to_string(&st.trials_path).unwrap();
    header_ok &= text_s.lines().next() == Some(STABILITY_HEADER.join(",").as_str());
    outcome(
        identical && header_ok,
        format!(
            "{} trace pairs byte-identical: {identical}; headers exact: {header_ok}",
            ra.len()
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(usize, &str, Duration, Check)> = vec![
        (
            1,
            "weighted-mean monotonicity in alpha",
            Duration::from_secs(5),
            Box::new(monotone_h),
        ),
        (
            2,
            "online/batch averaging equivalence",
            Duration::from_secs(5),
            Box::new(online_batch),
        ),
        (
            3,
            "strongly convex rate",
            Duration::from_secs(120),
            Box::new(|| strongly_convex_rate(&root.join("c3"))),
        ),
        (
            4,
            "convex rate",
            Duration::from_secs(120),
            Box::new(|| convex_rate(&root.join("c4"))),
        ),
        (
            5,
            "gap below strongly convex bound",
            Duration::from_secs(60),
            Box::new(|| bound_domination(&root.join("c5"))),
        ),
        (
            6,
            "stagewise geometric decrease",
            Duration::from_secs(180),
            Box::new(|| stagewise_decrease(&root.join("c6"))),
        ),
        (
            7,
            "convex stability bound",
            Duration::from_secs(180),
            Box::new(|| stability_bound(&root.join("c7"))),
        ),
        (
            8,
            "alpha trade-off",
            Duration::from_secs(180),
            Box::new(|| tradeoff(&root.join("c8"))),
        ),
        (
            9,
            "power-sum brackets",
            Duration::from_secs(5),
            Box::new(brackets),
        ),
        (
            10,
            "determinism and CSV headers",
            Duration::from_secs(60),
            Box::new(|| determinism(&root.join("c10"))),
        ),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in &criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed < *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
