use std::path::Path;
use std::process::Command;

use piwa_cli::commands::{cmd_fit_rate, cmd_run, cmd_stability, cmd_sweep, FitRateArgs};
use piwa_cli::output::{STABILITY_HEADER, TRACE_HEADER};
use piwa_cli::{CliError, ExperimentConfig};

const SMALL: &str = r#"
problem.loss = "logistic"
problem.l2 = 0.01
problem.data.source = "synthetic-classification"
problem.data.n = 60
problem.data.n_test = 30
problem.data.d = 4
algorithm.schedule = "strongly-convex"
algorithm.iterations = 500
evaluation.test_metric = "misclassification"
seeds = [0, 1, 2]
"#;

fn cfg(text: &str, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(text).unwrap();
    c.output.dir = dir.to_path_buf();
    c
}

fn piwa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_piwa"))
        .args(args)
        .output()
        .unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn single_iteration_gives_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("iterations = 500", "iterations = 1");
    let c = cfg(&text, dir.path());
    let results = cmd_run(&c).unwrap();
    assert_eq!(results.len(), 3);
    for r in &results {
        let l = lines(&r.path);
        assert_eq!(l.len(), 2);
        assert_eq!(l[0], TRACE_HEADER.join(","));
        assert!(l[1].starts_with(&format!("{},{},piwa-a1,1,1,", c.fingerprint(), r.job.seed)));
    }
}

#[test]
fn rerun_is_byte_identical_and_rows_carry_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_run(&cfg(SMALL, &dir.path().join("a"))).unwrap();
    let b = cmd_run(&cfg(SMALL, &dir.path().join("b"))).unwrap();
    let fp = cfg(SMALL, dir.path()).fingerprint();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            std::fs::read(&x.path).unwrap(),
            std::fs::read(&y.path).unwrap()
        );
        for row in lines(&x.path).iter().skip(1) {
            assert!(row.starts_with(&fp));
        }
    }
}

#[test]
fn alpha_sweep_writes_one_file_per_run_plus_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}sweep.alphas = [0, 1, 5, 20]\nevaluation.fit_rate = true\n");
    let out = cmd_sweep(&cfg(&text, dir.path())).unwrap();
    assert_eq!(out.results.len(), 12);
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, 13);
    let summary = lines(&out.summary_path);
    assert_eq!(summary.len(), 5);
    assert!(summary[0].starts_with("fingerprint,scheme,alpha,seeds,final_obj_avg_mean"));
    // reference optimum exists, so every summary has a baseline and a fit
    for s in &out.summaries {
        assert!(s.baseline.is_some());
        assert!(s.rate.as_ref().unwrap().slope.is_finite());
    }
}

#[test]
fn sweep_over_other_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}sweep.schemes = [\"last\", \"uniform\", \"suffix\", \"poly-decay\", \"ema\"]\n"
    );
    let out = cmd_sweep(&cfg(&text, dir.path())).unwrap();
    assert_eq!(out.results.len(), 15);
    assert!(dir.path().join("trace_suffix-f0.5_seed0.csv").exists());
    assert!(dir.path().join("trace_ema-b0.9_seed2.csv").exists());
}

#[test]
fn identical_replacement_has_zero_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("one.libsvm");
    let held = dir.path().join("held.libsvm");
    std::fs::write(&train, "1 1:0.5 2:-0.25\n").unwrap();
    std::fs::write(&held, "1 1:0.5 2:-0.25\n-1 1:0.1 2:0.3\n").unwrap();
    let text = format!(
        r#"
problem.loss = "logistic"
problem.data.source = "libsvm"
problem.data.path = "{}"
problem.data.test_path = "{}"
algorithm.schedule = "convex-sqrt"
algorithm.eta1 = 1.0
algorithm.iterations = 200
stability.trials = 1
stability.alphas = [1.0]
stability.pool_size = 1
stability.probe_size = 1
stability.bound = "convex"
"#,
        train.display(),
        held.display()
    );
    let out = cmd_stability(&cfg(&text, &dir.path().join("out"))).unwrap();
    let rows = lines(&out.trials_path);
    assert_eq!(rows[0], STABILITY_HEADER.join(","));
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(&fields[4..7], &["0", "0", "0"]);
    assert!(fields[7].parse::<f64>().unwrap() > 0.0);
    let summary = lines(&out.summary_path);
    assert!(summary[0].contains("bound_kind,thm_bound"));
    assert!(summary[1].contains(",convex,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str, text: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path.display().to_string()
    };
    let out = dir.path().join("out").display().to_string();

    let ok = p("ok.toml", SMALL);
    assert_eq!(piwa(&["run", &ok, "--out", &out]).status.code(), Some(0));

    assert_eq!(piwa(&["run", "/nonexistent.toml"]).status.code(), Some(2));
    let typo = p("typo.toml", &format!("{SMALL}algorithm.alhpa = 2\n"));
    assert_eq!(piwa(&["run", &typo, "--out", &out]).status.code(), Some(2));

    let bad_data = dir.path().join("bad.libsvm");
    std::fs::write(&bad_data, "1 1:0.5\nnot-a-label 1:1\n").unwrap();
    let data_cfg = p(
        "data.toml",
        &format!(
            "problem.loss = \"hinge\"\nproblem.data.source = \"libsvm\"\nproblem.data.path = \"{}\"\n\
             algorithm.schedule = \"convex-sqrt\"\nalgorithm.eta1 = 1.0\nalgorithm.iterations = 10\n",
            bad_data.display()
        ),
    );
    let o = piwa(&["run", &data_cfg, "--out", &out]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let tight = p(
        "tight.toml",
        &format!("{SMALL}algorithm.gradient_bound = 1e-9\n"),
    );
    assert_eq!(piwa(&["run", &tight, "--out", &out]).status.code(), Some(4));
}

#[test]
fn diverging_run_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
problem.loss = "least-squares"
problem.data.source = "regression"
problem.data.n = 50
problem.data.d = 5
algorithm.schedule = "constant"
algorithm.eta = 1000.0
algorithm.iterations = 5000
"#;
    match cmd_run(&cfg(text, dir.path())) {
        Err(e @ CliError::Numeric(_)) => assert_eq!(e.exit_code(), 4),
        other => panic!(
            "expected a numeric failure, got {:?}",
            other.map(|r| r.len())
        ),
    }
    // the rows written before the failure are intact
    let trace = dir.path().join("trace_piwa-a1_seed0.csv");
    let rows = lines(&trace);
    assert!(rows.len() >= 2);
    assert!(rows
        .iter()
        .skip(1)
        .all(|r| r.split(',').count() == TRACE_HEADER.len()));
}

#[test]
fn fit_rate_reads_traces() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    std::fs::write(
        &trace,
        format!(
            "{}\nabc,0,piwa-a1,1,10,1.1,0,,0\nabc,0,piwa-a1,1,100,0.2,0,,0\nabc,0,piwa-a1,1,1000,0.11,0,,0\n",
            TRACE_HEADER.join(",")
        ),
    )
    .unwrap();
    let fit = cmd_fit_rate(&FitRateArgs {
        files: vec![trace.clone()],
        baseline: 0.1,
        slack: 0.0,
        from: 1,
        column: "obj_avg".into(),
    })
    .unwrap();
    assert!((fit.slope + 1.0).abs() < 1e-9);
    assert!((fit.r_squared - 1.0).abs() < 1e-9);

    let o = piwa(&[
        "fit-rate",
        &trace.display().to_string(),
        "--baseline",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("slope=-"), "{text}");
    assert!(text.contains("points=3 skipped=0"));

    let mixed = dir.path().join("m.csv");
    std::fs::write(
        &mixed,
        format!(
            "{}\nabc,0,piwa-a1,1,10,1,0,,0\nxyz,0,piwa-a1,1,100,1,0,,0\n",
            TRACE_HEADER.join(",")
        ),
    )
    .unwrap();
    let o = piwa(&["fit-rate", &mixed.display().to_string(), "--baseline", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_dir_does_not_change_fingerprint() {
    let a = cfg(SMALL, Path::new("x"));
    let b = cfg(SMALL, Path::new("y"));
    assert_eq!(a.fingerprint(), b.fingerprint());
}
