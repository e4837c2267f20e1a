//! Experiment configuration.
//!
//! Configs are flat TOML files of dotted keys, one value per line:
//!
//! ```text
//! problem.loss = "logistic"            # hinge | logistic | least-squares | pl-sine
//! problem.l2 = 0.01
//! problem.data.source = "synthetic-classification"
//! problem.data.n = 500
//! problem.data.d = 20
//! algorithm.schedule = "strongly-convex" # convex-sqrt | strongly-convex | constant
//! algorithm.iterations = 10000
//! algorithm.scheme = "piwa"              # last | uniform | piwa | suffix | poly-decay | ema
//! algorithm.alpha = 1.0
//! evaluation.checkpoints = "log-spaced"
//! seeds = [0, 1, 2]
//! output.dir = "out"
//! ```
//!
//! Unknown keys are rejected. Every key except `problem.loss`,
//! `problem.data.source`, `algorithm.schedule` and `algorithm.iterations` has
//! a default. The fingerprint is a hash of the normalized config with the
//! output section removed, so moving the output directory does not change it.

use std::path::{Path, PathBuf};

use piwa_core::averaging::Scheme;
use piwa_core::optimizer::{Checkpoints, RadiusRule, StepSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub stagewise: StagewiseSection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    Hinge,
    Logistic,
    LeastSquares,
    PlSine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub loss: LossName,
    #[serde(default)]
    pub l2: f64,
    pub data: DataConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    SyntheticClassification,
    RankDeficientLs,
    Regression,
    PlSine,
    Libsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelFormat {
    #[default]
    PlusMinusOne,
    ZeroOne,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Training samples (synthetic sources).
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Extra samples from the same distribution held out for testing
    /// (synthetic sources).
    #[serde(default)]
    pub n_test: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub flip_rate: f64,
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// LIBSVM training file.
    pub path: Option<PathBuf>,
    /// LIBSVM test file.
    pub test_path: Option<PathBuf>,
    /// Fraction of the LIBSVM training file split off for testing when no
    /// test file is given.
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default)]
    pub labels: LabelFormat,
    /// Max-abs scaling of LIBSVM features (factors fitted on the training
    /// split and applied to the test split).
    #[serde(default)]
    pub scale: bool,
}

fn default_n() -> usize {
    200
}
fn default_d() -> usize {
    20
}
fn default_margin() -> f64 {
    0.05
}
fn default_rank() -> usize {
    5
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    ConvexSqrt,
    StronglyConvex,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Last,
    Uniform,
    Piwa,
    Suffix,
    PolyDecay,
    Ema,
}

impl SchemeName {
    pub fn uses_alpha(self) -> bool {
        self == SchemeName::Piwa
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub schedule: ScheduleName,
    /// Initial step of `convex-sqrt`.
    pub eta1: Option<f64>,
    /// Strong-convexity modulus of `strongly-convex`; defaults to `problem.l2`.
    pub lambda: Option<f64>,
    /// Step of `constant`.
    pub eta: Option<f64>,
    pub iterations: usize,
    /// Radius of the feasible ball centred at the origin; absent means
    /// unconstrained.
    pub radius: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeName,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_eta_pd")]
    pub eta_pd: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "one")]
    pub batch_size: usize,
    /// Declared gradient bound; a larger stochastic gradient aborts the run.
    pub gradient_bound: Option<f64>,
    /// Starting point; defaults to every coordinate equal to `x1_fill`.
    pub x1: Option<Vec<f64>>,
    #[serde(default)]
    pub x1_fill: f64,
}

fn default_scheme() -> SchemeName {
    SchemeName::Piwa
}
fn default_alpha() -> f64 {
    1.0
}
fn default_fraction() -> f64 {
    0.5
}
fn default_eta_pd() -> f64 {
    3.0
}
fn default_beta() -> f64 {
    0.9
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointRule {
    #[default]
    PowersOfTwo,
    LogSpaced,
    Explicit,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMetric {
    #[default]
    None,
    Misclassification,
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineRule {
    /// Computed optimum where the problem allows it, otherwise `best`.
    #[default]
    Auto,
    /// Best objective over all runs of the sweep minus `baseline_slack`.
    Best,
    /// `baseline_value` as given.
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub checkpoints: CheckpointRule,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
    /// Iterations for `explicit` checkpoints.
    #[serde(default)]
    pub at: Vec<usize>,
    #[serde(default)]
    pub test_metric: TestMetric,
    #[serde(default)]
    pub record_wall_time: bool,
    /// Fit a log-log rate to the mean averaged-iterate gap in sweep summaries.
    #[serde(default)]
    pub fit_rate: bool,
    /// First checkpoint used by the rate fit.
    #[serde(default = "one")]
    pub fit_from: usize,
    #[serde(default)]
    pub baseline: BaselineRule,
    pub baseline_value: Option<f64>,
    #[serde(default)]
    pub baseline_slack: f64,
}

fn default_per_decade() -> usize {
    4
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            checkpoints: CheckpointRule::default(),
            per_decade: default_per_decade(),
            at: Vec::new(),
            test_metric: TestMetric::None,
            record_wall_time: false,
            fit_rate: false,
            fit_from: 1,
            baseline: BaselineRule::Auto,
            baseline_value: None,
            baseline_slack: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeName>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
}

fn default_sweep_alphas() -> Vec<f64> {
    vec![0.0, 1.0, 5.0, 20.0]
}
fn default_schemes() -> Vec<SchemeName> {
    vec![SchemeName::Piwa]
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alphas: default_sweep_alphas(),
            schemes: default_schemes(),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    #[default]
    None,
    Convex,
    StronglyConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_stability_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bound: BoundKind,
    /// Replacement candidates (synthetic sources draw them fresh).
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Held-out points over which loss deviations are maximized.
    #[serde(default = "default_probe")]
    pub probe_size: usize,
    /// Declared gradient bound; derived from the data and domain if absent.
    pub g: Option<f64>,
    /// Declared smoothness; derived if absent.
    pub l: Option<f64>,
    /// Treat the loss as bounded in `[0, 1]`.
    #[serde(default)]
    pub unit_bounded: bool,
}

fn default_trials() -> usize {
    50
}
fn default_stability_alphas() -> Vec<f64> {
    vec![0.0, 1.0, 5.0]
}
fn default_pool() -> usize {
    200
}
fn default_probe() -> usize {
    1000
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            trials: default_trials(),
            alphas: default_stability_alphas(),
            seed: 0,
            bound: BoundKind::None,
            pool_size: default_pool(),
            probe_size: default_probe(),
            g: None,
            l: None,
            unit_bounded: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusRuleName {
    #[default]
    Halving,
    Formula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagewiseSection {
    #[serde(default = "default_stages")]
    pub stages: usize,
    /// Initial error bound; defaults to `F_S(x1) - F*` when `F*` is known.
    pub eps0: Option<f64>,
    /// PL modulus; defaults to the instance value when known.
    pub mu: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub gamma: Option<f64>,
    /// Gradient bound of the base loss; derived per stage ball if absent.
    pub g: Option<f64>,
    #[serde(default)]
    pub radius_rule: RadiusRuleName,
    pub max_stage_iterations: Option<usize>,
    /// Optimal value used for gaps; computed when the instance allows.
    pub f_star: Option<f64>,
}

fn default_stages() -> usize {
    6
}
fn default_delta() -> f64 {
    0.1
}

impl Default for StagewiseSection {
    fn default() -> Self {
        StagewiseSection {
            stages: default_stages(),
            eps0: None,
            mu: None,
            alpha: default_alpha(),
            delta: default_delta(),
            c: None,
            d: None,
            gamma: None,
            g: None,
            radius_rule: RadiusRuleName::Halving,
            max_stage_iterations: None,
            f_star: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the normalized config without its
    /// output section.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig {
            dir: PathBuf::new(),
        };
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.algorithm.iterations == 0 {
            return bad("algorithm.iterations must be >= 1".into());
        }
        if !(self.problem.l2.is_finite() && self.problem.l2 >= 0.0) {
            return bad(format!("problem.l2 must be >= 0, got {}", self.problem.l2));
        }
        if let Some(r) = self.algorithm.radius {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("algorithm.radius must be positive, got {r}"));
            }
        }
        if self.evaluation.checkpoints == CheckpointRule::Explicit && self.evaluation.at.is_empty()
        {
            return bad("explicit checkpoints need evaluation.at".into());
        }
        if self.evaluation.baseline == BaselineRule::Value
            && self.evaluation.baseline_value.is_none()
        {
            return bad("evaluation.baseline = \"value\" needs evaluation.baseline_value".into());
        }
        if self
            .sweep
            .alphas
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return bad("sweep.alphas must be finite and >= 0".into());
        }
        if self
            .stability
            .alphas
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return bad("stability.alphas must be finite and >= 0".into());
        }
        self.schedule(self.algorithm.alpha)?;
        self.scheme(self.algorithm.scheme, self.algorithm.alpha)?;
        Ok(())
    }

    /// Step schedule; `alpha` enters the strongly convex schedule.
    pub fn schedule(&self, alpha: f64) -> CliResult<StepSchedule> {
        let a = &self.algorithm;
        let s = match a.schedule {
            ScheduleName::ConvexSqrt => StepSchedule::ConvexSqrt {
                eta1: a
                    .eta1
                    .ok_or_else(|| CliError::config("convex-sqrt schedule needs algorithm.eta1"))?,
            },
            ScheduleName::StronglyConvex => {
                let lambda = a.lambda.unwrap_or(self.problem.l2);
                StepSchedule::StronglyConvex { lambda, alpha }
            }
            ScheduleName::Constant => StepSchedule::Constant {
                eta: a
                    .eta
                    .ok_or_else(|| CliError::config("constant schedule needs algorithm.eta"))?,
            },
        };
        s.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(s)
    }

    pub fn scheme(&self, name: SchemeName, alpha: f64) -> CliResult<Scheme> {
        let a = &self.algorithm;
        let s = match name {
            SchemeName::Last => Scheme::Last,
            SchemeName::Uniform => Scheme::Uniform,
            SchemeName::Piwa => Scheme::Piwa { alpha },
            SchemeName::Suffix => Scheme::Suffix {
                fraction: a.fraction,
            },
            SchemeName::PolyDecay => Scheme::PolyDecay { eta: a.eta_pd },
            SchemeName::Ema => Scheme::Ema { beta: a.beta },
        };
        s.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(s)
    }

    pub fn checkpoints(&self) -> Checkpoints {
        let e = &self.evaluation;
        match e.checkpoints {
            CheckpointRule::PowersOfTwo => Checkpoints::PowersOfTwo,
            CheckpointRule::LogSpaced => Checkpoints::LogSpaced {
                per_decade: e.per_decade.max(1),
            },
            CheckpointRule::Explicit => Checkpoints::Explicit(e.at.clone()),
            CheckpointRule::Final => Checkpoints::FinalOnly,
        }
    }

    pub fn radius_rule(&self) -> RadiusRule {
        match self.stagewise.radius_rule {
            RadiusRuleName::Halving => RadiusRule::Halving,
            RadiusRuleName::Formula => RadiusRule::Formula,
        }
    }
}

/// Label written to trace file names and the `scheme` column.
pub fn scheme_tag(scheme: &Scheme) -> String {
    match scheme {
        Scheme::Piwa { alpha } => format!("piwa-a{alpha}"),
        Scheme::Suffix { fraction } => format!("suffix-f{fraction}"),
        Scheme::PolyDecay { eta } => format!("poly-decay-e{eta}"),
        Scheme::Ema { beta } => format!("ema-b{beta}"),
        other => other.name().to_string(),
    }
}
