//! Builds datasets, loss, domain and starting point from a config.

use piwa_core::data::{
    gen_classification, gen_rank_deficient_ls, gen_regression, hessian_min_nonzero_eigenvalue,
    parse_libsvm, ridge_solution, split, ClassificationSpec, LabelMode, LibsvmOptions,
    RankDeficientSpec, RegressionSpec,
};
use piwa_core::losses::{pl_sine_dataset, LossKind, LossModel, Objective};
use piwa_core::reference::{hinge_ball_optimum, smooth_optimum};
use piwa_core::vector::{BallDomain, ParameterVector};
use piwa_core::{Dataset, Domain, Loss, Params, Sample};

use crate::config::{DataSource, ExperimentConfig, LabelFormat, LossName};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Problem {
    pub train: Dataset,
    pub test: Option<Dataset>,
    /// Samples drawn beyond the training and test sets (synthetic sources),
    /// or the test split (files); used for stability pools and probes.
    pub held_out: Vec<Sample>,
    pub loss: Loss,
    pub domain: Domain,
    pub x1: Params,
    /// PL modulus of the training objective when known.
    pub pl_mu: Option<f64>,
}

/// Reference optimum of the training objective over the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub value: f64,
    /// Certified upper bound on `value - F*` (zero for closed forms).
    pub slack: f64,
}

fn read(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

impl Problem {
    /// Builds the problem; `extra` additional samples are generated for
    /// synthetic sources and returned in `held_out`.
    pub fn build(cfg: &ExperimentConfig, extra: usize) -> CliResult<Self> {
        let dc = &cfg.problem.data;
        let (train, test, held_out, pl_mu) = if dc.source == DataSource::Libsvm {
            let (train, test) = load_files(cfg)?;
            let held = test
                .as_ref()
                .map(|t| t.samples().to_vec())
                .unwrap_or_default();
            (train, test, held, None)
        } else {
            if dc.n == 0 {
                return Err(CliError::config("problem.data.n must be >= 1"));
            }
            let total = dc.n + dc.n_test + extra;
            let all: Dataset = match dc.source {
                DataSource::SyntheticClassification => {
                    gen_classification(&ClassificationSpec {
                        n: total,
                        d: dc.d,
                        margin: dc.margin,
                        flip_rate: dc.flip_rate,
                        normalize: dc.normalize,
                        seed: dc.seed,
                    })?
                    .0
                }
                DataSource::RankDeficientLs => {
                    gen_rank_deficient_ls(&RankDeficientSpec {
                        n: total,
                        d: dc.d,
                        rank: dc.rank,
                        noise: dc.noise,
                        seed: dc.seed,
                    })?
                    .data
                }
                DataSource::Regression => {
                    gen_regression(&RegressionSpec {
                        n: total,
                        d: dc.d,
                        noise: dc.noise,
                        seed: dc.seed,
                    })?
                    .0
                }
                DataSource::PlSine => pl_sine_dataset(total, dc.d, dc.noise, dc.seed)?,
                DataSource::Libsvm => unreachable!(),
            };
            let idx: Vec<usize> = (0..dc.n).collect();
            let train = all.select(&idx, format!("{} [train 0..{}]", all.provenance(), dc.n));
            let test = (dc.n_test > 0).then(|| {
                let idx: Vec<usize> = (dc.n..dc.n + dc.n_test).collect();
                all.select(&idx, format!("{} [test]", all.provenance()))
            });
            let held = all.samples()[dc.n + dc.n_test..].to_vec();
            let mu = if dc.source == DataSource::RankDeficientLs {
                Some(hessian_min_nonzero_eigenvalue(&train)?)
            } else {
                None
            };
            (train, test, held, mu)
        };

        let d = train.dim();
        let domain = match cfg.algorithm.radius {
            Some(r) => BallDomain::centered(d, r)?,
            None => BallDomain::Unbounded,
        };
        let l2 = cfg.problem.l2;
        let base = match cfg.problem.loss {
            LossName::PlSine => {
                if l2 != 0.0 {
                    return Err(CliError::config("pl-sine takes no l2 term"));
                }
                LossModel::pl_sine()
            }
            LossName::Hinge => LossModel::new(LossKind::Hinge, l2)?,
            LossName::Logistic => LossModel::new(LossKind::Logistic, l2)?,
            LossName::LeastSquares => LossModel::new(LossKind::LeastSquares, l2)?,
        };
        let mut loss = base.with_derived_constants(&train, &domain);
        let pl_mu = match (cfg.problem.loss, pl_mu) {
            (LossName::LeastSquares, Some(mu)) if l2 == 0.0 => {
                loss = loss.with_pl(mu);
                Some(mu)
            }
            (LossName::PlSine, _) => loss.constants().pl,
            _ => None,
        };

        let x1 = match &cfg.algorithm.x1 {
            Some(v) if v.len() != d => {
                return Err(CliError::config(format!(
                    "algorithm.x1 has {} entries, data has d={d}",
                    v.len()
                )))
            }
            Some(v) => ParameterVector::from_f64(v)?,
            None => ParameterVector::from_f64(&vec![cfg.algorithm.x1_fill; d])?,
        };
        if !domain.contains(&x1, 1e-9) {
            return Err(CliError::config(
                "starting point lies outside the feasible ball",
            ));
        }
        Ok(Problem {
            train,
            test,
            held_out,
            loss,
            domain,
            x1,
            pl_mu,
        })
    }

    /// High-accuracy optimum where the problem admits one: closed form for
    /// least squares whose minimizer is feasible, accelerated gradient for
    /// regularized smooth losses, a dual solver for ball-constrained hinge,
    /// and zero for the sine instance.
    pub fn reference(&self) -> CliResult<Option<Reference>> {
        let l2 = self.loss.l2();
        let a = self.train.max_feature_norm();
        let exact = |value: f64| Some(Reference { value, slack: 0.0 });
        match self.loss.kind() {
            LossKind::LeastSquares => {
                let (x, f) = ridge_solution(&self.train, l2)?;
                if self.domain.contains(&x, 1e-12) {
                    return Ok(exact(f));
                }
                if l2 > 0.0 {
                    return self.smooth(a * a + l2, l2);
                }
                Ok(None)
            }
            LossKind::Logistic if l2 > 0.0 => self.smooth(0.25 * a * a + l2, l2),
            LossKind::Hinge if l2 == 0.0 => match self.domain.radius() {
                Some(r) => {
                    let opt = hinge_ball_optimum(&self.train, r)?;
                    Ok(Some(Reference {
                        value: opt.value,
                        slack: opt.certified_gap,
                    }))
                }
                None => Ok(None),
            },
            LossKind::PlSine => {
                let zero = ParameterVector::zeros(self.train.dim());
                Ok(self.domain.contains(&zero, 0.0).then_some(Reference {
                    value: 0.0,
                    slack: 0.0,
                }))
            }
            _ => Ok(None),
        }
    }

    fn smooth(&self, l: f64, mu: f64) -> CliResult<Option<Reference>> {
        let opt = smooth_optimum(
            &self.loss,
            &self.train,
            &self.domain,
            &self.x1,
            l,
            mu,
            1e-12,
        )?;
        Ok(Some(Reference {
            value: opt.value,
            slack: opt.certified_gap,
        }))
    }

    pub fn objective(&self, x: &Params) -> CliResult<f64> {
        Ok(self.loss.full_value(x, &self.train)?)
    }
}

fn load_files(cfg: &ExperimentConfig) -> CliResult<(Dataset, Option<Dataset>)> {
    let dc = &cfg.problem.data;
    let path = dc
        .path
        .as_ref()
        .ok_or_else(|| CliError::config("libsvm source needs problem.data.path"))?;
    let opts = |p: &std::path::Path| LibsvmOptions {
        labels: match dc.labels {
            LabelFormat::PlusMinusOne => LabelMode::PlusMinusOne,
            LabelFormat::ZeroOne => LabelMode::ZeroOne,
            LabelFormat::Real => LabelMode::Real,
        },
        dim: None,
        provenance: Some(p.display().to_string()),
    };
    let full: Dataset = parse_libsvm(&read(path)?, &opts(path))?;
    let (mut train, mut test) = match &dc.test_path {
        Some(tp) => {
            let test: Dataset = parse_libsvm(&read(tp)?, &opts(tp))?;
            let dim = full.dim().max(test.dim());
            (full.with_dim(dim)?, Some(test.with_dim(dim)?))
        }
        None if dc.test_fraction > 0.0 => {
            let (tr, te) = split(&full, dc.test_fraction, dc.seed)?;
            (tr, Some(te))
        }
        None => (full, None),
    };
    if dc.scale {
        let factors = train.max_abs_scale();
        if let Some(t) = test.as_mut() {
            t.divide_columns(&factors)?;
        }
    }
    if train.is_empty() {
        return Err(CliError::data("training set is empty"));
    }
    Ok((train, test))
}
