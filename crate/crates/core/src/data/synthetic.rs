//! Synthetic problems with known structure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Sample, SparseVector};
use crate::sampling::rng_from_seed;
use crate::vector::ParameterVector;
use crate::{Error, Result, Scalar};

/// Linearly separable classification data with label noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSpec {
    pub n: usize,
    pub d: usize,
    /// Minimum normalized margin `|w*^T a| / ||a||` of accepted points.
    pub margin: f64,
    /// Probability of flipping each label after it is assigned.
    pub flip_rate: f64,
    /// Scale every feature vector to unit norm.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        ClassificationSpec {
            n: 1000,
            d: 50,
            margin: 0.05,
            flip_rate: 0.0,
            normalize: true,
            seed: 0,
        }
    }
}

fn gaussian_vec(rng: &mut impl Rng, d: usize, std: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn to_scalar<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::lit(x)).collect()
}

/// Draws a unit ground-truth direction `w*`, Gaussian features kept only when
/// their normalized margin is at least `spec.margin`, labels `sign(w*^T a)`
/// flipped with probability `spec.flip_rate`. Returns the data and `w*`.
pub fn gen_classification<S: Scalar>(
    spec: &ClassificationSpec,
) -> Result<(Dataset<S>, ParameterVector<S>)> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::invalid(
            "classification data needs n >= 1 and d >= 1",
        ));
    }
    if !(spec.margin > 0.0 && spec.margin < 1.0) {
        return Err(Error::invalid(format!(
            "margin must lie in (0, 1), got {}",
            spec.margin
        )));
    }
    if !(0.0..=1.0).contains(&spec.flip_rate) {
        return Err(Error::invalid(format!(
            "flip rate must lie in [0, 1], got {}",
            spec.flip_rate
        )));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut w = gaussian_vec(&mut rng, spec.d, 1.0);
    let wn = norm(&w);
    w.iter_mut().for_each(|x| *x /= wn);

    let max_attempts = spec.n.saturating_mul(10_000).max(100_000);
    let mut samples = Vec::with_capacity(spec.n);
    let mut attempts = 0usize;
    while samples.len() < spec.n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::invalid(format!(
                "margin {} too large for d={}: acceptance rate too low",
                spec.margin, spec.d
            )));
        }
        let mut a = gaussian_vec(&mut rng, spec.d, 1.0);
        let an = norm(&a);
        if an == 0.0 {
            continue;
        }
        let proj: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
        if proj.abs() / an < spec.margin {
            continue;
        }
        if spec.normalize {
            a.iter_mut().for_each(|x| *x /= an);
        }
        let mut label = proj.signum();
        if rng.random::<f64>() < spec.flip_rate {
            label = -label;
        }
        samples.push(Sample::new(
            SparseVector::from_dense(&to_scalar::<S>(&a)),
            S::lit(label),
        ));
    }
    let provenance = format!(
        "synthetic classification n={} d={} margin={} flip={} seed={}",
        spec.n, spec.d, spec.margin, spec.flip_rate, spec.seed
    );
    Ok((
        Dataset::new(samples, spec.d, provenance)?,
        ParameterVector::new(to_scalar(&w))?,
    ))
}

/// Least-squares data whose design matrix has exactly `rank` nonzero
/// singular values. `rank == d` gives a full-rank design.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDeficientSpec {
    pub n: usize,
    pub d: usize,
    pub rank: usize,
    /// Standard deviation of additive target noise; zero gives a realizable
    /// system with `F* = 0`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for RankDeficientSpec {
    fn default() -> Self {
        RankDeficientSpec {
            n: 100,
            d: 10,
            rank: 5,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// A least-squares problem `F(x) = (1/2n) sum (a_i^T x - b_i)^2` with its
/// optimal value, PL modulus and least-norm minimizer.
#[derive(Debug, Clone)]
pub struct LeastSquaresInstance<S> {
    pub data: Dataset<S>,
    pub f_star: S,
    /// Smallest nonzero eigenvalue of the empirical Hessian `A^T A / n`.
    pub mu: S,
    pub minimizer: ParameterVector<S>,
}

fn design_matrix<S: Scalar>(data: &Dataset<S>) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.len();
    let d = data.dim();
    let mut a = DMatrix::zeros(n, d);
    let mut b = DVector::zeros(n);
    for (i, s) in data.samples().iter().enumerate() {
        for (j, v) in s.features.iter() {
            a[(i, j)] = v.as_f64();
        }
        b[i] = s.label.as_f64();
    }
    (a, b)
}

pub fn gen_rank_deficient_ls<S: Scalar>(
    spec: &RankDeficientSpec,
) -> Result<LeastSquaresInstance<S>> {
    if spec.rank < 1 || spec.rank > spec.d {
        return Err(Error::invalid(format!(
            "rank must satisfy 1 <= r <= d, got r={} d={}",
            spec.rank, spec.d
        )));
    }
    if spec.n < spec.rank {
        return Err(Error::invalid("need n >= rank"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let (n, d, r) = (spec.n, spec.d, spec.rank);
    // A = B C with B ~ N(0, 1/r), C ~ N(0, 1/d): rank r almost surely,
    // E||a_i||^2 = 1
    let b_mat =
        DMatrix::from_iterator(n, r, gaussian_vec(&mut rng, n * r, (1.0 / r as f64).sqrt()));
    let c_mat =
        DMatrix::from_iterator(r, d, gaussian_vec(&mut rng, r * d, (1.0 / d as f64).sqrt()));
    let a = &b_mat * &c_mat;
    let x_true = DVector::from_vec(gaussian_vec(&mut rng, d, (1.0 / d as f64).sqrt()));
    let mut targets = &a * &x_true;
    if spec.noise > 0.0 {
        for t in targets.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *t += spec.noise * z;
        }
    }
    let samples = (0..n)
        .map(|i| {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            Sample::new(
                SparseVector::from_dense(&to_scalar::<S>(&row)),
                S::lit(targets[i]),
            )
        })
        .collect();
    let data = Dataset::new(
        samples,
        d,
        format!(
            "rank-deficient least squares n={n} d={d} r={r} noise={} seed={}",
            spec.noise, spec.seed
        ),
    )?;
    let (x_min, f_star) = ridge_solution(&data, S::zero())?;
    let f_star = if spec.noise == 0.0 { S::zero() } else { f_star };
    let mu = hessian_min_nonzero_eigenvalue(&data)?;
    Ok(LeastSquaresInstance {
        data,
        f_star,
        mu,
        minimizer: x_min,
    })
}

/// Dense linear regression `b = a^T w + noise` with `a ~ N(0, I/d)` and
/// `w ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec {
            n: 200,
            d: 20,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Returns the data and the generating weights.
pub fn gen_regression<S: Scalar>(
    spec: &RegressionSpec,
) -> Result<(Dataset<S>, ParameterVector<S>)> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::invalid("regression data needs n >= 1 and d >= 1"));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::invalid("noise must be >= 0"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let w = gaussian_vec(&mut rng, spec.d, 1.0);
    let std = (1.0 / spec.d as f64).sqrt();
    let samples = (0..spec.n)
        .map(|_| {
            let a = gaussian_vec(&mut rng, spec.d, std);
            let z: f64 = StandardNormal.sample(&mut rng);
            let b = a.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() + spec.noise * z;
            Sample::new(SparseVector::from_dense(&to_scalar::<S>(&a)), S::lit(b))
        })
        .collect();
    let data = Dataset::new(
        samples,
        spec.d,
        format!(
            "regression n={} d={} noise={} seed={}",
            spec.n, spec.d, spec.noise, spec.seed
        ),
    )?;
    Ok((data, ParameterVector::new(to_scalar(&w))?))
}

/// Smallest eigenvalue of `A^T A / n` above `1e-10` times the largest.
/// Smallest nonzero eigenvalue of `A^T A / n` (the PL modulus of plain least
/// squares on this data).
pub fn hessian_min_nonzero_eigenvalue<S: Scalar>(data: &Dataset<S>) -> Result<S> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (a, _) = design_matrix(data);
    let h = a.transpose() * &a / data.len() as f64;
    let eig = h.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mu = eig
        .eigenvalues
        .iter()
        .cloned()
        .filter(|&v| v > 1e-10 * max)
        .fold(f64::INFINITY, f64::min);
    if !mu.is_finite() {
        return Err(Error::invalid("Hessian has no nonzero eigenvalue"));
    }
    Ok(S::lit(mu))
}

/// Minimizer and optimal value of `(1/2n) sum (a_i^T x - b_i)^2 + (l2/2)||x||^2`.
/// With `l2 = 0` the least-norm minimizer is returned.
pub fn ridge_solution<S: Scalar>(data: &Dataset<S>, l2: S) -> Result<(ParameterVector<S>, S)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len() as f64;
    let lam = l2.as_f64();
    let (a, b) = design_matrix(data);
    let x = if lam > 0.0 {
        let h = a.transpose() * &a / n + DMatrix::identity(data.dim(), data.dim()) * lam;
        let rhs = a.transpose() * &b / n;
        h.cholesky()
            .ok_or_else(|| Error::invalid("regularized Hessian not positive definite"))?
            .solve(&rhs)
    } else {
        let svd = a.clone().svd(true, true);
        let tol = 1e-10 * svd.singular_values.iter().cloned().fold(0.0, f64::max);
        svd.solve(&b, tol)
            .map_err(|e| Error::invalid(e.to_string()))?
    };
    let resid = &a * &x - &b;
    let f = resid.norm_squared() / (2.0 * n) + 0.5 * lam * x.norm_squared();
    Ok((ParameterVector::new(to_scalar(x.as_slice()))?, S::lit(f)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_data_is_separable_with_margin() {
        let spec = ClassificationSpec {
            n: 500,
            d: 20,
            margin: 0.1,
            ..Default::default()
        };
        let (data, w) = gen_classification::<f64>(&spec).unwrap();
        let min_margin = data
            .samples()
            .iter()
            .map(|s| s.label * s.features.dot(&w) / s.features.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(min_margin >= 0.1, "{min_margin}");
        assert!((w.norm() - 1.0).abs() < 1e-12);
        assert!(data
            .samples()
            .iter()
            .all(|s| (s.features.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn same_seed_same_hash() {
        let spec = ClassificationSpec {
            n: 100,
            d: 5,
            seed: 11,
            ..Default::default()
        };
        let (a, _) = gen_classification::<f64>(&spec).unwrap();
        let (b, _) = gen_classification::<f64>(&spec).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let (c, _) = gen_classification::<f64>(&ClassificationSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn half_flip_rate_destroys_agreement() {
        let spec = ClassificationSpec {
            n: 10_000,
            d: 10,
            flip_rate: 0.5,
            seed: 3,
            ..Default::default()
        };
        let (data, w) = gen_classification::<f64>(&spec).unwrap();
        let agree = data
            .samples()
            .iter()
            .filter(|s| s.label == s.features.dot(&w).signum())
            .count() as f64
            / data.len() as f64;
        assert!((agree - 0.5).abs() <= 0.05, "{agree}");
    }

    #[test]
    fn rank_deficient_instance() {
        let inst = gen_rank_deficient_ls::<f64>(&RankDeficientSpec {
            n: 60,
            d: 8,
            rank: 3,
            noise: 0.0,
            seed: 5,
        })
        .unwrap();
        assert_eq!(inst.f_star, 0.0);
        assert!(inst.mu > 0.0);
        let (a, _) = design_matrix(&inst.data);
        let sv = a.singular_values();
        let max = sv.max();
        assert_eq!(sv.iter().filter(|&&s| s > 1e-10 * max).count(), 3);
    }

    #[test]
    fn two_by_two_hessian_eigenvalue() {
        // rows (1, 0): Hessian diag(1, 0), so mu = 1
        let samples = (0..4).map(|_| Sample::dense(&[1.0, 0.0], 2.0)).collect();
        let data = Dataset::<f64>::new(samples, 2, "").unwrap();
        assert!((hessian_min_nonzero_eigenvalue(&data).unwrap() - 1.0).abs() < 1e-12);
        let (x, f) = ridge_solution(&data, 0.0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!(f.abs() < 1e-20);
    }

    #[test]
    fn rejects_bad_rank() {
        let spec = RankDeficientSpec {
            d: 4,
            rank: 5,
            ..Default::default()
        };
        assert!(gen_rank_deficient_ls::<f64>(&spec).is_err());
    }
}
