//! High-accuracy reference optima used as baselines when measuring gaps.

use crate::vector::ParameterVector;
use crate::{Error, Result, Scalar};

use crate::data::Dataset;
use crate::losses::Objective;
use crate::vector::BallDomain;

const MAX_EPOCHS: usize = 200_000;
const GAP_TOL: f64 = 1e-11;
const CERT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 1_000_000;

/// Result of [`hinge_ball_optimum`].
#[derive(Debug, Clone)]
pub struct HingeOptimum<S> {
    pub x: ParameterVector<S>,
    /// Mean hinge loss at `x`.
    pub value: S,
    /// Multiplier of the norm constraint (zero when inactive).
    pub multiplier: f64,
    /// `value` minus a dual lower bound on the optimum.
    pub certified_gap: f64,
}

/// Solves `min (1/n) sum max(0, 1 - b_i a_i^T x)` subject to `||x|| <= radius`.
///
/// The constrained problem is the L2-regularized SVM at the multiplier `nu`
/// for which `||x(nu)|| = radius`; each `x(nu)` comes from dual coordinate
/// descent and `nu` is found by bisection in log space.
pub fn hinge_ball_optimum<S: Scalar>(data: &Dataset<S>, radius: f64) -> Result<HingeOptimum<S>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let d = data.dim();
    let rows: Vec<(Vec<(usize, f64)>, f64)> = data
        .samples()
        .iter()
        .map(|s| {
            let y = s.label.as_f64();
            let r: Vec<(usize, f64)> = s
                .features
                .iter()
                .map(|(i, v)| (i, y * v.as_f64()))
                .collect();
            let q = r.iter().map(|(_, v)| v * v).sum();
            (r, q)
        })
        .collect();
    let n = rows.len() as f64;
    let hinge = |w: &[f64]| -> f64 {
        rows.iter()
            .map(|(r, _)| (1.0 - r.iter().map(|&(i, v)| v * w[i]).sum::<f64>()).max(0.0))
            .sum::<f64>()
            / n
    };

    let mut beta = vec![0.0; rows.len()];
    let mut w = vec![0.0; d];
    // Dual coordinate descent for 0.5||w||^2 + C sum hinge with C = 1/(n nu).
    // Returns sum(beta), or None if the epoch budget ran out.
    let solve = |nu: f64, beta: &mut Vec<f64>, w: &mut Vec<f64>| -> Option<f64> {
        let c = 1.0 / (n * nu);
        for b in beta.iter_mut() {
            *b = b.min(c);
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for ((r, _), &b) in rows.iter().zip(beta.iter()) {
            for &(i, v) in r {
                w[i] += b * v;
            }
        }
        for _ in 0..MAX_EPOCHS {
            for ((r, q), b) in rows.iter().zip(beta.iter_mut()) {
                if *q == 0.0 {
                    continue;
                }
                let g = r.iter().map(|&(i, v)| v * w[i]).sum::<f64>() - 1.0;
                let nb = (*b - g / q).clamp(0.0, c);
                let delta = nb - *b;
                if delta != 0.0 {
                    *b = nb;
                    for &(i, v) in r {
                        w[i] += delta * v;
                    }
                }
            }
            let wsq = w.iter().map(|v| v * v).sum::<f64>();
            let primal = 0.5 * nu * wsq + hinge(w);
            let dual = nu * (beta.iter().sum::<f64>() - 0.5 * wsq);
            if primal - dual < GAP_TOL {
                return Some(beta.iter().sum());
            }
        }
        None
    };
    let norm = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let not_converged = || Error::Refused("hinge reference solver did not converge".into());

    let max_row = rows.iter().map(|(_, q)| q.sqrt()).fold(0.0, f64::max);
    if max_row == 0.0 {
        return Ok(HingeOptimum {
            x: ParameterVector::zeros(d),
            value: S::one(),
            multiplier: 0.0,
            certified_gap: 0.0,
        });
    }
    // ||x(nu)|| <= max_i ||a_i|| / nu, so the constraint is slack at `hi`.
    // For any u in [0, 1/n]^n, F* >= sum(u) - R ||sum u_i b_i a_i||; u = nu beta
    // gives the lower bound below, tight at the optimal multiplier. A
    // feasible solution within CERT_TOL of it ends the search.
    let mut hi = 2.0 * max_row / radius;
    let mut lo = hi;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut active = false;
    while lo > hi * 1e-12 {
        lo /= 10.0;
        let Some(mass) = solve(lo, &mut beta, &mut w) else {
            // the constraint is slack and the certificate is as tight as
            // the solver can make it
            if best.is_some() {
                break;
            }
            return Err(not_converged());
        };
        if norm(&w) > radius {
            active = true;
            break;
        }
        lower = lower.max(lo * mass - lo * radius * norm(&w));
        let value = hinge(&w);
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((w.clone(), value, 0.0));
        }
        hi = lo;
        if value - lower < CERT_TOL {
            break;
        }
    }
    if active {
        while hi / lo > 1.0 + 1e-12 {
            let mid = (lo * hi).sqrt();
            let mass = solve(mid, &mut beta, &mut w).ok_or_else(not_converged)?;
            if norm(&w) > radius {
                lo = mid;
            } else {
                lower = lower.max(mid * mass - mid * radius * norm(&w));
                let value = hinge(&w);
                if best.as_ref().is_none_or(|b| value < b.1) {
                    best = Some((w.clone(), value, mid));
                }
                hi = mid;
                if value - lower < CERT_TOL {
                    break;
                }
            }
        }
    }
    let (x, value, multiplier) = best.ok_or_else(not_converged)?;
    Ok(HingeOptimum {
        x: ParameterVector::new(x.iter().map(|&v| S::lit(v)).collect())?,
        value: S::lit(value),
        multiplier,
        certified_gap: (value - lower).max(0.0),
    })
}

/// Result of [`smooth_optimum`].
#[derive(Debug, Clone)]
pub struct SmoothOptimum<S> {
    pub x: ParameterVector<S>,
    pub value: S,
    /// Upper bound on `value - F*` from the final gradient mapping.
    pub certified_gap: S,
    pub iterations: usize,
}

/// Minimizes an `L`-smooth, `mu`-strongly convex empirical objective over
/// `domain` with projected accelerated gradient descent.
///
/// With `x+ = P(x - grad F(x) / L)` and `G = L (x - x+)`, strong convexity
/// gives `F(x+) - F* <= ||G||^2 / (2 mu)`; iteration stops once that is
/// below `tol`.
pub fn smooth_optimum<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    data: &Dataset<S>,
    domain: &BallDomain<S>,
    x0: &ParameterVector<S>,
    smoothness: S,
    strong_convexity: S,
    tol: S,
) -> Result<SmoothOptimum<S>> {
    if !(smoothness > S::zero() && strong_convexity > S::zero() && strong_convexity <= smoothness) {
        return Err(Error::invalid("need 0 < mu <= L"));
    }
    if tol.is_nan() || tol <= S::zero() {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let step = S::one() / smoothness;
    let q = (smoothness / strong_convexity).sqrt();
    let momentum = (q - S::one()) / (q + S::one());
    let gradient_step = |x: &[S]| -> Result<Vec<S>> {
        let g = obj.full_gradient(x, data)?;
        let mut out: Vec<S> = x.iter().zip(&g).map(|(&xi, &gi)| xi - step * gi).collect();
        domain.project_in_place(&mut out)?;
        Ok(out)
    };
    let mut x = domain.project(x0)?.to_vec();
    let mut prev = x.clone();
    for k in 0..MAX_ITERATIONS {
        let next = gradient_step(&x)?;
        let mapping_sq = x
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<S>()
            * smoothness
            * smoothness;
        let cert = mapping_sq / (S::lit(2.0) * strong_convexity);
        if cert < tol {
            let value = obj.full_value(&next, data)?;
            return Ok(SmoothOptimum {
                x: ParameterVector::new(next)?,
                value,
                certified_gap: cert,
                iterations: k,
            });
        }
        let y: Vec<S> = next
            .iter()
            .zip(&prev)
            .map(|(&a, &b)| a + momentum * (a - b))
            .collect();
        prev = next;
        x = y;
        domain.project_in_place(&mut x)?;
    }
    Err(Error::Refused(
        "smooth reference solver did not reach tolerance".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::losses::LossModel;

    #[test]
    fn one_dimensional_closed_form() {
        // points +1 at a=1 and a=0.5: hinge (max(0,1-x) + max(0,1-x/2))/2
        let data = Dataset::new(
            vec![
                Sample::<f64>::dense(&[1.0], 1.0),
                Sample::dense(&[0.5], 1.0),
            ],
            1,
            "",
        )
        .unwrap();
        let opt = hinge_ball_optimum(&data, 0.5).unwrap();
        assert!((opt.x[0] - 0.5).abs() < 1e-6);
        assert!((opt.value - (0.5 + 0.75) / 2.0).abs() < 1e-7);
        let opt = hinge_ball_optimum(&data, 5.0).unwrap();
        assert!(opt.value < 1e-9);
        assert!(opt.x[0] <= 5.0 + 1e-9);
    }

    #[test]
    fn no_feasible_point_beats_reference() {
        let data = Dataset::new(
            vec![
                Sample::<f64>::dense(&[1.0, 0.2], 1.0),
                Sample::dense(&[0.3, -1.0], 1.0),
                Sample::dense(&[-0.5, 0.4], 1.0),
                Sample::dense(&[0.8, 0.8], -1.0),
            ],
            2,
            "",
        )
        .unwrap();
        let r = 1.5;
        let opt = hinge_ball_optimum(&data, r).unwrap();
        let f = |x: [f64; 2]| {
            data.samples()
                .iter()
                .map(|s| (1.0 - s.label * s.features.dot(&x)).max(0.0))
                .sum::<f64>()
                / 4.0
        };
        for k in 0..400 {
            let th = k as f64 * std::f64::consts::TAU / 400.0;
            for rad in [0.25, 0.5, 1.0, 1.5] {
                let x = [rad * th.cos(), rad * th.sin()];
                assert!(f(x) >= opt.value - 1e-9);
            }
        }
        assert!(opt.x.norm() <= r * (1.0 + 1e-9));
        assert!(opt.certified_gap < 1e-5);
    }

    #[test]
    fn smooth_matches_ridge_closed_form() {
        let inst = crate::data::gen_rank_deficient_ls::<f64>(&crate::data::RankDeficientSpec {
            n: 60,
            d: 8,
            rank: 8,
            noise: 0.3,
            seed: 4,
        })
        .unwrap();
        let lam = 0.05;
        let (x_star, f_star) = crate::data::ridge_solution(&inst.data, lam).unwrap();
        let loss = LossModel::new(crate::losses::LossKind::LeastSquares, lam).unwrap();
        let a = inst.data.max_feature_norm();
        let opt = smooth_optimum(
            &loss,
            &inst.data,
            &BallDomain::Unbounded,
            &ParameterVector::zeros(8),
            a * a + lam,
            lam,
            1e-13,
        )
        .unwrap();
        assert!(opt.value - f_star < 1e-12);
        assert!(opt.value >= f_star - 1e-12);
        assert!(opt.x.distance(&x_star) < 1e-5);
    }

    #[test]
    fn smooth_respects_ball() {
        // F(x) = mean (x - b)^2 / 2 + 0.5 x^2 / 2 with b = 4 gives x* = 8/3
        let data = Dataset::new(vec![Sample::<f64>::dense(&[1.0], 4.0)], 1, "").unwrap();
        let loss = LossModel::new(crate::losses::LossKind::LeastSquares, 0.5).unwrap();
        let dom = BallDomain::ball(ParameterVector::zeros(1), 1.0).unwrap();
        let opt = smooth_optimum(
            &loss,
            &data,
            &dom,
            &ParameterVector::zeros(1),
            1.5,
            0.5,
            1e-14,
        )
        .unwrap();
        assert!((opt.x[0] - 1.0).abs() < 1e-9);
        assert!((opt.value - (4.5 + 0.25)).abs() < 1e-9);
    }
}
