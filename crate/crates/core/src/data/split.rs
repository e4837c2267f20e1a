use rand::seq::SliceRandom;

use super::Dataset;
use crate::sampling::rng_from_seed;
use crate::{Error, Result, Scalar};

/// Random train/test partition. The test side gets `round(fraction * n)`
/// samples; both sides must be non-empty.
pub fn split<S: Scalar>(
    data: &Dataset<S>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} leaves an empty side for n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let note = |side: &str| {
        format!(
            "{}; {side} split seed={seed} fraction={test_fraction}",
            data.provenance()
        )
    };
    Ok((
        data.select(&train_idx, note("train")),
        data.select(&test_idx, note("test")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    fn toy(n: usize) -> Dataset<f64> {
        let samples = (0..n).map(|i| Sample::dense(&[i as f64], 1.0)).collect();
        Dataset::new(samples, 1, "toy").unwrap()
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let d = toy(101);
        let (tr, te) = split(&d, 0.3, 7).unwrap();
        assert_eq!(tr.len() + te.len(), 101);
        assert_eq!(te.len(), 30);
        let mut all: Vec<f64> = tr
            .samples()
            .iter()
            .chain(te.samples())
            .map(|s| s.features.to_dense(1)[0])
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..101).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_per_seed() {
        let d = toy(50);
        let (a, b) = split(&d, 0.2, 1).unwrap();
        let (c, e) = split(&d, 0.2, 1).unwrap();
        assert_eq!(a.content_hash(), c.content_hash());
        assert_eq!(b.content_hash(), e.content_hash());
        let (f, _) = split(&d, 0.2, 2).unwrap();
        assert_ne!(a.content_hash(), f.content_hash());
    }

    #[test]
    fn empty_side_is_an_error() {
        let d = toy(10);
        assert!(split(&d, 0.01, 1).is_err());
        assert!(split(&d, 0.99, 1).is_err());
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
    }
}
