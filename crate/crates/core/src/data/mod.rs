//! Datasets: sparse samples, LIBSVM text format, synthetic generators and
//! train/test splitting.

mod libsvm;
mod split;
mod synthetic;

pub use libsvm::{parse_libsvm, serialize_libsvm, LabelMode, LibsvmOptions};
pub use split::split;
pub use synthetic::{
    gen_classification, gen_rank_deficient_ls, gen_regression, hessian_min_nonzero_eigenvalue,
    ridge_solution, ClassificationSpec, LeastSquaresInstance, RankDeficientSpec, RegressionSpec,
};

use sha2::{Digest, Sha256};

use crate::{Error, Result, Scalar};

/// Sparse feature vector with strictly increasing 0-based indices.
///
/// The LIBSVM file format uses 1-based indices; the parser shifts them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<S> {
    indices: Vec<u32>,
    values: Vec<S>,
}

impl<S: Scalar> SparseVector<S> {
    /// Builds from parallel arrays; indices must be strictly increasing.
    pub fn new(indices: Vec<u32>, values: Vec<S>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid("sparse indices and values differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse indices must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse feature value"));
        }
        Ok(SparseVector { indices, values })
    }

    pub fn from_dense(dense: &[S]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        SparseVector { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, S)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    /// Smallest dense dimension that holds every index.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn dot(&self, dense: &[S]) -> S {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// `dense += scale * self`
    pub fn axpy_into(&self, scale: S, dense: &mut [S]) {
        for (i, v) in self.iter() {
            dense[i] += scale * v;
        }
    }

    pub fn norm_sq(&self) -> S {
        self.values.iter().map(|&v| v * v).sum()
    }

    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<S> {
        let mut out = vec![S::zero(); dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub(crate) fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }
}

/// One observation `z = (a, b)`: sparse features and a label (`±1` for
/// classification, any real for regression).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub features: SparseVector<S>,
    pub label: S,
}

impl<S: Scalar> Sample<S> {
    pub fn new(features: SparseVector<S>, label: S) -> Self {
        Sample { features, label }
    }

    pub fn dense(features: &[f64], label: f64) -> Self {
        let f: Vec<S> = features.iter().map(|&v| S::lit(v)).collect();
        Sample {
            features: SparseVector::from_dense(&f),
            label: S::lit(label),
        }
    }
}

/// Immutable collection of samples with a declared feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    samples: Vec<Sample<S>>,
    dim: usize,
    provenance: String,
}

impl<S: Scalar> Dataset<S> {
    /// Checks that every sample fits in `dim`.
    pub fn new(samples: Vec<Sample<S>>, dim: usize, provenance: impl Into<String>) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| s.features.min_dim() > dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.features.min_dim(),
            });
        }
        Ok(Dataset {
            samples,
            dim,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample<S>] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Option<&Sample<S>> {
        self.samples.get(i)
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, note: impl AsRef<str>) -> Self {
        if !self.provenance.is_empty() {
            self.provenance.push_str("; ");
        }
        self.provenance.push_str(note.as_ref());
        self
    }

    /// Widens the declared dimension so datasets with different maximum
    /// indices share a parameter space.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            let needed = self
                .samples
                .iter()
                .map(|s| s.features.min_dim())
                .max()
                .unwrap_or(0);
            if dim < needed {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: needed,
                });
            }
        }
        self.dim = dim;
        Ok(self)
    }

    /// Largest feature norm `max_i ||a_i||`.
    pub fn max_feature_norm(&self) -> S {
        self.samples
            .iter()
            .map(|s| s.features.norm())
            .fold(S::zero(), S::max)
    }

    pub fn max_abs_label(&self) -> S {
        self.samples
            .iter()
            .map(|s| s.label.abs())
            .fold(S::zero(), S::max)
    }

    /// Rescales every feature column by its maximum absolute value and
    /// returns the per-column factors that were divided out.
    pub fn max_abs_scale(&mut self) -> Vec<S> {
        let mut scale = vec![S::zero(); self.dim];
        for s in &self.samples {
            for (i, v) in s.features.iter() {
                scale[i] = scale[i].max(v.abs());
            }
        }
        self.divide_columns(&scale)
            .expect("factors cover every column");
        self.provenance.push_str(if self.provenance.is_empty() {
            "max-abs scaled"
        } else {
            "; max-abs scaled"
        });
        scale
    }

    /// Divides column `i` by `factors[i]`; zero factors leave the column as is.
    pub fn divide_columns(&mut self, factors: &[S]) -> Result<()> {
        if factors.len() < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: factors.len(),
            });
        }
        for s in &mut self.samples {
            let idx: Vec<usize> = s.features.indices().iter().map(|&i| i as usize).collect();
            for (v, i) in s.features.values_mut().iter_mut().zip(idx) {
                if factors[i] > S::zero() {
                    *v /= factors[i];
                }
            }
        }
        Ok(())
    }

    /// Copy with position `j` replaced by `sample`.
    pub fn replaced(&self, j: usize, sample: Sample<S>) -> Result<Self> {
        if j >= self.len() {
            return Err(Error::invalid(format!(
                "replacement index {j} out of range for n={}",
                self.len()
            )));
        }
        if sample.features.min_dim() > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: sample.features.min_dim(),
            });
        }
        let mut samples = self.samples.clone();
        samples[j] = sample;
        Ok(Dataset {
            samples,
            dim: self.dim,
            provenance: self.provenance.clone(),
        })
    }

    /// Subset by positions, in the given order.
    pub fn select(&self, positions: &[usize], provenance: impl Into<String>) -> Self {
        Dataset {
            samples: positions.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
            provenance: provenance.into(),
        }
    }

    /// SHA-256 over dimension, labels and features (not provenance), hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.samples.len() as u64).to_le_bytes());
        for s in &self.samples {
            h.update(s.label.as_f64().to_bits().to_le_bytes());
            h.update((s.features.nnz() as u64).to_le_bytes());
            for (i, v) in s.features.iter() {
                h.update((i as u64).to_le_bytes());
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
