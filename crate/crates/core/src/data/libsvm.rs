//! LIBSVM / svmlight text format.
//!
//! ```text
//! <label> <index>:<value> <index>:<value> ... [# comment]
//! ```
//!
//! Indices are 1-based and strictly increasing within a line. Blank lines and
//! anything after `#` are ignored.

use super::{Dataset, Sample, SparseVector};
use crate::{Error, Result, Scalar};

/// How label tokens are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// Binary labels `+1` / `-1` (`1` accepted as `+1`).
    #[default]
    PlusMinusOne,
    /// Binary labels `0` / `1`, mapped to `-1` / `+1`.
    ZeroOne,
    /// Any finite real label (regression).
    Real,
}

#[derive(Debug, Clone, Default)]
pub struct LibsvmOptions {
    pub labels: LabelMode,
    /// Declared dimension; must be at least the largest index seen.
    pub dim: Option<usize>,
    pub provenance: Option<String>,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_label<S: Scalar>(tok: &str, mode: LabelMode, line: usize) -> Result<S> {
    let v: f64 = tok
        .parse()
        .map_err(|_| err(line, format!("non-numeric label `{tok}`")))?;
    if !v.is_finite() {
        return Err(err(line, format!("non-finite label `{tok}`")));
    }
    let mapped = match mode {
        LabelMode::Real => v,
        LabelMode::PlusMinusOne if v == 1.0 || v == -1.0 => v,
        LabelMode::ZeroOne if v == 1.0 => 1.0,
        LabelMode::ZeroOne if v == 0.0 => -1.0,
        _ => return Err(err(line, format!("label `{tok}` outside the accepted set"))),
    };
    Ok(S::lit(mapped))
}

/// Parses LIBSVM text into a dataset. `d` is the largest index seen unless
/// overridden by `opts.dim`.
pub fn parse_libsvm<S: Scalar>(text: &str, opts: &LibsvmOptions) -> Result<Dataset<S>> {
    let mut samples = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label = parse_label::<S>(tokens.next().expect("non-empty line"), opts.labels, line)?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(line, format!("feature token `{tok}` has no colon")))?;
            let idx: u64 = idx
                .parse()
                .map_err(|_| err(line, format!("non-numeric index `{idx}`")))?;
            if idx < 1 || idx > u32::MAX as u64 {
                return Err(err(
                    line,
                    format!("index {idx} out of range (indices are 1-based)"),
                ));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(line, format!("non-numeric value `{val}`")))?;
            if !val.is_finite() {
                return Err(err(line, format!("non-finite value `{val}`")));
            }
            let zero_based = (idx - 1) as u32;
            if indices.last().is_some_and(|&prev| zero_based <= prev) {
                return Err(err(line, format!("non-increasing index at line {line}")));
            }
            max_index = max_index.max(idx as usize);
            indices.push(zero_based);
            values.push(S::lit(val));
        }
        let features = SparseVector::new(indices, values).map_err(|e| err(line, e.to_string()))?;
        samples.push(Sample::new(features, label));
    }
    let dim = match opts.dim {
        Some(d) if d < max_index => {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: max_index,
            })
        }
        Some(d) => d,
        None => max_index,
    };
    let provenance = opts
        .provenance
        .clone()
        .unwrap_or_else(|| "libsvm".to_string());
    Dataset::new(samples, dim, provenance)
}

fn format_label<S: Scalar>(label: S) -> String {
    let v = label.as_f64();
    if v == 1.0 {
        "+1".to_string()
    } else if v == -1.0 {
        "-1".to_string()
    } else {
        format!("{label}")
    }
}

/// Canonical LIBSVM text: shortest round-trip numerals, one line per sample,
/// trailing newline.
pub fn serialize_libsvm<S: Scalar>(data: &Dataset<S>) -> String {
    let mut out = String::new();
    for s in data.samples() {
        out.push_str(&format_label(s.label));
        for (i, v) in s.features.iter() {
            out.push_str(&format!(" {}:{}", i + 1, v));
        }
        out.push('\n');
    }
    out
}
