//! CSV writers. Every row carries the config fingerprint; files are created
//! fresh for each run and flushed after every row.

use std::fs::File;
use std::path::{Path, PathBuf};

use piwa_core::averaging::Scheme;
use piwa_core::losses::{misclassification_rate, Objective};
use piwa_core::optimizer::{Checkpoint, Observer};
use piwa_core::{Dataset, Loss};

use crate::config::{scheme_tag, TestMetric};
use crate::error::{CliError, CliResult};

pub const TRACE_HEADER: [&str; 9] = [
    "fingerprint",
    "seed",
    "scheme",
    "alpha",
    "t",
    "obj_avg",
    "obj_last",
    "test_metric",
    "wall_ms",
];

pub const STABILITY_HEADER: [&str; 8] = [
    "fingerprint",
    "seed",
    "alpha",
    "trial",
    "param_dev_avg",
    "param_dev_last",
    "loss_dev_max",
    "thm_bound",
];

/// Shortest round-trip decimal form; identical inputs give identical text.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(&format!("cannot create {}", dir.display()), e))
}

/// CSV file that flushes after every record.
pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvFile {
    pub fn create<I, T>(path: &Path, header: I) -> CliResult<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let file = File::create(path)
            .map_err(|e| CliError::io(&format!("cannot create {}", path.display()), e))?;
        let mut f = CsvFile {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(file),
        };
        f.row(header)?;
        Ok(f)
    }

    pub fn row<I, T>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        self.writer
            .flush()
            .map_err(|e| CliError::io(&format!("cannot write {}", self.path.display()), e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Trace file name for one run.
pub fn trace_name(scheme: &Scheme, seed: u64) -> String {
    format!("trace_{}_seed{seed}.csv", scheme_tag(scheme))
}

/// Observer that writes one trace row per checkpoint and evaluates the
/// configured test metric.
pub struct TraceWriter<'a> {
    file: CsvFile,
    fingerprint: String,
    seed: u64,
    scheme: String,
    alpha: String,
    metric: TestMetric,
    loss: &'a Loss,
    test: Option<&'a Dataset>,
    failure: Option<CliError>,
}

impl<'a> TraceWriter<'a> {
    pub fn create(
        path: &Path,
        fingerprint: &str,
        seed: u64,
        scheme: &Scheme,
        metric: TestMetric,
        loss: &'a Loss,
        test: Option<&'a Dataset>,
    ) -> CliResult<Self> {
        if metric != TestMetric::None && test.is_none() {
            return Err(CliError::config("a test metric needs a test split"));
        }
        Ok(TraceWriter {
            file: CsvFile::create(path, TRACE_HEADER)?,
            fingerprint: fingerprint.to_string(),
            seed,
            scheme: scheme_tag(scheme),
            alpha: opt(scheme.alpha()),
            metric,
            loss,
            test,
            failure: None,
        })
    }

    /// Write error recorded while the optimizer was running.
    pub fn take_failure(&mut self) -> Option<CliError> {
        self.failure.take()
    }
}

impl Observer<f64> for TraceWriter<'_> {
    fn test_metric(&self, x: &[f64]) -> piwa_core::Result<Option<f64>> {
        match (self.metric, self.test) {
            (TestMetric::Misclassification, Some(t)) => misclassification_rate(x, t).map(Some),
            (TestMetric::Objective, Some(t)) => self.loss.full_value(x, t).map(Some),
            _ => Ok(None),
        }
    }

    fn on_checkpoint(&mut self, cp: &Checkpoint<f64>) -> piwa_core::Result<()> {
        let row = [
            self.fingerprint.clone(),
            self.seed.to_string(),
            self.scheme.clone(),
            self.alpha.clone(),
            cp.t.to_string(),
            opt(cp.obj_avg),
            num(cp.obj_last),
            opt(cp.test_metric),
            num(cp.wall_ms),
        ];
        self.file.row(row).map_err(|e| {
            let msg = e.to_string();
            self.failure = Some(e);
            piwa_core::Error::Refused(msg)
        })
    }
}
