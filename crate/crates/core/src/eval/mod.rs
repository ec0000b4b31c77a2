//! NMSE evaluation, experiment configuration and SNR sweeps.

mod config;
mod pipeline;

pub use config::{
    Band, DataConfig, EstimatorSpec, ExperimentConfig, GeometrySpec, OutputConfig, SystemConfig,
    TrainingConfig, TrainingStrategy, SCHEMA_VERSION,
};
pub use pipeline::{generate, run_sweep, train_all, Experiment, SweepOptions, TrainedModel};

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{unfolded_forward, UnfoldedNetwork};
use crate::linalg::{norm_sqr, C64};
use crate::measurement::{MeasurementBatch, SensingSystem};

/// Perfect recovery is reported at this level instead of `-inf` dB.
pub const NMSE_FLOOR_DB: f64 = -150.0;

/// Squared error and truth energy of one sample.
fn sample_terms(est: &[C64], truth: &[C64]) -> (f64, f64) {
    let err = est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    (err, norm_sqr(truth))
}

fn ratio(terms: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let (err, energy) = terms.fold((0.0, 0.0), |(e, t), (de, dt)| (e + de, t + dt));
    if !(energy > 0.0) {
        return Err(Error::invalid("NMSE undefined: total truth energy is zero"));
    }
    Ok(err / energy)
}

/// `Σ‖ĥ − h̃‖² / Σ‖h̃‖²` over the batch (linear scale).
pub fn nmse(estimates: &[Vec<C64>], truths: &[Vec<C64>]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::invalid("NMSE needs equally many, and at least one, estimates and truths"));
    }
    if estimates.iter().zip(truths).any(|(e, t)| e.len() != t.len()) {
        return Err(Error::invalid("estimate and truth lengths differ"));
    }
    ratio(estimates.iter().zip(truths).map(|(e, t)| sample_terms(e, t)))
}

pub fn to_db(linear: f64) -> f64 {
    (10.0 * linear.log10()).max(NMSE_FLOOR_DB)
}

pub fn nmse_db(estimates: &[Vec<C64>], truths: &[Vec<C64>]) -> Result<f64> {
    nmse(estimates, truths).map(to_db)
}

/// NMSE (linear) of `estimator` over a batch. Samples run in parallel; the
/// sums are taken in sample order, so the result is thread-count independent.
pub fn batch_nmse<F>(batch: &MeasurementBatch, estimator: F) -> Result<f64>
where
    F: Fn(&[C64]) -> Result<Vec<C64>> + Sync,
{
    if batch.is_empty() {
        return Err(Error::invalid("empty test batch"));
    }
    let terms = batch
        .y
        .par_iter()
        .zip(&batch.truth)
        .map(|(y, h)| estimator(y).map(|e| sample_terms(&e, h)))
        .collect::<Result<Vec<_>>>()?;
    ratio(terms.into_iter())
}

/// NMSE in dB of the output of every layer of `net` (one forward pass per sample).
pub fn layer_nmse_db(sys: &SensingSystem, net: &UnfoldedNetwork, batch: &MeasurementBatch) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty test batch"));
    }
    let per_sample = batch
        .y
        .par_iter()
        .zip(&batch.truth)
        .map(|(y, h)| {
            let (_, trace) = unfolded_forward(sys, y, net)?;
            Ok(trace
                .layers
                .iter()
                .map(|l| sample_terms(&l.estimate, h))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    (0..net.depth())
        .map(|t| ratio(per_sample.iter().map(|s| s[t])).map(to_db))
        .collect()
}

/// One (estimator, SNR) point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub estimator: String,
    pub snr_db: f64,
    pub nmse_db: f64,
    pub n_test: usize,
    pub multiplies: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// Orders rows by estimator name, then SNR.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.estimator
                .cmp(&b.estimator)
                .then(a.snr_db.total_cmp(&b.snr_db))
        });
    }

    pub fn get(&self, estimator: &str, snr_db: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.snr_db == snr_db)
    }
}

pub const CSV_HEADER: [&str; 6] = ["estimator", "snr_db", "nmse_db", "n_test", "multiplies", "wall_ms"];

/// Decimal rendering with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn write_csv(result: &ExperimentResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Config(format!("CSV write failed: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &result.rows {
        w.write_record([
            r.estimator.clone(),
            sig6(r.snr_db),
            sig6(r.nmse_db),
            r.n_test.to_string(),
            r.multiplies.to_string(),
            sig6(r.wall_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("CSV write failed: {e}")))
}

pub fn export_csv(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(result, std::io::BufWriter::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn read_csv(input: impl Read) -> Result<ExperimentResult> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd
        .headers()
        .map_err(|e| Error::Parse { record: 0, message: e.to_string() })?
        .clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            record: 0,
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let fail = |message: String| Error::Parse { record: i, message };
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let f = |k: usize| -> Result<f64> { rec[k].parse().map_err(|e| fail(format!("column {k}: {e}"))) };
        rows.push(ResultRow {
            estimator: rec[0].to_string(),
            snr_db: f(1)?,
            nmse_db: f(2)?,
            n_test: rec[3].parse().map_err(|e| fail(format!("n_test: {e}")))?,
            multiplies: rec[4].parse().map_err(|e| fail(format!("multiplies: {e}")))?,
            wall_ms: f(5)?,
        });
    }
    Ok(ExperimentResult { rows })
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn nmse_examples() {
        let truth = vec![vec![c(1.0, 0.0), c(0.0, 2.0)], vec![c(3.0, 0.0), c(0.0, 0.0)]];
        assert_eq!(nmse_db(&truth, &truth).unwrap(), NMSE_FLOOR_DB);
        let zero = vec![vec![c(0.0, 0.0); 2]; 2];
        assert_eq!(nmse(&zero, &truth).unwrap(), 1.0);
        assert_eq!(nmse_db(&zero, &truth).unwrap(), 0.0);
        // residuals: |1|² in sample 0, |1+j|² in sample 1; energy 5 + 9
        let est = vec![vec![c(0.0, 0.0), c(0.0, 2.0)], vec![c(2.0, -1.0), c(0.0, 0.0)]];
        assert!((nmse(&est, &truth).unwrap() - 3.0 / 14.0).abs() < 1e-15);
        assert!(nmse(&zero, &zero).is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(-12.345678), "-12.3457");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(10.0), "10");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(999999.7), "1000000");
    }

    #[test]
    fn empty_result_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&ExperimentResult::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "estimator,snr_db,nmse_db,n_test,multiplies,wall_ms\n");
    }
}
