use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::channel::ChannelSample;
use crate::error::{Error, Result};
use crate::estimators::{
    amp_estimate, count_multiplies, omp_estimate, unfolded_forward, AmpConfig, UnfoldedNetwork,
};
use crate::io;
use crate::measurement::{build_dataset, gen_sensing, ChannelSource, MeasurementBatch, SensingSystem, SnrPolicy};
use crate::rng::Seed;
use crate::training::{dispatch_band, train_layer_by_layer, SnrBand, TrainConfig, TrainReport};

use super::config::{Band, EstimatorSpec, ExperimentConfig, TrainingStrategy};
use super::{batch_nmse, to_db, ExperimentResult, ResultRow};

/// A configured experiment: the shared sensing system and channel source.
///
/// All randomness is derived from `cfg.seed` through named child streams, so
/// every dataset can be regenerated instead of loaded.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub sys: SensingSystem,
    channels: Option<Vec<ChannelSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = Seed(cfg.seed);
        let sys = gen_sensing(cfg.n(), cfg.system.m, &mut seed.named("sensing").rng())?;
        let channels = match &cfg.system.channel_file {
            Some(path) => {
                let chans = io::import_external_channels(path, &cfg.system.geometry.geometry())?;
                if chans.is_empty() {
                    return Err(Error::invalid(format!("channel file {} holds no records", path.display())));
                }
                Some(chans)
            }
            None => None,
        };
        let exp = Self { cfg, sys, channels };
        exp.check_stored_sensing()?;
        Ok(exp)
    }

    fn check_stored_sensing(&self) -> Result<()> {
        let path = self.sensing_path();
        if path.exists() && io::load_sensing(&path)?.a != self.sys.a {
            return Err(Error::Config(format!(
                "{} was generated with a different seed or size; rerun `beamscope generate`",
                path.display()
            )));
        }
        Ok(())
    }

    fn seed(&self) -> Seed {
        Seed(self.cfg.seed)
    }

    pub fn source(&self) -> ChannelSource<'_> {
        match &self.channels {
            Some(c) => ChannelSource::Samples(c),
            None => ChannelSource::Simulated {
                geometry: self.cfg.system.geometry.geometry(),
                num_paths: self.cfg.system.num_paths,
            },
        }
    }

    fn dir(&self) -> &Path {
        &self.cfg.output.dir
    }

    pub fn sensing_path(&self) -> PathBuf {
        self.dir().join("sensing.bin")
    }

    pub fn dataset_path(&self, band: &Band, split: Split) -> PathBuf {
        self.dir().join(format!("{}_{}.bin", band.tag, split.tag()))
    }

    pub fn test_path(&self, snr_index: usize) -> PathBuf {
        self.dir().join(format!("test_{snr_index}.bin"))
    }

    pub fn checkpoint_path(&self, label: &str, band: &Band) -> PathBuf {
        self.dir().join(format!("{label}_{}.ckpt", band.tag))
    }

    pub fn report_path(&self, label: &str, band: &Band) -> PathBuf {
        self.dir().join(format!("{label}_{}_train.csv", band.tag))
    }

    pub fn results_path(&self) -> PathBuf {
        self.dir().join(&self.cfg.output.results)
    }

    pub fn make_dataset(&self, band: &Band, split: Split) -> Result<MeasurementBatch> {
        let count = match split {
            Split::Train => self.cfg.data.train,
            Split::Val => self.cfg.data.val,
        };
        let (lo, hi) = band.range_db;
        let seed = self.seed().named(band.tag).named(split.tag());
        build_dataset(self.source(), &self.sys, SnrPolicy::Range(lo, hi), count, seed)
    }

    pub fn make_test_set(&self, snr_index: usize) -> Result<MeasurementBatch> {
        let snr = self.cfg.snr_grid_db[snr_index];
        let seed = self.seed().named("test").child(snr_index as u64);
        build_dataset(self.source(), &self.sys, SnrPolicy::Single(snr), self.cfg.data.test, seed)
    }

    fn load_or(&self, path: &Path, make: impl FnOnce() -> Result<MeasurementBatch>) -> Result<MeasurementBatch> {
        if !path.exists() {
            return make();
        }
        let (n, m, batch) = io::load_dataset(path)?;
        if n != self.sys.n || m != self.sys.m {
            return Err(Error::Config(format!(
                "{} holds ({n}, {m}) data but the config has ({}, {})",
                path.display(),
                self.sys.n,
                self.sys.m
            )));
        }
        Ok(batch)
    }

    /// Stored dataset if present, otherwise regenerated from the seed.
    pub fn dataset(&self, band: &Band, split: Split) -> Result<MeasurementBatch> {
        self.load_or(&self.dataset_path(band, split), || self.make_dataset(band, split))
    }

    pub fn test_set(&self, snr_index: usize) -> Result<MeasurementBatch> {
        self.load_or(&self.test_path(snr_index), || self.make_test_set(snr_index))
    }

    /// Optimiser settings with the experiment seed folded in.
    pub fn train_config(&self, label: &str, band: &Band) -> TrainConfig {
        let mut tc = self.cfg.training.optimizer.clone();
        tc.seed = self.seed().named(label).named(band.tag).0 ^ tc.seed;
        if let Some(EstimatorSpec::Gmlamp { nc, .. }) = self.estimator(label) {
            tc.nc = *nc;
        }
        tc
    }

    fn estimator(&self, label: &str) -> Option<&EstimatorSpec> {
        self.cfg.estimators.iter().find(|e| e.label() == label)
    }

    /// The trained band that serves test SNR `snr_db`.
    pub fn band_for(&self, snr_db: f64) -> Band {
        let bands = self.cfg.training.bands();
        match self.cfg.training.strategy {
            TrainingStrategy::Range => bands[0].clone(),
            TrainingStrategy::Dual => match dispatch_band(snr_db) {
                SnrBand::Low => bands[0].clone(),
                SnrBand::High => bands[1].clone(),
            },
        }
    }

    pub fn train_one(&self, spec: &EstimatorSpec, band: &Band) -> Result<TrainedModel> {
        let kind = spec
            .network_kind()
            .ok_or_else(|| Error::invalid(format!("{} is not a learned estimator", spec.label())))?;
        let label = spec.label();
        let train = self.dataset(band, Split::Train)?;
        let val = self.dataset(band, Split::Val)?;
        let tc = self.train_config(&label, band);
        log::info!("training {label} on {} dB to {} dB", band.range_db.0, band.range_db.1);
        let (net, report) = train_layer_by_layer(&self.sys, &train, &val, kind, spec.depth(), &tc)?;
        let checkpoint = self.checkpoint_path(&label, band);
        io::save_checkpoint(&checkpoint, &net)?;
        report.export_csv(&self.report_path(&label, band))?;
        Ok(TrainedModel {
            label,
            band: band.tag,
            checkpoint,
            net,
            report,
        })
    }

    /// Loads the checkpoint serving `spec` at `snr_db`, training it first when
    /// inline training is enabled.
    pub fn network_for(&self, spec: &EstimatorSpec, snr_db: f64) -> Result<UnfoldedNetwork> {
        let band = self.band_for(snr_db);
        let label = spec.label();
        let path = self.checkpoint_path(&label, &band);
        let net = if path.exists() {
            io::load_checkpoint(&path)?
        } else if self.cfg.training.inline {
            self.train_one(spec, &band)?.net
        } else {
            return Err(Error::MissingCheckpoint { estimator: label, path });
        };
        net.validate(&self.sys)?;
        let nc_ok = match spec {
            EstimatorSpec::Gmlamp { nc, .. } => net.nc() == *nc,
            _ => true,
        };
        if Some(net.kind) != spec.network_kind() || net.depth() != spec.depth() || !nc_ok {
            return Err(Error::Config(format!(
                "{}: checkpoint {} does not match the configured network",
                label,
                path.display()
            )));
        }
        Ok(net)
    }
}

/// A network produced by [`train_all`].
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub label: String,
    pub band: &'static str,
    pub checkpoint: PathBuf,
    pub net: UnfoldedNetwork,
    pub report: TrainReport,
}

/// Writes the sensing matrix, the per-band training/validation sets and one
/// test set per SNR point. Returns the written paths.
pub fn generate(exp: &Experiment) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = exp.sensing_path();
    io::save_sensing(&path, &exp.sys)?;
    written.push(path);
    let (n, m) = (exp.sys.n, exp.sys.m);
    if exp.cfg.estimators.iter().any(|e| e.network_kind().is_some()) {
        for band in exp.cfg.training.bands() {
            for split in [Split::Train, Split::Val] {
                let path = exp.dataset_path(&band, split);
                io::save_dataset(&path, n, m, &exp.make_dataset(&band, split)?)?;
                written.push(path);
            }
        }
    }
    for i in 0..exp.cfg.snr_grid_db.len() {
        let path = exp.test_path(i);
        io::save_dataset(&path, n, m, &exp.make_test_set(i)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Trains every learned estimator on every band (optionally only `only`).
pub fn train_all(exp: &Experiment, only: Option<&str>) -> Result<Vec<TrainedModel>> {
    let specs: Vec<&EstimatorSpec> = exp
        .cfg
        .estimators
        .iter()
        .filter(|e| e.network_kind().is_some())
        .filter(|e| only.map_or(true, |o| e.label() == o))
        .collect();
    if let (Some(o), true) = (only, specs.is_empty()) {
        return Err(Error::Config(format!("no learned estimator labelled {o:?} in the config")));
    }
    let mut out = Vec::new();
    for spec in specs {
        for band in exp.cfg.training.bands() {
            out.push(exp.train_one(spec, &band)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Record wall-clock times; off in the reference mode so output is byte-stable.
    pub record_wall_time: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            record_wall_time: true,
        }
    }
}

/// Runs every configured estimator at every SNR point.
pub fn run_sweep(exp: &Experiment, opts: SweepOptions) -> Result<ExperimentResult> {
    let (n, m) = (exp.sys.n, exp.sys.m);
    let sys = &exp.sys;
    let mut result = ExperimentResult::default();
    for (i, &snr) in exp.cfg.snr_grid_db.iter().enumerate() {
        let test = exp.test_set(i)?;
        for spec in &exp.cfg.estimators {
            let net = match spec.network_kind() {
                Some(_) => Some(exp.network_for(spec, snr)?),
                None => None,
            };
            let start = Instant::now();
            let lin = match (spec, &net) {
                (EstimatorSpec::Omp { sparsity, .. }, _) => batch_nmse(&test, |y| omp_estimate(sys, y, *sparsity))?,
                (EstimatorSpec::Amp { iterations, lambda, .. }, _) => {
                    let ac = AmpConfig {
                        iterations: *iterations,
                        lambda: *lambda,
                    };
                    batch_nmse(&test, |y| amp_estimate(sys, y, &ac).map(|r| r.0))?
                }
                (_, Some(net)) => batch_nmse(&test, |y| unfolded_forward(sys, y, net).map(|r| r.0))?,
                (_, None) => unreachable!("learned estimators always load a network"),
            };
            let wall_ms = if opts.record_wall_time {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            result.rows.push(ResultRow {
                estimator: spec.label(),
                snr_db: snr,
                nmse_db: to_db(lin),
                n_test: test.len(),
                multiplies: count_multiplies(spec.kind(), n, m, spec.depth()),
                wall_ms,
            });
        }
    }
    result.sort();
    Ok(result)
}
