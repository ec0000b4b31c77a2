use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, NetworkKind, AMP_DEFAULT_LAMBDA};
use crate::training::{TrainConfig, HIGH_SNR_RANGE, LOW_SNR_RANGE};

pub const SCHEMA_VERSION: u32 = 1;

/// Experiment description, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub snr_grid_db: Vec<f64>,
    pub estimators: Vec<EstimatorSpec>,
    pub data: DataConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub training: TrainingConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometrySpec {
    Ula {
        n: usize,
        #[serde(default = "half")]
        spacing: f64,
    },
    Upa {
        n1: usize,
        n2: usize,
        #[serde(default = "half")]
        spacing: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl GeometrySpec {
    pub fn geometry(&self) -> ArrayGeometry {
        match *self {
            GeometrySpec::Ula { n, spacing } => ArrayGeometry::ula(n).with_spacing(spacing),
            GeometrySpec::Upa { n1, n2, spacing } => ArrayGeometry::upa(n1, n2).with_spacing(spacing),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub geometry: GeometrySpec,
    /// Measurements per user, `M = Q·N_RF`.
    pub m: usize,
    /// Number of users; each is an independent single-user problem, so this is metadata only.
    #[serde(default = "one")]
    pub k_users: usize,
    pub num_paths: usize,
    /// Spatial channels to use instead of simulated ones.
    #[serde(default)]
    pub channel_file: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EstimatorSpec {
    Omp {
        sparsity: usize,
        #[serde(default)]
        label: Option<String>,
    },
    Amp {
        #[serde(default = "amp_iterations")]
        iterations: usize,
        #[serde(default = "amp_lambda")]
        lambda: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Lamp {
        layers: usize,
        #[serde(default)]
        label: Option<String>,
    },
    Gmlamp {
        layers: usize,
        #[serde(default = "four")]
        nc: usize,
        #[serde(default)]
        label: Option<String>,
    },
}

fn amp_iterations() -> usize {
    10
}

fn amp_lambda() -> f64 {
    AMP_DEFAULT_LAMBDA
}

fn four() -> usize {
    4
}

impl EstimatorSpec {
    /// Name used in CSV rows and checkpoint file names.
    pub fn label(&self) -> String {
        let (label, default) = match self {
            EstimatorSpec::Omp { label, .. } => (label, "omp"),
            EstimatorSpec::Amp { label, .. } => (label, "amp"),
            EstimatorSpec::Lamp { label, .. } => (label, "lamp"),
            EstimatorSpec::Gmlamp { label, .. } => (label, "gmlamp"),
        };
        label.clone().unwrap_or_else(|| default.to_string())
    }

    pub fn kind(&self) -> EstimatorKind {
        match *self {
            EstimatorSpec::Omp { .. } => EstimatorKind::Omp,
            EstimatorSpec::Amp { .. } => EstimatorKind::Amp,
            EstimatorSpec::Lamp { .. } => EstimatorKind::Lamp,
            EstimatorSpec::Gmlamp { nc, .. } => EstimatorKind::GmLamp { nc },
        }
    }

    /// `S` for OMP, `T` otherwise.
    pub fn depth(&self) -> usize {
        match *self {
            EstimatorSpec::Omp { sparsity, .. } => sparsity,
            EstimatorSpec::Amp { iterations, .. } => iterations,
            EstimatorSpec::Lamp { layers, .. } | EstimatorSpec::Gmlamp { layers, .. } => layers,
        }
    }

    pub fn network_kind(&self) -> Option<NetworkKind> {
        match self {
            EstimatorSpec::Lamp { .. } => Some(NetworkKind::Lamp),
            EstimatorSpec::Gmlamp { .. } => Some(NetworkKind::GmLamp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Training samples per SNR band.
    pub train: usize,
    /// Validation samples per SNR band.
    pub val: usize,
    /// Test samples per SNR grid point.
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainingStrategy {
    /// One network for 0–10 dB and one for 10–20 dB, selected by test SNR.
    #[default]
    Dual,
    /// A single network trained over `range_db`.
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub strategy: TrainingStrategy,
    pub range_db: [f64; 2],
    /// Train missing networks during `evaluate` instead of failing.
    pub inline: bool,
    pub optimizer: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            strategy: TrainingStrategy::Dual,
            range_db: [LOW_SNR_RANGE.0, LOW_SNR_RANGE.1],
            inline: false,
            optimizer: TrainConfig::default(),
        }
    }
}

/// A trained SNR band: its file-name tag and the SNR range of its data.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub tag: &'static str,
    pub range_db: (f64, f64),
}

impl TrainingConfig {
    pub fn bands(&self) -> Vec<Band> {
        match self.strategy {
            TrainingStrategy::Dual => vec![
                Band {
                    tag: "low",
                    range_db: LOW_SNR_RANGE,
                },
                Band {
                    tag: "high",
                    range_db: HIGH_SNR_RANGE,
                },
            ],
            TrainingStrategy::Range => vec![Band {
                tag: "range",
                range_db: (self.range_db[0], self.range_db[1]),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Datasets, checkpoints, training reports and results go here.
    pub dir: PathBuf,
    #[serde(default = "results_name")]
    pub results: String,
}

fn results_name() -> String {
    "results.csv".to_string()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn n(&self) -> usize {
        self.system.geometry.geometry().antennas()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.system.geometry.geometry().validate()?;
        let n = self.n();
        if self.system.m == 0 || self.system.m > n {
            return bad(format!("need 1 <= m <= n, got m = {}, n = {n}", self.system.m));
        }
        if self.system.num_paths == 0 || self.system.k_users == 0 {
            return bad("num_paths and k_users must be at least 1".into());
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_grid_db must be nonempty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) || self.snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
            return bad("snr_grid_db must be finite and strictly increasing".into());
        }
        if self.data.train == 0 || self.data.val == 0 || self.data.test == 0 {
            return bad("dataset sizes must be at least 1".into());
        }
        let mut labels: Vec<String> = self.estimators.iter().map(EstimatorSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("estimator labels must be unique".into());
        }
        for e in &self.estimators {
            let label = e.label();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("estimator label {label:?} must be alphanumeric, '-' or '_'"));
            }
            match *e {
                EstimatorSpec::Omp { sparsity, .. } if sparsity == 0 || sparsity > self.system.m => {
                    return bad(format!("{label}: sparsity must be in 1..=m"))
                }
                EstimatorSpec::Amp { iterations, lambda, .. } if iterations == 0 || !(lambda >= 0.0) => {
                    return bad(format!("{label}: need iterations >= 1 and lambda >= 0"))
                }
                EstimatorSpec::Lamp { layers: 0, .. } | EstimatorSpec::Gmlamp { layers: 0, .. } => {
                    return bad(format!("{label}: layers must be at least 1"))
                }
                EstimatorSpec::Gmlamp { nc: 0, .. } => return bad(format!("{label}: nc must be at least 1")),
                _ => {}
            }
        }
        let [lo, hi] = self.training.range_db;
        if !(lo <= hi) {
            return bad(format!("training.range_db [{lo}, {hi}] is not ordered"));
        }
        self.training.optimizer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
schema_version = 1
snr_grid_db = [0.0, 5.0, 10.0]
seed = 3

[system]
geometry = { kind = "ula", n = 64 }
m = 32
num_paths = 3

[[estimators]]
kind = "omp"
sparsity = 8

[[estimators]]
kind = "gmlamp"
layers = 4

[data]
train = 100
val = 20
test = 10

[training]
strategy = "range"
range_db = [0.0, 10.0]

[training.optimizer]
max_steps = 50

[output]
dir = "out"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(DESK).unwrap();
        assert_eq!(cfg.n(), 64);
        assert_eq!(cfg.estimators[1].label(), "gmlamp");
        assert_eq!(cfg.estimators[1].kind(), EstimatorKind::GmLamp { nc: 4 });
        assert_eq!(cfg.training.optimizer.max_steps, 50);
        assert_eq!(cfg.training.optimizer.batch_size, 128);
        assert_eq!(cfg.training.bands().len(), 1);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let unsorted = DESK.replace("[0.0, 5.0, 10.0]", "[5.0, 0.0]");
        assert!(ExperimentConfig::from_toml(&unsorted).is_err());
        let version = DESK.replace("schema_version = 1", "schema_version = 9");
        assert!(ExperimentConfig::from_toml(&version).is_err());
        let unknown = DESK.replace("num_paths = 3", "num_paths = 3\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
    }
}
