//! Gradients, the Adam optimizer and the layer-by-layer training schedule.

mod adam;
mod backprop;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use backprop::{
    backprop, gather_params, loss, loss_linear, loss_nonlinear, scatter_params, GradMode, GradientSet,
    LayerGrad, LossKind, LossSpec, TrainMask,
};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{LayerParams, NetworkKind, UnfoldedNetwork};
use crate::measurement::{build_dataset, ChannelSource, MeasurementBatch, SensingSystem, SnrPolicy};
use crate::rng::Seed;
use crate::shrinkage::{GmParams, Shrinker, SoftThresholdParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_individual: f64,
    pub lr_joint_schedule: Vec<f64>,
    /// Validation checks without relative improvement before a phase (or a
    /// joint-phase learning-rate level) ends.
    pub patience: usize,
    pub min_rel_improvement: f64,
    /// Batches per schedule step, across all learning-rate levels.
    pub max_steps: usize,
    /// Batches between validation checks; `0` means one pass over the training set.
    pub eval_every: usize,
    pub seed: u64,
    pub grad_mode: GradModeSetting,
    /// Initial `λ_0` for LAMP.
    pub lamp_lambda0: f64,
    /// Mixture size for GM-LAMP.
    pub nc: usize,
    /// Spread of the initial mixture variances above the floor, in decades.
    pub gm_init_decades: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GradModeSetting {
    #[default]
    Full,
    Detached,
}

impl From<GradModeSetting> for GradMode {
    fn from(s: GradModeSetting) -> Self {
        match s {
            GradModeSetting::Full => GradMode::Full,
            GradModeSetting::Detached => GradMode::Detached,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr_individual: 1e-3,
            lr_joint_schedule: vec![5e-4, 1e-4, 1e-5],
            patience: 3,
            min_rel_improvement: 1e-5,
            max_steps: 2000,
            eval_every: 0,
            seed: 0,
            grad_mode: GradModeSetting::Full,
            lamp_lambda0: 1.0,
            nc: 4,
            gm_init_decades: 6.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        let rates = std::iter::once(&self.lr_individual).chain(&self.lr_joint_schedule);
        if self.lr_joint_schedule.is_empty() || rates.clone().any(|&r| !(r > 0.0)) {
            return Err(Error::invalid("learning rates must be positive and the joint schedule nonempty"));
        }
        if self.patience == 0 || self.max_steps == 0 {
            return Err(Error::invalid("patience and max_steps must be at least 1"));
        }
        if self.nc == 0 {
            return Err(Error::invalid("nc must be at least 1"));
        }
        if !(self.lamp_lambda0 >= 0.0) || !(self.gm_init_decades >= 0.0) {
            return Err(Error::invalid("lamp_lambda0 and gm_init_decades must be non-negative"));
        }
        Ok(())
    }

    /// Initial mixture prior `θ_0`.
    pub fn gm_init(&self) -> GmParams {
        GmParams::spike_init(self.nc, self.gm_init_decades)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub phase: String,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSummary {
    pub layer: usize,
    /// Schedule step number (1..=8).
    pub algo_step: u8,
    pub name: String,
    pub steps: u64,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub curve: Vec<LossPoint>,
    pub phases: Vec<PhaseSummary>,
    /// Validation loss `L_t^nonlinear` after each sub-procedure `t`.
    pub sub_procedures: Vec<f64>,
    pub total_steps: u64,
    pub wall_ms: u128,
}

impl TrainReport {
    /// Loss curve as CSV: `step,phase,train_loss,val_loss`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::Config(format!("writing loss curve: {e}"));
        w.write_record(["step", "phase", "train_loss", "val_loss"]).map_err(map)?;
        for p in &self.curve {
            w.write_record([
                p.step.to_string(),
                p.phase.clone(),
                format!("{:.9e}", p.train_loss),
                format!("{:.9e}", p.val_loss),
            ])
            .map_err(map)?;
        }
        w.flush().map_err(|e| Error::Config(format!("writing loss curve: {e}")))?;
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Copies layer `t - 1` into a new layer `t` (schedule step 4).
pub fn append_layer_from_previous(net: &mut UnfoldedNetwork) {
    let last = net.layers.last().expect("network has at least one layer").clone();
    net.layers.push(last);
}

fn initial_layer(sys: &SensingSystem, kind: NetworkKind, cfg: &TrainConfig) -> LayerParams {
    LayerParams {
        b: sys.a.transpose_complex(),
        shrink: match kind {
            NetworkKind::Lamp => Shrinker::Soft(SoftThresholdParams {
                lambda: cfg.lamp_lambda0,
            }),
            NetworkKind::GmLamp => Shrinker::Gm(cfg.gm_init()),
        },
    }
}

struct PhasePlan {
    algo_step: u8,
    name: String,
    spec: LossSpec,
    mask: TrainMask,
    joint: bool,
}

fn plan_for_layer(t: usize) -> Vec<PhasePlan> {
    let depth = t + 1;
    let only = |b: bool, s: bool| {
        let mut m = TrainMask::none(depth);
        m.b[t] = b;
        m.shrink[t] = s;
        m
    };
    if t == 0 {
        return vec![
            PhasePlan {
                algo_step: 1,
                name: "L0-linear".into(),
                spec: LossSpec::linear(0),
                mask: only(true, false),
                joint: false,
            },
            PhasePlan {
                algo_step: 2,
                name: "L0-nonlinear".into(),
                spec: LossSpec::nonlinear(0),
                mask: only(false, true),
                joint: false,
            },
            PhasePlan {
                algo_step: 3,
                name: "L0-joint".into(),
                spec: LossSpec::nonlinear(0),
                mask: TrainMask::all(1),
                joint: true,
            },
        ];
    }
    let mut linear_joint = TrainMask::all(depth);
    linear_joint.shrink[t] = false;
    vec![
        PhasePlan {
            algo_step: 5,
            name: format!("L{t}-linear"),
            spec: LossSpec::linear(t),
            mask: only(true, false),
            joint: false,
        },
        PhasePlan {
            algo_step: 6,
            name: format!("L{t}-linear-joint"),
            spec: LossSpec::linear(t),
            mask: linear_joint,
            joint: true,
        },
        PhasePlan {
            algo_step: 7,
            name: format!("L{t}-nonlinear"),
            spec: LossSpec::nonlinear(t),
            mask: only(false, true),
            joint: false,
        },
        PhasePlan {
            algo_step: 8,
            name: format!("L{t}-joint"),
            spec: LossSpec::nonlinear(t),
            mask: TrainMask::all(depth),
            joint: true,
        },
    ]
}

struct Trainer<'a> {
    sys: &'a SensingSystem,
    train: &'a MeasurementBatch,
    val: &'a MeasurementBatch,
    cfg: &'a TrainConfig,
    report: TrainReport,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl Trainer<'_> {
    fn next_batch(&mut self) -> MeasurementBatch {
        let bs = self.cfg.batch_size.min(self.train.len());
        if self.cursor + bs > self.order.len() {
            self.epoch += 1;
            self.order
                .shuffle(&mut Seed(self.cfg.seed).named("shuffle").child(self.epoch).rng());
            self.cursor = 0;
        }
        let idx = &self.order[self.cursor..self.cursor + bs];
        self.cursor += bs;
        self.train.select(idx)
    }

    fn diverged(&self, phase: &str) -> Error {
        Error::Diverged {
            phase: phase.to_string(),
            report: Box::new(self.report.clone()),
        }
    }

    fn run_phase(&mut self, net: &mut UnfoldedNetwork, plan: &PhasePlan) -> Result<()> {
        let cfg = self.cfg;
        let mode: GradMode = cfg.grad_mode.into();
        let eval_every = if cfg.eval_every == 0 {
            self.train.len().div_ceil(cfg.batch_size).max(1)
        } else {
            cfg.eval_every
        };
        let single = [cfg.lr_individual];
        let rates: &[f64] = if plan.joint { &cfg.lr_joint_schedule } else { &single };

        let mut params = gather_params(net, &plan.mask);
        let mut adam = AdamState::new(params.len());
        let initial = loss(self.sys, net, plan.spec, self.val)?;
        if !initial.is_finite() {
            return Err(self.diverged(&plan.name));
        }
        let mut best = (initial, params.clone());
        let mut steps = 0usize;

        'levels: for &lr in rates {
            let mut stale = 0;
            while stale < cfg.patience {
                if steps >= cfg.max_steps {
                    break 'levels;
                }
                let mut train_sum = 0.0;
                let mut count = 0usize;
                while count < eval_every && steps < cfg.max_steps {
                    let batch = self.next_batch();
                    let grads = match backprop(net, self.sys, &batch, plan.spec, &plan.mask, mode) {
                        Ok(g) => g,
                        Err(Error::NonFinite { layer, variable }) => {
                            log::error!("{}: non-finite {variable} in layer {layer}", plan.name);
                            return Err(self.diverged(&plan.name));
                        }
                        Err(e) => return Err(e),
                    };
                    adam_step(&mut params, &grads.flatten(), &mut adam, lr);
                    scatter_params(net, &plan.mask, &params);
                    train_sum += grads.loss;
                    count += 1;
                    steps += 1;
                    self.report.total_steps += 1;
                }
                let val = loss(self.sys, net, plan.spec, self.val)?;
                self.report.curve.push(LossPoint {
                    step: self.report.total_steps,
                    phase: plan.name.clone(),
                    train_loss: train_sum / count as f64,
                    val_loss: val,
                });
                if !val.is_finite() {
                    return Err(self.diverged(&plan.name));
                }
                if val < best.0 * (1.0 - cfg.min_rel_improvement) {
                    best = (val, params.clone());
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
            // continue the next level from the best point so far
            params.clone_from(&best.1);
            scatter_params(net, &plan.mask, &params);
        }
        params.clone_from(&best.1);
        scatter_params(net, &plan.mask, &params);
        log::info!(
            "{}: {} steps, validation loss {:.6e} -> {:.6e}",
            plan.name,
            steps,
            initial,
            best.0
        );
        self.report.phases.push(PhaseSummary {
            layer: plan.spec.layer,
            algo_step: plan.algo_step,
            name: plan.name.clone(),
            steps: steps as u64,
            initial_val_loss: initial,
            final_val_loss: best.0,
        });
        Ok(())
    }
}

/// Layer-by-layer schedule: grows the network one layer at a time, alternating individual
/// and joint optimisation of the linear and shrinkage variables.
pub fn train_layer_by_layer(
    sys: &SensingSystem,
    train: &MeasurementBatch,
    val: &MeasurementBatch,
    kind: NetworkKind,
    layers: usize,
    cfg: &TrainConfig,
) -> Result<(UnfoldedNetwork, TrainReport)> {
    cfg.validate()?;
    if layers == 0 {
        return Err(Error::invalid("network needs at least one layer"));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let start = Instant::now();
    let mut net = UnfoldedNetwork {
        kind,
        layers: vec![initial_layer(sys, kind, cfg)],
    };
    net.validate(sys)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut Seed(cfg.seed).named("shuffle").child(0).rng());
    let mut trainer = Trainer {
        sys,
        train,
        val,
        cfg,
        report: TrainReport::default(),
        order,
        cursor: 0,
        epoch: 0,
    };
    for t in 0..layers {
        if t > 0 {
            append_layer_from_previous(&mut net);
        }
        for plan in plan_for_layer(t) {
            trainer.run_phase(&mut net, &plan)?;
        }
        let sub = loss(sys, &net, LossSpec::nonlinear(t), val)?;
        trainer.report.sub_procedures.push(sub);
    }
    trainer.report.wall_ms = start.elapsed().as_millis();
    Ok((net, trainer.report))
}

/// Networks trained on the low (0–10 dB) and high (10–20 dB) SNR ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSnrNetworks {
    pub low: UnfoldedNetwork,
    pub high: UnfoldedNetwork,
    pub low_report: TrainReport,
    pub high_report: TrainReport,
}

pub const LOW_SNR_RANGE: (f64, f64) = (0.0, 10.0);
pub const HIGH_SNR_RANGE: (f64, f64) = (10.0, 20.0);

/// Which trained range a test SNR falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrBand {
    Low,
    High,
}

/// `< 10 dB` goes to the low-SNR network, everything else to the high-SNR one.
/// SNRs outside `[0, 20]` dB are clamped to the nearest range with a warning.
pub fn dispatch_band(snr_db: f64) -> SnrBand {
    if snr_db < LOW_SNR_RANGE.0 || snr_db > HIGH_SNR_RANGE.1 {
        log::warn!("test SNR {snr_db} dB is outside both training ranges; using the nearest network");
    }
    if snr_db < LOW_SNR_RANGE.1 {
        SnrBand::Low
    } else {
        SnrBand::High
    }
}

impl DualSnrNetworks {
    pub fn select(&self, snr_db: f64) -> &UnfoldedNetwork {
        match dispatch_band(snr_db) {
            SnrBand::Low => &self.low,
            SnrBand::High => &self.high,
        }
    }
}

/// Sizes of the per-range training and validation sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSizes {
    pub train: usize,
    pub val: usize,
}

pub fn dual_snr_training(
    sys: &SensingSystem,
    source: ChannelSource<'_>,
    kind: NetworkKind,
    layers: usize,
    cfg: &TrainConfig,
    sizes: DatasetSizes,
) -> Result<DualSnrNetworks> {
    let seed = Seed(cfg.seed);
    let run = |label: &str, (lo, hi): (f64, f64)| -> Result<(UnfoldedNetwork, TrainReport)> {
        let policy = SnrPolicy::Range(lo, hi);
        let train = build_dataset(source, sys, policy, sizes.train, seed.named(label).named("train"))?;
        let val = build_dataset(source, sys, policy, sizes.val, seed.named(label).named("val"))?;
        train_layer_by_layer(sys, &train, &val, kind, layers, cfg)
    };
    let (low, low_report) = run("low", LOW_SNR_RANGE)?;
    let (high, high_report) = run("high", HIGH_SNR_RANGE)?;
    Ok(DualSnrNetworks {
        low,
        high,
        low_report,
        high_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch_rule() {
        assert_eq!(dispatch_band(5.0), SnrBand::Low);
        assert_eq!(dispatch_band(10.0), SnrBand::High);
        assert_eq!(dispatch_band(9.999), SnrBand::Low);
        assert_eq!(dispatch_band(-3.0), SnrBand::Low);
        assert_eq!(dispatch_band(25.0), SnrBand::High);
    }

    #[test]
    fn plans_follow_algorithm_two() {
        let p0 = plan_for_layer(0);
        assert_eq!(p0.iter().map(|p| p.algo_step).collect::<Vec<_>>(), vec![1, 2, 3]);
        let p2 = plan_for_layer(2);
        assert_eq!(p2.iter().map(|p| p.algo_step).collect::<Vec<_>>(), vec![5, 6, 7, 8]);
        assert_eq!(p2[0].mask.b, vec![false, false, true]);
        assert_eq!(p2[1].mask.b, vec![true, true, true]);
        assert_eq!(p2[1].mask.shrink, vec![true, true, false]);
        assert_eq!(p2[2].mask.shrink, vec![false, false, true]);
        assert!(p2[3].mask.b.iter().chain(&p2[3].mask.shrink).all(|&x| x));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr_joint_schedule: vec![],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
