//! Independent reference computations and the oracle suites behind `beamscope oracle`.
//!
//! The mixture posterior mean is recomputed by brute-force 2-D quadrature of
//! `∫ h p(r|h) p(h) dh / ∫ p(r|h) p(h) dh`; derivatives and gradients are checked
//! against central finite differences.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::estimators::{amp_estimate, lamp_forward, AmpConfig, NetworkKind, UnfoldedNetwork, AMP_DEFAULT_LAMBDA};
use crate::linalg::{ComplexMatrix, C64};
use crate::measurement::{build_dataset, gen_sensing, ChannelSource, MeasurementBatch, SensingSystem, SnrPolicy};
use crate::channel::ArrayGeometry;
use crate::rng::{Seed, StreamRng};
use crate::shrinkage::{
    gm_shrinkage, gm_shrinkage_derivs, shrink_second_derivs, soft_threshold_derivs, GmParams, Shrinker,
    SoftThresholdParams,
};
use crate::training::{backprop, gather_params, loss, scatter_params, GradMode, LossSpec, TrainMask};

const J: C64 = C64 { re: 0.0, im: 1.0 };

/// Mixture prior in constrained form; zero variances (spikes) are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrior {
    pub weights: Vec<f64>,
    pub means: Vec<C64>,
    pub variances: Vec<f64>,
}

impl From<&GmParams> for MixturePrior {
    fn from(g: &GmParams) -> Self {
        Self {
            weights: g.weights(),
            means: g.means.clone(),
            variances: g.variances(),
        }
    }
}

fn cn_log_density(x: C64, mu: C64, var: f64) -> f64 {
    -(x - mu).norm_sqr() / var - (std::f64::consts::PI * var).ln()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Posterior mean of `h` given `r = h + w`, `w ~ CN(0, σ²)`, by trapezoid
/// quadrature with `points` nodes per axis over ±8 posterior deviations around
/// each component. Spike components enter through their exact limit.
pub fn gm_posterior_quadrature(r: C64, prior: &MixturePrior, sigma2: f64, points: usize) -> C64 {
    assert!(sigma2 > 0.0 && points >= 3);
    let mut log_mass = Vec::with_capacity(prior.weights.len());
    let mut means = Vec::with_capacity(prior.weights.len());
    for ((&p, &mu), &var) in prior.weights.iter().zip(&prior.means).zip(&prior.variances) {
        if var == 0.0 {
            log_mass.push(p.ln() + cn_log_density(r, mu, sigma2));
            means.push(mu);
            continue;
        }
        let post_var = sigma2 * var / (sigma2 + var);
        let centre = (sigma2 * mu + var * r) / (sigma2 + var);
        // real/imag parts each have variance post_var / 2
        let sd = (post_var / 2.0).sqrt();
        let half = 8.0 * sd;
        let step = 2.0 * half / (points - 1) as f64;
        let mut logs = Vec::with_capacity(points * points);
        let mut nodes = Vec::with_capacity(points * points);
        for a in 0..points {
            let wa: f64 = if a == 0 || a == points - 1 { 0.5 } else { 1.0 };
            for b in 0..points {
                let wb = if b == 0 || b == points - 1 { 0.5 } else { 1.0 };
                let h = centre + C64::new(-half + a as f64 * step, -half + b as f64 * step);
                logs.push((wa * wb).ln() + cn_log_density(r, h, sigma2) + cn_log_density(h, mu, var));
                nodes.push(h);
            }
        }
        let lz = log_sum_exp(&logs);
        let mean: C64 = logs.iter().zip(&nodes).map(|(l, h)| h * (l - lz).exp()).sum();
        log_mass.push(p.ln() + lz + 2.0 * step.ln());
        means.push(mean);
    }
    let total = log_sum_exp(&log_mass);
    log_mass.iter().zip(&means).map(|(l, m)| m * (l - total).exp()).sum()
}

/// Quadrature oracle at 401 nodes per axis.
pub fn gm_posterior_oracle(r: C64, theta: &GmParams, sigma2: f64) -> C64 {
    gm_posterior_quadrature(r, &MixturePrior::from(theta), sigma2, 401)
}

/// Central-difference Wirtinger pair `(∂f/∂r, ∂f/∂r*)`.
pub fn fd_wirtinger(f: impl Fn(C64) -> C64, r: C64, h: f64) -> (C64, C64) {
    let fx = (f(r + h) - f(r - h)) / (2.0 * h);
    let fy = (f(r + J * h) - f(r - J * h)) / (2.0 * h);
    ((fx - J * fy) * 0.5, (fx + J * fy) * 0.5)
}

/// Central difference of `f` along coordinate `i`.
pub fn fd_partial(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Outcome of one oracle suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases,
            worst,
            tolerance,
            passed: worst.is_finite() && worst <= tolerance,
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} cases, worst {:.3e} (tol {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance
        )
    }
}

fn cn(rng: &mut StreamRng, scale: f64) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * (scale / std::f64::consts::SQRT_2)
}

fn log_uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

/// Random mixture with `nc` components, variances in `[1e-2, 10]`.
pub fn random_gm(rng: &mut StreamRng, nc: usize) -> GmParams {
    GmParams {
        weights_raw: (0..nc).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        means: (0..nc).map(|_| cn(rng, 1.0)).collect(),
        log_vars: (0..nc).map(|_| log_uniform(rng, 1e-2, 10.0).ln()).collect(),
    }
}

/// Closed-form mixture shrinkage against quadrature.
pub fn quadrature_suite(seed: Seed, cases: usize) -> CheckOutcome {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let nc = [1, 2, 4][i % 3];
        let theta = random_gm(&mut rng, nc);
        let sigma2 = log_uniform(&mut rng, 1e-2, 10.0);
        let r = cn(&mut rng, 2.0);
        let got = gm_shrinkage(r, &theta, sigma2).expect("valid inputs");
        let want = gm_posterior_oracle(r, &theta, sigma2);
        worst = worst.max((got - want).norm() / want.norm().max(1e-12));
    }
    CheckOutcome::new("gm shrinkage vs quadrature (rel)", cases, worst, 1e-6)
}

/// `Nc = 1`, `μ = 0` reduces to Wiener scaling `σ₀²/(σ²+σ₀²) r`.
pub fn wiener_suite(seed: Seed, cases: usize) -> CheckOutcome {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let v0 = log_uniform(&mut rng, 1e-3, 1e2);
        let sigma2 = log_uniform(&mut rng, 1e-3, 1e2);
        let theta = GmParams {
            weights_raw: vec![rng.gen_range(-3.0..3.0)],
            means: vec![C64::new(0.0, 0.0)],
            log_vars: vec![v0.ln()],
        };
        let v0 = theta.variances()[0];
        let r = cn(&mut rng, 3.0);
        let got = gm_shrinkage(r, &theta, sigma2).expect("valid inputs");
        let want = r * (v0 / (sigma2 + v0));
        worst = worst.max((got - want).norm() / want.norm().max(1.0));
    }
    CheckOutcome::new("wiener degeneracy", cases, worst, 1e-12)
}

/// Relative error of a derivative pair; `floor` bounds the denominator so
/// vanishing derivatives (a linear shrinker's curvature) are compared absolutely.
fn rel_pair(a: (C64, C64), b: (C64, C64), floor: f64) -> f64 {
    let scale = a.0.norm().max(a.1.norm()).max(b.0.norm()).max(b.1.norm()).max(floor);
    (a.0 - b.0).norm().max((a.1 - b.1).norm()) / scale
}

const FIRST_FLOOR: f64 = 1e-6;
const SECOND_FLOOR: f64 = 1e-3;

/// First and second Wirtinger derivatives of both shrinkers against central differences.
pub fn derivative_suite(seed: Seed, probes: usize) -> Vec<CheckOutcome> {
    let mut rng = seed.rng();
    let h = 1e-6;
    let (mut soft1, mut soft2, mut gm1, mut gm2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..probes {
        // soft threshold, kept well away from the kink
        let lambda = rng.gen_range(0.0..2.0);
        let sigma2 = log_uniform(&mut rng, 1e-2, 10.0);
        let tau = lambda * sigma2.sqrt();
        let r = loop {
            let r = cn(&mut rng, 3.0 * tau.max(0.5));
            if (r.norm() - tau).abs() > 1e-3 * tau.max(1.0) && r.norm() > 1e-3 {
                break r;
            }
        };
        let an = soft_threshold_derivs(r, lambda, sigma2).expect("off the boundary");
        let value = |z: C64| soft_threshold_derivs(z, lambda, sigma2).expect("off the boundary").value;
        soft1 = soft1.max(rel_pair((an.d_r, an.d_rconj), fd_wirtinger(value, r, h), FIRST_FLOOR));
        let shrink = Shrinker::Soft(SoftThresholdParams { lambda });
        let sec = shrink_second_derivs(&shrink, r, sigma2).expect("valid");
        let d_r = |z: C64| soft_threshold_derivs(z, lambda, sigma2).expect("off the boundary").d_r;
        let d_rc = |z: C64| soft_threshold_derivs(z, lambda, sigma2).expect("off the boundary").d_rconj;
        if r.norm() > tau + 1e-3 {
            soft2 = soft2.max(rel_pair((sec.d_rr, sec.d_rrconj), fd_wirtinger(d_r, r, h), SECOND_FLOOR));
            soft2 = soft2.max(rel_pair((sec.d_rrconj, sec.d_rconjrconj), fd_wirtinger(d_rc, r, h), SECOND_FLOOR));
        }

        // mixture
        let nc = [1, 2, 4][rng.gen_range(0..3)];
        let theta = random_gm(&mut rng, nc);
        let sigma2 = log_uniform(&mut rng, 1e-2, 10.0);
        let r = cn(&mut rng, 2.0);
        let an = gm_shrinkage_derivs(r, &theta, sigma2).expect("valid");
        let value = |z: C64| gm_shrinkage(z, &theta, sigma2).expect("valid");
        gm1 = gm1.max(rel_pair((an.d_r, an.d_rconj), fd_wirtinger(value, r, h), FIRST_FLOOR));
        let sec = shrink_second_derivs(&Shrinker::Gm(theta.clone()), r, sigma2).expect("valid");
        let d_r = |z: C64| gm_shrinkage_derivs(z, &theta, sigma2).expect("valid").d_r;
        let d_rc = |z: C64| gm_shrinkage_derivs(z, &theta, sigma2).expect("valid").d_rconj;
        gm2 = gm2.max(rel_pair((sec.d_rr, sec.d_rrconj), fd_wirtinger(d_r, r, h), SECOND_FLOOR));
        gm2 = gm2.max(rel_pair((sec.d_rrconj, sec.d_rconjrconj), fd_wirtinger(d_rc, r, h), SECOND_FLOOR));
    }
    vec![
        CheckOutcome::new("soft threshold first derivatives", probes, soft1, 1e-5),
        CheckOutcome::new("soft threshold second derivatives", probes, soft2, 1e-5),
        CheckOutcome::new("gm first derivatives", probes, gm1, 1e-5),
        CheckOutcome::new("gm second derivatives", probes, gm2, 1e-5),
    ]
}

/// Variable classes probed by the gradient suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarClass {
    BRe,
    BIm,
    Lambda,
    WeightLogit,
    MeanRe,
    MeanIm,
    LogVar,
}

/// Class of every entry of the [`gather_params`] vector for a fully masked network.
pub fn param_classes(net: &UnfoldedNetwork) -> Vec<VarClass> {
    let mut out = Vec::new();
    for layer in &net.layers {
        for _ in layer.b.as_slice() {
            out.push(VarClass::BRe);
            out.push(VarClass::BIm);
        }
        match &layer.shrink {
            Shrinker::Soft(_) => out.push(VarClass::Lambda),
            Shrinker::Gm(g) => {
                out.extend(std::iter::repeat(VarClass::WeightLogit).take(g.nc()));
                for _ in 0..g.nc() {
                    out.push(VarClass::MeanRe);
                    out.push(VarClass::MeanIm);
                }
                out.extend(std::iter::repeat(VarClass::LogVar).take(g.nc()));
            }
        }
    }
    out
}

/// A small random problem with perturbed (non-default) layer parameters.
pub fn random_network(sys: &SensingSystem, kind: NetworkKind, layers: usize, rng: &mut StreamRng) -> UnfoldedNetwork {
    let mut net = match kind {
        NetworkKind::Lamp => UnfoldedNetwork::lamp_from_amp(sys, layers, 1.0),
        NetworkKind::GmLamp => UnfoldedNetwork::gmlamp_with_prior(sys, layers, &GmParams::spike_init(4, 0.0)),
    };
    for layer in &mut net.layers {
        let noise: Vec<C64> = (0..sys.n * sys.m).map(|_| cn(rng, 0.05)).collect();
        let b: Vec<C64> = layer.b.as_slice().iter().zip(&noise).map(|(a, e)| a + e).collect();
        layer.b = ComplexMatrix::from_row_major(sys.n, sys.m, b);
        layer.shrink = match kind {
            NetworkKind::Lamp => Shrinker::Soft(SoftThresholdParams {
                lambda: rng.gen_range(0.5..1.5),
            }),
            NetworkKind::GmLamp => {
                let mut g = random_gm(rng, 4);
                g.means.iter_mut().for_each(|m| *m *= 0.3);
                Shrinker::Gm(g)
            }
        };
    }
    net
}

/// Per-class worst relative error between backprop and central differences.
pub fn gradient_check(
    sys: &SensingSystem,
    net: &UnfoldedNetwork,
    batch: &MeasurementBatch,
    spec: LossSpec,
    mode: GradMode,
    probes_per_class: usize,
    step: f64,
    rng: &mut StreamRng,
) -> Vec<(VarClass, usize, f64)> {
    let mask = TrainMask::all(net.depth());
    let grads = backprop(net, sys, batch, spec, &mask, mode).expect("finite gradients").flatten();
    let x0 = gather_params(net, &mask);
    let classes = param_classes(net);
    let f = |x: &[f64]| {
        let mut probe = net.clone();
        scatter_params(&mut probe, &mask, x);
        loss(sys, &probe, spec, batch).expect("valid probe")
    };
    let mut kinds: Vec<VarClass> = classes.clone();
    kinds.sort();
    kinds.dedup();
    let mut out = Vec::new();
    for class in kinds {
        // only coordinates that can influence the loss
        let idx: Vec<usize> = (0..x0.len())
            .filter(|&i| classes[i] == class && layer_of(net, i) <= spec.layer)
            .filter(|&i| !(class == VarClass::Lambda && x0[i] < step))
            .collect();
        if idx.is_empty() {
            continue;
        }
        let picks: Vec<usize> = if idx.len() <= probes_per_class {
            idx
        } else {
            (0..probes_per_class).map(|_| idx[rng.gen_range(0..idx.len())]).collect()
        };
        let mut worst: f64 = 0.0;
        for &i in &picks {
            let fd = fd_partial(f, &x0, i, step);
            let g = grads[i];
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-8));
        }
        out.push((class, picks.len(), worst));
    }
    out
}

fn layer_of(net: &UnfoldedNetwork, flat: usize) -> usize {
    let mut start = 0;
    for (k, layer) in net.layers.iter().enumerate() {
        let len = 2 * layer.b.as_slice().len()
            + match &layer.shrink {
                Shrinker::Soft(_) => 1,
                Shrinker::Gm(g) => 4 * g.nc(),
            };
        if flat < start + len {
            return k;
        }
        start += len;
    }
    usize::MAX
}

/// Backprop against central differences for LAMP and GM-LAMP at `T ∈ {1, 2, 3}`,
/// on both loss types at the last layer. Classes with few scalars per network
/// (`λ`, mixture parameters) are probed on further random networks until each
/// class has at least `probes_per_class` probes.
pub fn gradient_suite(seed: Seed, probes_per_class: usize) -> Vec<CheckOutcome> {
    let mut rng = seed.rng();
    let (n, m) = (16, 8);
    let sys = gen_sensing(n, m, &mut seed.named("sensing").rng()).expect("valid dims");
    let source = ChannelSource::Simulated {
        geometry: ArrayGeometry::ula(n),
        num_paths: 3,
    };
    let batch = build_dataset(source, &sys, SnrPolicy::Range(0.0, 20.0), 4, seed.named("batch")).expect("valid");
    let mut per_class: std::collections::BTreeMap<(NetworkKind, VarClass), (usize, f64)> = Default::default();
    for kind in [NetworkKind::Lamp, NetworkKind::GmLamp] {
        // fresh networks until every class of this kind has enough probes
        for _round in 0..64 {
            for t in 1..=3 {
                let net = random_network(&sys, kind, t, &mut rng);
                for spec in [LossSpec::linear(t - 1), LossSpec::nonlinear(t - 1)] {
                    for (class, count, worst) in
                        gradient_check(&sys, &net, &batch, spec, GradMode::Full, probes_per_class, 1e-5, &mut rng)
                    {
                        let e = per_class.entry((kind, class)).or_insert((0, 0.0));
                        e.0 += count;
                        e.1 = e.1.max(worst);
                    }
                }
            }
            let short = per_class
                .iter()
                .any(|((k, _), (count, _))| *k == kind && *count < probes_per_class);
            if !short {
                break;
            }
        }
    }
    per_class
        .into_iter()
        .map(|((kind, class), (count, worst))| {
            CheckOutcome::new(&format!("backprop {} {:?}", kind.name(), class), count, worst, 1e-4)
        })
        .collect()
}

/// LAMP with `B_t = Aᵀ`, `λ_t = 1.1402` against AMP (`N = 64`, `M = 32`, `T = 10`).
pub fn lamp_amp_suite(seed: Seed, instances: usize) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let s = seed.child(i as u64);
        let sys = gen_sensing(64, 32, &mut s.named("sensing").rng()).expect("valid dims");
        let source = ChannelSource::Simulated {
            geometry: ArrayGeometry::ula(64),
            num_paths: 3,
        };
        let batch = build_dataset(source, &sys, SnrPolicy::Range(0.0, 20.0), 1, s).expect("valid");
        let y = &batch.y[0];
        let cfg = AmpConfig {
            iterations: 10,
            lambda: AMP_DEFAULT_LAMBDA,
        };
        let net = UnfoldedNetwork::lamp_from_amp(&sys, 10, AMP_DEFAULT_LAMBDA);
        let (a, _) = amp_estimate(&sys, y, &cfg).expect("valid");
        let (b, _) = lamp_forward(&sys, y, &net).expect("valid");
        for (p, q) in a.iter().zip(&b) {
            worst = worst.max((p - q).norm());
        }
    }
    CheckOutcome::new("lamp with A^T equals amp (max abs diff)", instances, worst, 1e-10)
}

/// All suites, in the order printed by the CLI.
pub fn run_all(seed: Seed, quick: bool) -> Vec<CheckOutcome> {
    let scale = |full: usize, small: usize| if quick { small } else { full };
    let mut out = vec![
        quadrature_suite(seed.named("quadrature"), scale(1000, 60)),
        wiener_suite(seed.named("wiener"), scale(10_000, 500)),
    ];
    out.extend(derivative_suite(seed.named("derivatives"), scale(500, 50)));
    out.extend(gradient_suite(seed.named("gradients"), scale(50, 8)));
    out.push(lamp_amp_suite(seed.named("lamp-amp"), scale(100, 10)));
    out
}
