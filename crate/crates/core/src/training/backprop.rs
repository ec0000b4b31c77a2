//! Reverse-mode gradients through the unfolded recursion.
//!
//! Cotangents on complex signals use `G = ∂L/∂Re + j ∂L/∂Im`, so `dL = Re(conj(G) dz)`.
//! Rules used below: a linear map `w = B v` pulls back as `G_v += Bᴴ G_w`,
//! `G_B += G_w vᴴ`; `w = c v*` as `G_v += c conj(G_w)`, `G_c += Σ G_w v`;
//! `σ² = ‖v‖²/M` as `G_v += (2/M) (∂L/∂σ²) v`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{forward_layers, LayerParams, LayerTrace, UnfoldedNetwork};
use crate::linalg::{norm_sqr, zeros, ComplexMatrix, NoTally, C64};
use crate::measurement::{MeasurementBatch, SensingSystem};
use crate::shrinkage::{Cotangent, Scratch, ShrinkGrad, Shrinker};

const J: C64 = C64 { re: 0.0, im: 1.0 };
/// Samples per work unit; fixed so the reduction order never depends on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Error of the linear output `r_t`.
    Linear,
    /// Error of the shrinkage output `ĥ_{t+1}`.
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LossSpec {
    pub layer: usize,
    pub kind: LossKind,
}

impl LossSpec {
    pub fn linear(layer: usize) -> Self {
        Self {
            layer,
            kind: LossKind::Linear,
        }
    }

    pub fn nonlinear(layer: usize) -> Self {
        Self {
            layer,
            kind: LossKind::Nonlinear,
        }
    }
}

/// Whether `σ_t²` and the Onsager coefficients take part in differentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GradMode {
    #[default]
    Full,
    /// `σ_t²`, `b_t`, `c_t` treated as constants.
    Detached,
}

/// Which layer variables are trainable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainMask {
    pub b: Vec<bool>,
    pub shrink: Vec<bool>,
}

impl TrainMask {
    pub fn none(layers: usize) -> Self {
        Self {
            b: vec![false; layers],
            shrink: vec![false; layers],
        }
    }

    pub fn all(layers: usize) -> Self {
        Self {
            b: vec![true; layers],
            shrink: vec![true; layers],
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.b.iter().chain(&self.shrink).any(|&x| x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    /// `∂L/∂B_t` as interleaved (re, im) pairs in row-major order.
    pub b: Option<Vec<f64>>,
    pub shrink: Option<ShrinkGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    /// Batch loss at the current parameters.
    pub loss: f64,
}

impl GradientSet {
    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(|l| l.b.is_none() && l.shrink.is_none())
    }

    /// Masked gradients in [`gather_params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Some(b) = &l.b {
                out.extend_from_slice(b);
            }
            match &l.shrink {
                Some(ShrinkGrad::Soft { lambda }) => out.push(*lambda),
                Some(ShrinkGrad::Gm {
                    weights_raw,
                    means,
                    log_vars,
                }) => {
                    out.extend_from_slice(weights_raw);
                    out.extend(means.iter().flat_map(|m| [m.re, m.im]));
                    out.extend_from_slice(log_vars);
                }
                None => {}
            }
        }
        out
    }
}

/// Flattens the masked variables: per layer, `B_t` (re, im pairs) then the
/// shrinker (`λ`, or logits, means as (re, im), log-variances).
pub fn gather_params(net: &UnfoldedNetwork, mask: &TrainMask) -> Vec<f64> {
    let mut out = Vec::new();
    for (k, layer) in net.layers.iter().enumerate() {
        if mask.b.get(k).copied().unwrap_or(false) {
            out.extend(layer.b.as_slice().iter().flat_map(|z| [z.re, z.im]));
        }
        if mask.shrink.get(k).copied().unwrap_or(false) {
            match &layer.shrink {
                Shrinker::Soft(p) => out.push(p.lambda),
                Shrinker::Gm(g) => {
                    out.extend_from_slice(&g.weights_raw);
                    out.extend(g.means.iter().flat_map(|m| [m.re, m.im]));
                    out.extend_from_slice(&g.log_vars);
                }
            }
        }
    }
    out
}

/// Inverse of [`gather_params`]. Soft-threshold `λ` is clamped at zero.
pub fn scatter_params(net: &mut UnfoldedNetwork, mask: &TrainMask, params: &[f64]) {
    let mut it = params.iter().copied();
    let mut next = || it.next().expect("parameter vector too short");
    for (k, layer) in net.layers.iter_mut().enumerate() {
        if mask.b.get(k).copied().unwrap_or(false) {
            for z in layer.b.as_mut_slice() {
                let re = next();
                *z = C64::new(re, next());
            }
        }
        if mask.shrink.get(k).copied().unwrap_or(false) {
            match &mut layer.shrink {
                Shrinker::Soft(p) => p.lambda = next().max(0.0),
                Shrinker::Gm(g) => {
                    for w in &mut g.weights_raw {
                        *w = next();
                    }
                    for m in &mut g.means {
                        let re = next();
                        *m = C64::new(re, next());
                    }
                    for l in &mut g.log_vars {
                        *l = next();
                    }
                }
            }
        }
    }
}

fn check_spec(net: &UnfoldedNetwork, sys: &SensingSystem, batch: &MeasurementBatch, spec: LossSpec) -> Result<()> {
    net.validate(sys)?;
    if batch.is_empty() {
        return Err(Error::invalid("loss needs a nonempty batch"));
    }
    if spec.layer >= net.depth() {
        return Err(Error::invalid(format!(
            "loss layer {} out of range for a {}-layer network",
            spec.layer,
            net.depth()
        )));
    }
    if batch.y.iter().any(|y| y.len() != sys.m) || batch.truth.iter().any(|h| h.len() != sys.n) {
        return Err(Error::invalid("batch dimensions do not match the sensing system"));
    }
    Ok(())
}

fn target<'a>(trace: &'a LayerTrace, spec: LossSpec) -> &'a [C64] {
    let rec = &trace.layers[spec.layer];
    match spec.kind {
        LossKind::Linear => &rec.r,
        LossKind::Nonlinear => &rec.estimate,
    }
}

/// `(1/D) Σ_d ‖x_t^d − h̃^d‖²` with `x_t` the selected layer output.
pub fn loss(sys: &SensingSystem, net: &UnfoldedNetwork, spec: LossSpec, batch: &MeasurementBatch) -> Result<f64> {
    check_spec(net, sys, batch, spec)?;
    let layers = &net.layers[..=spec.layer];
    let partial: Vec<f64> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&d| {
                    let trace = forward_layers(sys, &batch.y[d], layers, &NoTally);
                    target(&trace, spec)
                        .iter()
                        .zip(&batch.truth[d])
                        .map(|(x, h)| (x - h).norm_sqr())
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok(partial.iter().sum::<f64>() / batch.len() as f64)
}

pub fn loss_linear(sys: &SensingSystem, net: &UnfoldedNetwork, layer: usize, batch: &MeasurementBatch) -> Result<f64> {
    loss(sys, net, LossSpec::linear(layer), batch)
}

pub fn loss_nonlinear(sys: &SensingSystem, net: &UnfoldedNetwork, layer: usize, batch: &MeasurementBatch) -> Result<f64> {
    loss(sys, net, LossSpec::nonlinear(layer), batch)
}

struct Acc {
    b: Vec<Option<ComplexMatrix>>,
    shrink: Vec<ShrinkGrad>,
    loss: f64,
}

impl Acc {
    fn new(layers: &[LayerParams], mask: &TrainMask) -> Self {
        Self {
            b: layers
                .iter()
                .enumerate()
                .map(|(k, l)| mask.b[k].then(|| ComplexMatrix::zeros(l.b.rows(), l.b.cols())))
                .collect(),
            shrink: layers.iter().map(|l| ShrinkGrad::zeros_like(&l.shrink)).collect(),
            loss: 0.0,
        }
    }

    fn merge(&mut self, other: Acc) {
        for (a, b) in self.b.iter_mut().zip(other.b) {
            if let (Some(a), Some(b)) = (a.as_mut(), b) {
                a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(x, y)| *x += y);
            }
        }
        for (a, b) in self.shrink.iter_mut().zip(&other.shrink) {
            a.add_assign(b);
        }
        self.loss += other.loss;
    }
}

/// Exact gradient of the selected loss with respect to the masked variables.
///
/// Variables of layers after `spec.layer` do not influence the loss; when masked
/// their gradient is reported as zero.
pub fn backprop(
    net: &UnfoldedNetwork,
    sys: &SensingSystem,
    batch: &MeasurementBatch,
    spec: LossSpec,
    mask: &TrainMask,
    mode: GradMode,
) -> Result<GradientSet> {
    check_spec(net, sys, batch, spec)?;
    if mask.b.len() != net.depth() || mask.shrink.len() != net.depth() {
        return Err(Error::invalid(format!(
            "mask covers {} layers, network has {}",
            mask.len(),
            net.depth()
        )));
    }
    let layers = &net.layers[..=spec.layer];
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<Result<Acc>> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Acc::new(layers, mask);
            let mut scratch = Scratch::default();
            for &d in chunk {
                sample_backward(sys, layers, &batch.y[d], &batch.truth[d], spec, mask, mode, scale, &mut acc, &mut scratch)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total: Option<Acc> = None;
    for part in parts {
        let part = part?;
        match total.as_mut() {
            None => total = Some(part),
            Some(t) => t.merge(part),
        }
    }
    let total = total.expect("batch is nonempty");

    let mut out = Vec::with_capacity(net.depth());
    for k in 0..net.depth() {
        let (b, shrink) = if k < layers.len() {
            (total.b[k].as_ref(), Some(&total.shrink[k]))
        } else {
            (None, None)
        };
        let b_grad = mask.b[k].then(|| match b {
            Some(g) => g.as_slice().iter().flat_map(|z| [z.re, z.im]).collect::<Vec<f64>>(),
            None => vec![0.0; 2 * sys.n * sys.m],
        });
        let s_grad = mask.shrink[k].then(|| match shrink {
            Some(g) => g.clone(),
            None => ShrinkGrad::zeros_like(&net.layers[k].shrink),
        });
        if let Some(g) = &b_grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: k,
                    variable: "B gradient".into(),
                });
            }
        }
        if let Some(g) = &s_grad {
            let finite = match g {
                ShrinkGrad::Soft { lambda } => lambda.is_finite(),
                ShrinkGrad::Gm {
                    weights_raw,
                    means,
                    log_vars,
                } => weights_raw
                    .iter()
                    .chain(log_vars)
                    .chain(means.iter().flat_map(|m| [&m.re, &m.im]))
                    .all(|v| v.is_finite()),
            };
            if !finite {
                return Err(Error::NonFinite {
                    layer: k,
                    variable: "shrinkage gradient".into(),
                });
            }
        }
        out.push(LayerGrad { b: b_grad, shrink: s_grad });
    }
    Ok(GradientSet {
        layers: out,
        loss: total.loss,
    })
}

#[allow(clippy::too_many_arguments)]
fn sample_backward(
    sys: &SensingSystem,
    layers: &[LayerParams],
    y: &[C64],
    truth: &[C64],
    spec: LossSpec,
    mask: &TrainMask,
    mode: GradMode,
    scale: f64,
    acc: &mut Acc,
    scratch: &mut Scratch,
) -> Result<()> {
    let (n, m) = (sys.n, sys.m);
    let mf = m as f64;
    let trace = forward_layers(sys, y, layers, &NoTally);
    for (k, rec) in trace.layers.iter().enumerate() {
        if !rec.sigma2.is_finite() {
            return Err(Error::NonFinite {
                layer: k,
                variable: "sigma2".into(),
            });
        }
        if rec.r.iter().chain(&rec.estimate).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite {
                layer: k,
                variable: "layer output".into(),
            });
        }
    }

    let t = spec.layer;
    let diff: Vec<C64> = target(&trace, spec).iter().zip(truth).map(|(x, h)| x - h).collect();
    acc.loss += scale * norm_sqr(&diff);
    let seed: Vec<C64> = diff.iter().map(|d| d * (2.0 * scale)).collect();

    // cotangents on (ĥ_{k+1}, v_{k+1}) entering layer k from above
    let (mut gh, mut gv, top) = match spec.kind {
        LossKind::Nonlinear => (seed, zeros(m), t + 1),
        LossKind::Linear => {
            let rec = &trace.layers[t];
            let layer = &layers[t];
            if let Some(gb) = acc.b[t].as_mut() {
                gb.add_outer_conj(&seed, &rec.residual_in);
            }
            let mut gv_t = zeros(m);
            layer.b.adj_mul_vec_acc(&seed, &mut gv_t);
            (seed, gv_t, t)
        }
    };

    for k in (0..top).rev() {
        let rec = &trace.layers[k];
        let layer = &layers[k];
        let v = &rec.residual_in;

        // v' = y − A ĥ' + b v + c v*
        let a_t_gv = sys.a.tr_mul_vec(&gv, &NoTally);
        let g_est: Vec<C64> = gh.iter().zip(&a_t_gv).map(|(g, a)| g - a).collect();
        let mut g_b = C64::new(0.0, 0.0);
        let mut g_c = C64::new(0.0, 0.0);
        let mut gv_in: Vec<C64> = Vec::with_capacity(m);
        for (g, vi) in gv.iter().zip(v) {
            g_b += g * vi.conj();
            g_c += g * vi;
            gv_in.push(rec.onsager_b.conj() * g + rec.onsager_c * g.conj());
        }
        let (p, q) = match mode {
            GradMode::Full => ((g_b + g_c) / (2.0 * mf), J * (g_b - g_c) / (2.0 * mf)),
            GradMode::Detached => (C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
        };

        // ĥ' = η(r; σ²)
        let prepared = layer.shrink.prepare(rec.sigma2);
        let mut discard;
        let grad_slot = if mask.shrink[k] {
            &mut acc.shrink[k]
        } else {
            discard = ShrinkGrad::zeros_like(&layer.shrink);
            &mut discard
        };
        let mut g_r = Vec::with_capacity(n);
        let mut g_s = 0.0;
        for (&ri, &ge) in rec.r.iter().zip(&g_est) {
            let cot = Cotangent { g_value: ge, p, q };
            let (gri, gsi) = prepared.vjp(ri, &cot, scratch, grad_slot);
            g_r.push(gri);
            g_s += gsi;
        }
        if mode == GradMode::Detached {
            g_s = 0.0;
        }

        // r = ĥ + B v
        if let Some(gb) = acc.b[k].as_mut() {
            gb.add_outer_conj(&g_r, v);
        }
        layer.b.adj_mul_vec_acc(&g_r, &mut gv_in);
        // σ² = ‖v‖²/M
        let f = 2.0 * g_s / mf;
        gv_in.iter_mut().zip(v).for_each(|(g, vi)| *g += vi * f);

        gh = g_r;
        gv = gv_in;
    }
    Ok(())
}
