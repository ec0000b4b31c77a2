//! Element-wise shrinkage (denoising) functions and their derivatives.
//!
//! Two shrinkers are provided: the complex soft threshold
//! `η_st(r) = max(|r| - λσ, 0) e^{j∠r}` and the Gaussian-mixture posterior mean
//!
//! ```text
//! η_gm(r) = Σ_k p_k μ̃_k(r) CN(r; μ_k, σ² + σ_k²) / Σ_k p_k CN(r; μ_k, σ² + σ_k²)
//! μ̃_k(r)  = (σ² μ_k + σ_k² r) / (σ² + σ_k²)
//! ```
//!
//! with `CN(x; μ, v) = exp(-|x - μ|² / v) / (π v)`.
//!
//! Derivatives are worked in real coordinates `r = x + jy`. A shrinker evaluation
//! produces the [`Jet`] `(η, ∂η/∂x, ∂η/∂y)`, from which the Wirtinger pair follows as
//! `∂η/∂r = (η_x - jη_y)/2`, `∂η/∂r* = (η_x + jη_y)/2`. Backpropagation through the
//! Onsager coefficients needs the derivative of `η_x`, `η_y` with respect to every
//! real input, which [`Shrinker::vjp`] supplies.

use crate::error::{Error, Result};
use crate::linalg::{Tally, C64};

const J: C64 = C64 { re: 0.0, im: 1.0 };
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftThresholdParams {
    pub lambda: f64,
}

/// One layer's Gaussian-mixture prior, stored in unconstrained form.
///
/// `p = softmax(weights_raw)`, `σ_k² = exp(log_vars[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmParams {
    pub weights_raw: Vec<f64>,
    pub means: Vec<C64>,
    pub log_vars: Vec<f64>,
}

/// Smallest variance used when mapping a zero-variance (spike) component.
pub const GM_VARIANCE_FLOOR: f64 = 1e-6;

impl GmParams {
    pub fn from_constrained(weights: &[f64], means: &[C64], variances: &[f64]) -> Result<Self> {
        let nc = weights.len();
        if nc == 0 || means.len() != nc || variances.len() != nc {
            return Err(Error::invalid("mixture arrays must be nonempty and equally long"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        if variances.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("mixture variances must be non-negative"));
        }
        Ok(Self {
            weights_raw: weights.iter().map(|w| w.ln()).collect(),
            means: means.to_vec(),
            log_vars: variances.iter().map(|v| v.max(GM_VARIANCE_FLOOR).ln()).collect(),
        })
    }

    /// Equal weights, zero means and near-spike variances, with the variances
    /// spread over `decades` orders of magnitude above the floor.
    pub fn spike_init(nc: usize, decades: f64) -> Self {
        let step = if nc > 1 { decades / (nc - 1) as f64 } else { 0.0 };
        Self {
            weights_raw: vec![0.0; nc],
            means: vec![C64::new(0.0, 0.0); nc],
            log_vars: (0..nc)
                .map(|k| GM_VARIANCE_FLOOR.ln() + (k as f64 * step) * std::f64::consts::LN_10)
                .collect(),
        }
    }

    pub fn nc(&self) -> usize {
        self.weights_raw.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        let mx = self.weights_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.weights_raw.iter().map(|w| (w - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.log_vars.iter().map(|l| l.exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let nc = self.nc();
        if nc == 0 || self.means.len() != nc || self.log_vars.len() != nc {
            return Err(Error::invalid("mixture arrays must be nonempty and equally long"));
        }
        let finite = self.weights_raw.iter().all(|v| v.is_finite())
            && self.log_vars.iter().all(|v| v.is_finite())
            && self.means.iter().all(|m| m.re.is_finite() && m.im.is_finite());
        if !finite {
            return Err(Error::invalid("mixture parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkDerivs {
    pub value: C64,
    /// `∂η/∂r`
    pub d_r: C64,
    /// `∂η/∂r*`
    pub d_rconj: C64,
}

/// Second-order Wirtinger derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkSecond {
    pub d_rr: C64,
    pub d_rrconj: C64,
    pub d_rconjrconj: C64,
}

/// `(η, ∂η/∂x, ∂η/∂y)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: C64,
    pub dx: C64,
    pub dy: C64,
}

impl Jet {
    pub fn d_r(&self) -> C64 {
        (self.dx - J * self.dy) * 0.5
    }

    pub fn d_rconj(&self) -> C64 {
        (self.dx + J * self.dy) * 0.5
    }

    fn derivs(&self) -> ShrinkDerivs {
        ShrinkDerivs {
            value: self.value,
            d_r: self.d_r(),
            d_rconj: self.d_rconj(),
        }
    }
}

/// `(η_ζ, η_xζ, η_yζ)` for one real input `ζ`.
#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    d: C64,
    dx: C64,
    dy: C64,
}

/// Cotangents flowing into one element: `g_value` on `η`, and `p`, `q` on `η_x`, `η_y`
/// (same convention as elsewhere: a cotangent `G` on complex `z` means
/// `dL = Re(conj(G) dz)`).
#[derive(Debug, Clone, Copy, Default)]
pub struct Cotangent {
    pub g_value: C64,
    pub p: C64,
    pub q: C64,
}

impl Cotangent {
    #[inline]
    fn apply(&self, part: &Partial) -> f64 {
        (self.g_value.conj() * part.d).re + (self.p.conj() * part.dx).re + (self.q.conj() * part.dy).re
    }
}

/// Gradient of a real loss with respect to a shrinker's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ShrinkGrad {
    Soft { lambda: f64 },
    Gm {
        weights_raw: Vec<f64>,
        means: Vec<C64>,
        log_vars: Vec<f64>,
    },
}

impl ShrinkGrad {
    pub fn zeros_like(shrink: &Shrinker) -> Self {
        match shrink {
            Shrinker::Soft(_) => ShrinkGrad::Soft { lambda: 0.0 },
            Shrinker::Gm(g) => ShrinkGrad::Gm {
                weights_raw: vec![0.0; g.nc()],
                means: vec![C64::new(0.0, 0.0); g.nc()],
                log_vars: vec![0.0; g.nc()],
            },
        }
    }

    pub fn add_assign(&mut self, other: &ShrinkGrad) {
        match (self, other) {
            (ShrinkGrad::Soft { lambda: a }, ShrinkGrad::Soft { lambda: b }) => *a += b,
            (
                ShrinkGrad::Gm {
                    weights_raw,
                    means,
                    log_vars,
                },
                ShrinkGrad::Gm {
                    weights_raw: w2,
                    means: m2,
                    log_vars: l2,
                },
            ) => {
                weights_raw.iter_mut().zip(w2).for_each(|(a, b)| *a += b);
                means.iter_mut().zip(m2).for_each(|(a, b)| *a += b);
                log_vars.iter_mut().zip(l2).for_each(|(a, b)| *a += b);
            }
            _ => panic!("mismatched shrinkage gradient kinds"),
        }
    }
}

/// A shrinkage function with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Shrinker {
    Soft(SoftThresholdParams),
    Gm(GmParams),
}

/// A shrinker specialised to one noise level `σ²`.
pub enum Prepared {
    Soft { tau: f64, tau_s: f64, tau_l: f64 },
    Gm(PreparedGm),
}

pub struct PreparedGm {
    comps: Vec<GmConst>,
}

#[derive(Debug, Clone, Copy)]
struct GmConst {
    mu: C64,
    /// σ_k²
    q: f64,
    inv_v: f64,
    /// w_k - ln v_k
    base: f64,
    /// σ_k² / v_k
    g: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct GmComp {
    pi: f64,
    d: C64,
    e: f64,
    m: C64,
    ax: f64,
    ay: f64,
    fx: C64,
    fy: C64,
}

/// Per-element scratch for the mixture shrinker.
#[derive(Debug, Default)]
pub struct Scratch {
    comps: Vec<GmComp>,
}

impl Shrinker {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shrinker::Soft(p) if !(p.lambda >= 0.0) => {
                Err(Error::invalid(format!("lambda must be non-negative, got {}", p.lambda)))
            }
            Shrinker::Soft(_) => Ok(()),
            Shrinker::Gm(g) => g.validate(),
        }
    }

    /// Fixes the noise level. `s` must be non-negative; a mixture with `s = 0`
    /// stays well defined because every `σ_k² > 0`.
    pub fn prepare(&self, s: f64) -> Prepared {
        match self {
            Shrinker::Soft(p) => {
                let sd = s.max(0.0).sqrt();
                Prepared::Soft {
                    tau: p.lambda * sd,
                    tau_s: if sd > 0.0 { p.lambda / (2.0 * sd) } else { 0.0 },
                    tau_l: sd,
                }
            }
            Shrinker::Gm(theta) => {
                let comps = theta
                    .weights_raw
                    .iter()
                    .zip(&theta.means)
                    .zip(&theta.log_vars)
                    .map(|((&w, &mu), &lv)| {
                        let q = lv.exp();
                        let v = s + q;
                        GmConst {
                            mu,
                            q,
                            inv_v: 1.0 / v,
                            base: w - v.ln(),
                            g: q / v,
                        }
                    })
                    .collect();
                Prepared::Gm(PreparedGm { comps })
            }
        }
    }
}

impl Prepared {
    /// Multiplies executed by one [`Prepared::eval`] call.
    pub fn eval_cost(&self) -> u64 {
        match self {
            Prepared::Soft { .. } => SOFT_EVAL_MULS,
            Prepared::Gm(gm) => gm_eval_cost(gm.comps.len()),
        }
    }

    pub fn eval(&self, r: C64, scratch: &mut Scratch, tally: &impl Tally) -> Jet {
        match self {
            Prepared::Soft { tau, .. } => {
                tally.add(SOFT_EVAL_MULS);
                soft_jet(r, *tau)
            }
            Prepared::Gm(gm) => {
                tally.add(gm_eval_cost(gm.comps.len()));
                gm.fill(r, scratch)
            }
        }
    }

    /// Accumulates the pullback of `(η, η_x, η_y)` at `r` into the input
    /// cotangent (returned as `(G_r, ∂L/∂σ²)`) and the parameter gradient.
    pub fn vjp(&self, r: C64, cot: &Cotangent, scratch: &mut Scratch, grad: &mut ShrinkGrad) -> (C64, f64) {
        match (self, grad) {
            (
                Prepared::Soft { tau, tau_s, tau_l },
                ShrinkGrad::Soft { lambda },
            ) => {
                if *tau == 0.0 && r == C64::new(0.0, 0.0) {
                    return (cot.g_value, 0.0);
                }
                let Some(ctx) = SoftCtx::new(r, *tau) else {
                    return (C64::new(0.0, 0.0), 0.0);
                };
                let gx = cot.apply(&ctx.partial_x());
                let gy = cot.apply(&ctx.partial_y());
                let gs = cot.apply(&ctx.partial_param(*tau_s));
                *lambda += cot.apply(&ctx.partial_param(*tau_l));
                (C64::new(gx, gy), gs)
            }
            (
                Prepared::Gm(gm),
                ShrinkGrad::Gm {
                    weights_raw,
                    means,
                    log_vars,
                },
            ) => {
                let jet = gm.fill(r, scratch);
                let comps = &scratch.comps;
                let gx = cot.apply(&gm.partial_global(comps, &jet, Global::X));
                let gy = cot.apply(&gm.partial_global(comps, &jet, Global::Y));
                let gs = cot.apply(&gm.partial_global(comps, &jet, Global::S));
                for k in 0..comps.len() {
                    weights_raw[k] += cot.apply(&gm.partial_component(comps, &jet, k, Local::Weight));
                    let mr = cot.apply(&gm.partial_component(comps, &jet, k, Local::MeanRe));
                    let mi = cot.apply(&gm.partial_component(comps, &jet, k, Local::MeanIm));
                    means[k] += C64::new(mr, mi);
                    log_vars[k] += cot.apply(&gm.partial_component(comps, &jet, k, Local::LogVar));
                }
                (C64::new(gx, gy), gs)
            }
            _ => panic!("shrinkage gradient kind does not match the shrinker"),
        }
    }

    /// Second-order derivatives `(η_xx, η_xy, η_yy)`.
    fn second_xy(&self, r: C64, scratch: &mut Scratch) -> (C64, C64, C64) {
        match self {
            Prepared::Soft { tau, .. } => match SoftCtx::new(r, *tau) {
                Some(ctx) => {
                    let px = ctx.partial_x();
                    let py = ctx.partial_y();
                    (px.dx, px.dy, py.dy)
                }
                None => Default::default(),
            },
            Prepared::Gm(gm) => {
                let jet = gm.fill(r, scratch);
                let px = gm.partial_global(&scratch.comps, &jet, Global::X);
                let py = gm.partial_global(&scratch.comps, &jet, Global::Y);
                (px.dx, px.dy, py.dy)
            }
        }
    }
}

const SOFT_EVAL_MULS: u64 = 6;

/// Multiplies per element for one soft-threshold evaluation (value and both derivatives).
pub fn soft_eval_cost() -> u64 {
    SOFT_EVAL_MULS
}

/// Multiplies per element for one mixture evaluation with `nc` components.
pub fn gm_eval_cost(nc: usize) -> u64 {
    10 * nc as u64 + 4
}

// --- soft threshold -------------------------------------------------------

fn soft_jet(r: C64, tau: f64) -> Jet {
    if tau == 0.0 {
        return Jet {
            value: r,
            dx: C64::new(1.0, 0.0),
            dy: J,
        };
    }
    match SoftCtx::new(r, tau) {
        None => Jet {
            value: C64::new(0.0, 0.0),
            dx: C64::new(0.0, 0.0),
            dy: C64::new(0.0, 0.0),
        },
        Some(ctx) => Jet {
            value: r - ctx.u * tau,
            dx: C64::new(1.0, 0.0) - ctx.ux * tau,
            dy: J - ctx.uy * tau,
        },
    }
}

/// Active-region quantities for `η = r - τ u`, `u = r/|r|`.
struct SoftCtx {
    tau: f64,
    x: f64,
    y: f64,
    rho2: f64,
    u: C64,
    ux: C64,
    uy: C64,
}

impl SoftCtx {
    /// `None` in the dead zone. Points within [`BOUNDARY_EPS`] of the threshold
    /// are nudged outward.
    fn new(r: C64, tau: f64) -> Option<Self> {
        let mut rho = r.norm();
        if tau == 0.0 {
            // identity map; callers special-case this
            if rho == 0.0 {
                return None;
            }
        } else if rho < tau - BOUNDARY_EPS {
            return None;
        }
        let r = if (rho - tau).abs() <= BOUNDARY_EPS && rho > 0.0 {
            let scaled = r * ((tau + BOUNDARY_EPS) / rho);
            rho = scaled.norm();
            scaled
        } else {
            r
        };
        let rho2 = rho * rho;
        let u = r / rho;
        Some(Self {
            tau,
            x: r.re,
            y: r.im,
            rho2,
            u,
            ux: -J * u * (r.im / rho2),
            uy: J * u * (r.re / rho2),
        })
    }

    fn partial_x(&self) -> Partial {
        let (x, y) = (self.x, self.y);
        let r4 = self.rho2 * self.rho2;
        let uxx = self.u * C64::new(-y * y, 2.0 * x * y) / r4;
        let uxy = -J * self.u * C64::new(x * x - y * y, x * y) / r4;
        Partial {
            d: C64::new(1.0, 0.0) - self.ux * self.tau,
            dx: -uxx * self.tau,
            dy: -uxy * self.tau,
        }
    }

    fn partial_y(&self) -> Partial {
        let (x, y) = (self.x, self.y);
        let r4 = self.rho2 * self.rho2;
        let uxy = -J * self.u * C64::new(x * x - y * y, x * y) / r4;
        let uyy = self.u * C64::new(-x * x, -2.0 * x * y) / r4;
        Partial {
            d: J - self.uy * self.tau,
            dx: -uxy * self.tau,
            dy: -uyy * self.tau,
        }
    }

    /// Partial for a real input that enters only through `τ`, with `dτ/dζ = tau_z`.
    fn partial_param(&self, tau_z: f64) -> Partial {
        Partial {
            d: -self.u * tau_z,
            dx: -self.ux * tau_z,
            dy: -self.uy * tau_z,
        }
    }
}

// --- Gaussian mixture -----------------------------------------------------

#[derive(Clone, Copy)]
enum Global {
    X,
    Y,
    S,
}

#[derive(Clone, Copy)]
enum Local {
    Weight,
    MeanRe,
    MeanIm,
    LogVar,
}

/// Per-component first and mixed second partials of the log-weight `a`,
/// the component mean `m` and the gain `g` with respect to one real input.
#[derive(Clone, Copy, Default)]
struct CompPartial {
    a: f64,
    ax: f64,
    ay: f64,
    m: C64,
    g: f64,
}

impl PreparedGm {
    /// Evaluates the posterior-weight bookkeeping for `r` into `scratch` and
    /// returns the jet.
    fn fill(&self, r: C64, scratch: &mut Scratch) -> Jet {
        let comps = &mut scratch.comps;
        comps.clear();
        let mut amax = f64::NEG_INFINITY;
        for c in &self.comps {
            let d = r - c.mu;
            let e = d.norm_sqr();
            let a = c.base - e * c.inv_v;
            amax = amax.max(a);
            comps.push(GmComp {
                pi: a,
                d,
                e,
                m: c.mu + d * c.g,
                ..Default::default()
            });
        }
        let mut z = 0.0;
        for c in comps.iter_mut() {
            c.pi = (c.pi - amax).exp();
            z += c.pi;
        }
        let inv_z = 1.0 / z;
        let mut eta = C64::new(0.0, 0.0);
        for c in comps.iter_mut() {
            c.pi *= inv_z;
            eta += c.m * c.pi;
        }
        let mut dx = C64::new(0.0, 0.0);
        let mut dy = C64::new(0.0, 0.0);
        for (c, k) in comps.iter_mut().zip(&self.comps) {
            c.ax = -2.0 * c.d.re * k.inv_v;
            c.ay = -2.0 * c.d.im * k.inv_v;
            let dm = c.m - eta;
            c.fx = dm * c.ax + k.g;
            c.fy = dm * c.ay + J * k.g;
            dx += c.fx * c.pi;
            dy += c.fy * c.pi;
        }
        Jet { value: eta, dx, dy }
    }

    fn comp_partial_global(&self, k: usize, c: &GmComp, which: Global) -> CompPartial {
        let kc = &self.comps[k];
        let iv = kc.inv_v;
        match which {
            Global::X => CompPartial {
                a: c.ax,
                ax: -2.0 * iv,
                ay: 0.0,
                m: C64::new(kc.g, 0.0),
                g: 0.0,
            },
            Global::Y => CompPartial {
                a: c.ay,
                ax: 0.0,
                ay: -2.0 * iv,
                m: J * kc.g,
                g: 0.0,
            },
            Global::S => CompPartial {
                a: -iv + c.e * iv * iv,
                ax: 2.0 * c.d.re * iv * iv,
                ay: 2.0 * c.d.im * iv * iv,
                m: -c.d * (kc.g * iv),
                g: -kc.g * iv,
            },
        }
    }

    fn comp_partial_local(&self, k: usize, c: &GmComp, which: Local) -> CompPartial {
        let kc = &self.comps[k];
        let iv = kc.inv_v;
        match which {
            Local::Weight => CompPartial {
                a: 1.0,
                ..Default::default()
            },
            Local::MeanRe => CompPartial {
                a: 2.0 * c.d.re * iv,
                ax: 2.0 * iv,
                ay: 0.0,
                m: C64::new(1.0 - kc.g, 0.0),
                g: 0.0,
            },
            Local::MeanIm => CompPartial {
                a: 2.0 * c.d.im * iv,
                ax: 0.0,
                ay: 2.0 * iv,
                m: J * (1.0 - kc.g),
                g: 0.0,
            },
            Local::LogVar => {
                let q = kc.q;
                CompPartial {
                    a: q * (-iv + c.e * iv * iv),
                    ax: q * 2.0 * c.d.re * iv * iv,
                    ay: q * 2.0 * c.d.im * iv * iv,
                    m: c.d * (kc.g * (1.0 - kc.g)),
                    g: kc.g * (1.0 - kc.g),
                }
            }
        }
    }

    /// Combines component partials into `(η_ζ, η_xζ, η_yζ)`.
    fn combine(
        comps: &[GmComp],
        jet: &Jet,
        parts: impl Iterator<Item = (usize, CompPartial)> + Clone,
    ) -> Partial {
        let abar_x: f64 = comps.iter().map(|c| c.pi * c.ax).sum();
        let abar_y: f64 = comps.iter().map(|c| c.pi * c.ay).sum();
        let mut abar_z = 0.0;
        let mut d = C64::new(0.0, 0.0);
        for (k, p) in parts.clone() {
            let c = &comps[k];
            abar_z += c.pi * p.a;
            d += ((c.m - jet.value) * p.a + p.m) * c.pi;
        }
        let mut dx = C64::new(0.0, 0.0);
        let mut dy = C64::new(0.0, 0.0);
        for (k, p) in parts {
            let c = &comps[k];
            let dm = c.m - jet.value;
            dx += (dm * p.ax + p.m * c.ax + p.g + c.fx * p.a) * c.pi;
            dy += (dm * p.ay + p.m * c.ay + J * p.g + c.fy * p.a) * c.pi;
        }
        dx -= d * abar_x + jet.dx * abar_z;
        dy -= d * abar_y + jet.dy * abar_z;
        Partial { d, dx, dy }
    }

    fn partial_global(&self, comps: &[GmComp], jet: &Jet, which: Global) -> Partial {
        Self::combine(
            comps,
            jet,
            comps
                .iter()
                .enumerate()
                .map(move |(k, c)| (k, self.comp_partial_global(k, c, which))),
        )
    }

    fn partial_component(&self, comps: &[GmComp], jet: &Jet, k: usize, which: Local) -> Partial {
        let p = self.comp_partial_local(k, &comps[k], which);
        Self::combine(comps, jet, std::iter::once((k, p)))
    }
}

// --- public scalar API ----------------------------------------------------

fn check_soft(lambda: f64, sigma2: f64) -> Result<()> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::invalid(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    Ok(())
}

pub fn soft_threshold(r: C64, lambda: f64, sigma2: f64) -> Result<C64> {
    check_soft(lambda, sigma2)?;
    let tau = lambda * sigma2.sqrt();
    let rho = r.norm();
    if rho <= tau {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(r * ((rho - tau) / rho))
}

pub fn soft_threshold_derivs(r: C64, lambda: f64, sigma2: f64) -> Result<ShrinkDerivs> {
    check_soft(lambda, sigma2)?;
    let tau = lambda * sigma2.sqrt();
    if tau > 0.0 && (r.norm() - tau).abs() <= BOUNDARY_EPS {
        return Err(Error::Boundary {
            magnitude: r.norm(),
            threshold: tau,
        });
    }
    let mut jet = soft_jet(r, tau);
    jet.value = soft_threshold(r, lambda, sigma2)?;
    Ok(jet.derivs())
}

fn check_gm(theta: &GmParams, sigma2: f64) -> Result<()> {
    theta.validate()?;
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

pub fn gm_shrinkage(r: C64, theta: &GmParams, sigma2: f64) -> Result<C64> {
    Ok(gm_shrinkage_derivs(r, theta, sigma2)?.value)
}

pub fn gm_shrinkage_derivs(r: C64, theta: &GmParams, sigma2: f64) -> Result<ShrinkDerivs> {
    check_gm(theta, sigma2)?;
    let shrink = Shrinker::Gm(theta.clone());
    let prepared = shrink.prepare(sigma2);
    let jet = prepared.eval(r, &mut Scratch::default(), &crate::linalg::NoTally);
    Ok(jet.derivs())
}

/// Second-order Wirtinger derivatives of either shrinker at `r`.
pub fn shrink_second_derivs(shrink: &Shrinker, r: C64, sigma2: f64) -> Result<ShrinkSecond> {
    shrink.validate()?;
    match shrink {
        Shrinker::Soft(p) => check_soft(p.lambda, sigma2)?,
        Shrinker::Gm(g) => check_gm(g, sigma2)?,
    }
    let (xx, xy, yy) = shrink.prepare(sigma2).second_xy(r, &mut Scratch::default());
    Ok(ShrinkSecond {
        d_rr: (xx - J * xy * 2.0 - yy) * 0.25,
        d_rrconj: (xx + yy) * 0.25,
        d_rconjrconj: (xx + J * xy * 2.0 - yy) * 0.25,
    })
}
