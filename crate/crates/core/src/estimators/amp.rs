use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, zeros, NoTally, Tally, C64};
use crate::measurement::SensingSystem;
use crate::shrinkage::{Scratch, Shrinker, SoftThresholdParams};

use super::{LayerRecord, LayerTrace};

/// Shared shrinkage level commonly used for AMP on this problem.
pub const AMP_DEFAULT_LAMBDA: f64 = 1.1402;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    pub iterations: usize,
    pub lambda: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            lambda: AMP_DEFAULT_LAMBDA,
        }
    }
}

/// Complex AMP with soft-threshold shrinkage and both Onsager terms.
pub fn amp_estimate(sys: &SensingSystem, y: &[C64], cfg: &AmpConfig) -> Result<(Vec<C64>, LayerTrace)> {
    amp_estimate_counted(sys, y, cfg, &NoTally)
}

pub fn amp_estimate_counted(
    sys: &SensingSystem,
    y: &[C64],
    cfg: &AmpConfig,
    tally: &impl Tally,
) -> Result<(Vec<C64>, LayerTrace)> {
    if y.len() != sys.m {
        return Err(Error::invalid(format!("measurement length {} != M = {}", y.len(), sys.m)));
    }
    if cfg.iterations == 0 {
        return Err(Error::invalid("AMP needs at least one iteration"));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {}", cfg.lambda)));
    }
    let (n, m) = (sys.n, sys.m);
    let mf = m as f64;
    let shrink = Shrinker::Soft(SoftThresholdParams { lambda: cfg.lambda });
    let mut scratch = Scratch::default();

    let mut h = zeros(n);
    let mut v_prev = zeros(m);
    let mut b = C64::new(0.0, 0.0);
    let mut c = C64::new(0.0, 0.0);
    let mut ah = zeros(m);
    let mut trace = LayerTrace::default();

    for _ in 0..cfg.iterations {
        // 1. residual with Onsager correction
        sys.a.mul_vec_into(&h, &mut ah, tally);
        let v: Vec<C64> = y
            .iter()
            .zip(&ah)
            .zip(&v_prev)
            .map(|((yi, ai), vp)| yi - ai + b * vp + c * vp.conj())
            .collect();
        tally.add(2 * m as u64);
        if let Some(last) = trace.layers.last_mut() {
            last.residual_out = v.clone();
        }
        // 2. noise level
        let sigma2 = norm_sqr(&v) / mf;
        tally.add(m as u64);
        // 3. linear step
        let mut r = sys.a.tr_mul_vec(&v, tally);
        r.iter_mut().zip(&h).for_each(|(ri, hi)| *ri += hi);
        // 4-6. shrinkage and Onsager coefficients
        let prepared = shrink.prepare(sigma2);
        let mut next = zeros(n);
        let mut db = C64::new(0.0, 0.0);
        let mut dc = C64::new(0.0, 0.0);
        for (out, &ri) in next.iter_mut().zip(&r) {
            let jet = prepared.eval(ri, &mut scratch, tally);
            *out = jet.value;
            db += jet.d_r();
            dc += jet.d_rconj();
        }
        b = db / mf;
        c = dc / mf;
        trace.layers.push(LayerRecord {
            residual_in: v.clone(),
            sigma2,
            r,
            estimate: next.clone(),
            onsager_b: b,
            onsager_c: c,
            residual_out: Vec::new(),
        });
        h = next;
        v_prev = v;
    }
    // residual after the final iteration, for trace completeness
    let ah_final = sys.a.mul_vec(&h, &NoTally);
    if let Some(last) = trace.layers.last_mut() {
        last.residual_out = y
            .iter()
            .zip(&ah_final)
            .zip(&v_prev)
            .map(|((yi, ai), vp)| yi - ai + b * vp + c * vp.conj())
            .collect();
    }
    Ok((h, trace))
}
