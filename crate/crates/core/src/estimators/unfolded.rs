use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, zeros, ComplexMatrix, NoTally, Tally, C64};
use crate::measurement::SensingSystem;
use crate::shrinkage::{GmParams, Scratch, Shrinker, SoftThresholdParams};

use super::{LayerRecord, LayerTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NetworkKind {
    Lamp,
    GmLamp,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Lamp => "lamp",
            NetworkKind::GmLamp => "gmlamp",
        }
    }
}

/// Trainable variables of one layer: the linear map `B_t` (`N x M`) and the shrinker.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub b: ComplexMatrix,
    pub shrink: Shrinker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedNetwork {
    pub kind: NetworkKind,
    pub layers: Vec<LayerParams>,
}

impl UnfoldedNetwork {
    /// LAMP network with `B_t = Aᵀ` and a shared `λ`; identical to AMP with the same settings.
    pub fn lamp_from_amp(sys: &SensingSystem, layers: usize, lambda: f64) -> Self {
        let bt = sys.a.transpose_complex();
        Self {
            kind: NetworkKind::Lamp,
            layers: (0..layers)
                .map(|_| LayerParams {
                    b: bt.clone(),
                    shrink: Shrinker::Soft(SoftThresholdParams { lambda }),
                })
                .collect(),
        }
    }

    /// GM-LAMP network with `B_t = Aᵀ` and the same prior in every layer.
    pub fn gmlamp_with_prior(sys: &SensingSystem, layers: usize, theta: &GmParams) -> Self {
        let bt = sys.a.transpose_complex();
        Self {
            kind: NetworkKind::GmLamp,
            layers: (0..layers)
                .map(|_| LayerParams {
                    b: bt.clone(),
                    shrink: Shrinker::Gm(theta.clone()),
                })
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// The first `layers` layers as a network of their own.
    pub fn truncated(&self, layers: usize) -> Self {
        Self {
            kind: self.kind,
            layers: self.layers[..layers.min(self.layers.len())].to_vec(),
        }
    }

    /// Mixture size for GM-LAMP networks, `0` for LAMP.
    pub fn nc(&self) -> usize {
        match self.layers.first().map(|l| &l.shrink) {
            Some(Shrinker::Gm(g)) => g.nc(),
            _ => 0,
        }
    }

    pub fn validate(&self, sys: &SensingSystem) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (t, layer) in self.layers.iter().enumerate() {
            if layer.b.rows() != sys.n || layer.b.cols() != sys.m {
                return Err(Error::invalid(format!(
                    "layer {t}: B is {}x{}, expected {}x{}",
                    layer.b.rows(),
                    layer.b.cols(),
                    sys.n,
                    sys.m
                )));
            }
            let kind_ok = matches!(
                (self.kind, &layer.shrink),
                (NetworkKind::Lamp, Shrinker::Soft(_)) | (NetworkKind::GmLamp, Shrinker::Gm(_))
            );
            if !kind_ok {
                return Err(Error::invalid(format!("layer {t}: shrinker does not match network kind")));
            }
            layer.shrink.validate().map_err(|e| Error::invalid(format!("layer {t}: {e}")))?;
        }
        Ok(())
    }
}

/// Runs a network of either kind.
pub fn unfolded_forward(
    sys: &SensingSystem,
    y: &[C64],
    net: &UnfoldedNetwork,
) -> Result<(Vec<C64>, LayerTrace)> {
    unfolded_forward_counted(sys, y, net, &NoTally)
}

pub fn unfolded_forward_counted(
    sys: &SensingSystem,
    y: &[C64],
    net: &UnfoldedNetwork,
    tally: &impl Tally,
) -> Result<(Vec<C64>, LayerTrace)> {
    net.validate(sys)?;
    if y.len() != sys.m {
        return Err(Error::invalid(format!("measurement length {} != M = {}", y.len(), sys.m)));
    }
    let trace = forward_layers(sys, y, &net.layers, tally);
    let est = trace.layers.last().map(|l| l.estimate.clone()).unwrap_or_default();
    Ok((est, trace))
}

pub fn lamp_forward(sys: &SensingSystem, y: &[C64], net: &UnfoldedNetwork) -> Result<(Vec<C64>, LayerTrace)> {
    if net.kind != NetworkKind::Lamp {
        return Err(Error::invalid("lamp_forward needs a LAMP network"));
    }
    unfolded_forward(sys, y, net)
}

pub fn gmlamp_forward(sys: &SensingSystem, y: &[C64], net: &UnfoldedNetwork) -> Result<(Vec<C64>, LayerTrace)> {
    if net.kind != NetworkKind::GmLamp {
        return Err(Error::invalid("gmlamp_forward needs a GM-LAMP network"));
    }
    unfolded_forward(sys, y, net)
}

/// Layer recursion without validation; shared with training.
///
/// `v_0 = y`, `ĥ_0 = 0`; per layer `r = ĥ + B v`, `ĥ' = η(r; σ² = ‖v‖²/M)`,
/// `v' = y - A ĥ' + b v + c v*` with `b`, `c` the averaged Wirtinger derivatives.
pub(crate) fn forward_layers(
    sys: &SensingSystem,
    y: &[C64],
    layers: &[LayerParams],
    tally: &impl Tally,
) -> LayerTrace {
    let (n, m) = (sys.n, sys.m);
    let mf = m as f64;
    let mut scratch = Scratch::default();
    let mut h = zeros(n);
    let mut v = y.to_vec();
    let mut ah = zeros(m);
    let mut trace = LayerTrace {
        layers: Vec::with_capacity(layers.len()),
    };
    for layer in layers {
        let sigma2 = norm_sqr(&v) / mf;
        tally.add(m as u64);
        let mut r = layer.b.mul_vec(&v, tally);
        r.iter_mut().zip(&h).for_each(|(ri, hi)| *ri += hi);
        let prepared = layer.shrink.prepare(sigma2);
        let mut next = zeros(n);
        let mut db = C64::new(0.0, 0.0);
        let mut dc = C64::new(0.0, 0.0);
        for (out, &ri) in next.iter_mut().zip(&r) {
            let jet = prepared.eval(ri, &mut scratch, tally);
            *out = jet.value;
            db += jet.d_r();
            dc += jet.d_rconj();
        }
        let b = db / mf;
        let c = dc / mf;
        sys.a.mul_vec_into(&next, &mut ah, tally);
        let v_next: Vec<C64> = y
            .iter()
            .zip(&ah)
            .zip(&v)
            .map(|((yi, ai), vi)| yi - ai + b * vi + c * vi.conj())
            .collect();
        tally.add(2 * m as u64);
        trace.layers.push(LayerRecord {
            residual_in: std::mem::replace(&mut v, v_next.clone()),
            sigma2,
            r,
            estimate: next.clone(),
            onsager_b: b,
            onsager_c: c,
            residual_out: v_next,
        });
        h = next;
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{amp_estimate, AmpConfig, AMP_DEFAULT_LAMBDA};
    use crate::measurement::{gen_sensing, measure};
    use crate::rng::Seed;

    #[test]
    fn lamp_with_transpose_matches_amp() {
        let sys = gen_sensing(32, 16, &mut Seed(4).rng()).unwrap();
        let mut rng = Seed(5).rng();
        let h: Vec<C64> = (0..32)
            .map(|i| if i % 7 == 0 { C64::new(2.0, -1.0) } else { C64::new(0.0, 0.0) })
            .collect();
        let y = measure(&sys, &h, 15.0, &mut rng).unwrap();
        let net = UnfoldedNetwork::lamp_from_amp(&sys, 6, AMP_DEFAULT_LAMBDA);
        let (a, ta) = lamp_forward(&sys, &y, &net).unwrap();
        let (b, tb) = amp_estimate(
            &sys,
            &y,
            &AmpConfig {
                iterations: 6,
                lambda: AMP_DEFAULT_LAMBDA,
            },
        )
        .unwrap();
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-10, "{diff}");
        for (la, lb) in ta.layers.iter().zip(&tb.layers) {
            assert!((la.sigma2 - lb.sigma2).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_input_gives_zero() {
        let sys = gen_sensing(16, 8, &mut Seed(4).rng()).unwrap();
        let net = UnfoldedNetwork::lamp_from_amp(&sys, 3, 1.0);
        let (h, _) = lamp_forward(&sys, &zeros(8), &net).unwrap();
        assert!(h.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let sys = gen_sensing(16, 8, &mut Seed(4).rng()).unwrap();
        let lamp = UnfoldedNetwork::lamp_from_amp(&sys, 2, 1.0);
        let gm = UnfoldedNetwork::gmlamp_with_prior(&sys, 2, &GmParams::spike_init(4, 0.0));
        assert!(gmlamp_forward(&sys, &zeros(8), &lamp).is_err());
        assert!(lamp_forward(&sys, &zeros(8), &gm).is_err());
        let mut broken = gm.clone();
        broken.layers[1].shrink = Shrinker::Soft(SoftThresholdParams { lambda: 1.0 });
        assert!(unfolded_forward(&sys, &zeros(8), &broken).is_err());
    }

    #[test]
    fn spike_prior_suppresses_everything() {
        let sys = gen_sensing(16, 8, &mut Seed(4).rng()).unwrap();
        let theta = GmParams {
            weights_raw: vec![0.0; 4],
            means: vec![C64::new(0.0, 0.0); 4],
            log_vars: vec![(1e-10f64).ln(); 4],
        };
        let net = UnfoldedNetwork::gmlamp_with_prior(&sys, 4, &theta);
        let y: Vec<C64> = (0..8).map(|i| C64::new(3.0 - i as f64, 1.5)).collect();
        let (h, _) = gmlamp_forward(&sys, &y, &net).unwrap();
        assert!(norm_sqr(&h) < 1e-12 * norm_sqr(&y));
    }
}
