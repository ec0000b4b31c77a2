//! Sparse beamspace recovery: AMP, the unfolded LAMP / GM-LAMP networks and OMP.

mod amp;
mod complexity;
mod omp;
mod unfolded;

pub use amp::{amp_estimate, amp_estimate_counted, AmpConfig, AMP_DEFAULT_LAMBDA};
pub use complexity::{count_multiplies, EstimatorKind};
pub use omp::{omp_estimate, omp_estimate_counted};
pub(crate) use unfolded::forward_layers;
pub use unfolded::{
    gmlamp_forward, lamp_forward, unfolded_forward, unfolded_forward_counted, LayerParams,
    NetworkKind, UnfoldedNetwork,
};

use crate::linalg::C64;

/// Intermediate signals of one AMP iteration / network layer `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    /// Residual `v_t` entering the layer.
    pub residual_in: Vec<C64>,
    /// `σ_t² = ‖v_t‖² / M`
    pub sigma2: f64,
    /// Linear output `r_t`.
    pub r: Vec<C64>,
    /// Shrinkage output `ĥ_{t+1}`.
    pub estimate: Vec<C64>,
    pub onsager_b: C64,
    pub onsager_c: C64,
    /// Residual `v_{t+1}` leaving the layer.
    pub residual_out: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTrace {
    pub layers: Vec<LayerRecord>,
}

impl LayerTrace {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}
