use crate::shrinkage::{gm_eval_cost, soft_eval_cost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Omp,
    Amp,
    Lamp,
    /// GM-LAMP with the given mixture size.
    GmLamp { nc: usize },
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Omp => "omp",
            EstimatorKind::Amp => "amp",
            EstimatorKind::Lamp => "lamp",
            EstimatorKind::GmLamp { .. } => "gmlamp",
        }
    }
}

/// Complex multiplications performed by one estimate.
///
/// `depth` is the sparsity `S` for OMP and the iteration/layer count `T` otherwise.
/// Per OMP iteration `i`: correlation `MN`, Gram `i²M`, inverse `i³`, pseudo-inverse
/// `i²M`, projection `iM`, residual `MN`. Per AMP/LAMP layer: two `MN` products,
/// `3M` for the noise level and Onsager terms, and the shrinker's per-element cost.
pub fn count_multiplies(kind: EstimatorKind, n: usize, m: usize, depth: usize) -> u64 {
    let (n, m, d) = (n as u64, m as u64, depth as u64);
    match kind {
        EstimatorKind::Omp => (1..=d).map(|i| 2 * m * n + 2 * i * i * m + i * i * i + i * m).sum(),
        EstimatorKind::Amp | EstimatorKind::Lamp => d * (2 * m * n + 3 * m + soft_eval_cost() * n),
        EstimatorKind::GmLamp { nc } => d * (2 * m * n + 3 * m + gm_eval_cost(nc) * n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_dimensions() {
        let omp = count_multiplies(EstimatorKind::Omp, 256, 128, 24) as f64;
        let amp = count_multiplies(EstimatorKind::Amp, 256, 128, 10) as f64;
        let lamp = count_multiplies(EstimatorKind::Lamp, 256, 128, 8) as f64;
        let gm = count_multiplies(EstimatorKind::GmLamp { nc: 4 }, 256, 128, 8) as f64;
        for (got, want) in [(omp, 2.9e6), (amp, 6.6e5), (lamp, 5.3e5), (gm, 6.1e5)] {
            assert!((got / want - 1.0).abs() <= 0.1, "{got} vs {want}");
        }
    }
}
