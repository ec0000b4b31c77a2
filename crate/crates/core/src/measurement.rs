//! Pseudo-random beam selection and noisy pilot measurements.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{lens_matrix, sample_sv_channel_with_lens, ArrayGeometry, ChannelSample};
use crate::error::{Error, Result};
use crate::linalg::{NoTally, RealMatrix, C64};
use crate::rng::Seed;

/// The `M x N` selection matrix with ±1/√M entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSystem {
    pub a: RealMatrix,
    pub n: usize,
    pub m: usize,
    /// Default noise variance; [`measure`] takes the SNR explicitly.
    pub noise_var: f64,
}

impl SensingSystem {
    /// Wraps an existing matrix after checking that every entry is ±1/√M.
    pub fn from_matrix(a: RealMatrix) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        if m == 0 || m > n {
            return Err(Error::invalid(format!("need 1 <= m <= n, got m={m}, n={n}")));
        }
        let mag = 1.0 / (m as f64).sqrt();
        if a.as_slice().iter().any(|v| v.abs() != mag) {
            return Err(Error::invalid("selection matrix entries must be ±1/sqrt(M)"));
        }
        Ok(Self {
            a,
            n,
            m,
            noise_var: 0.0,
        })
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_var = noise_var_from_snr_db(snr_db);
        self
    }
}

/// `σ² = 10^(-SNR/10)`; `+∞` dB maps to zero noise.
pub fn noise_var_from_snr_db(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

pub fn gen_sensing(n: usize, m: usize, rng: &mut impl Rng) -> Result<SensingSystem> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    let mag = 1.0 / (m as f64).sqrt();
    let data = (0..m * n)
        .map(|_| if rng.gen::<bool>() { mag } else { -mag })
        .collect();
    Ok(SensingSystem {
        a: RealMatrix::from_row_major(m, n, data),
        n,
        m,
        noise_var: 0.0,
    })
}

/// `y = A h̃ + A n`, `n ~ CN(0, σ² I_N)`, `σ² = 10^(-snr_db/10)`.
pub fn measure(
    sys: &SensingSystem,
    hbeam: &[C64],
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<Vec<C64>> {
    if hbeam.len() != sys.n {
        return Err(Error::invalid(format!(
            "beamspace length {} does not match N = {}",
            hbeam.len(),
            sys.n
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("snr_db is NaN"));
    }
    let var = noise_var_from_snr_db(snr_db);
    if var == 0.0 {
        return Ok(sys.a.mul_vec(hbeam, &NoTally));
    }
    let sd = (var / 2.0).sqrt();
    let noisy: Vec<C64> = hbeam
        .iter()
        .map(|h| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            h + C64::new(re, im) * sd
        })
        .collect();
    Ok(sys.a.mul_vec(&noisy, &NoTally))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrPolicy {
    Single(f64),
    /// Uniform in dB over `[lo, hi]`.
    Range(f64, f64),
}

impl SnrPolicy {
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SnrPolicy::Single(db) => db,
            SnrPolicy::Range(lo, hi) if lo == hi => lo,
            SnrPolicy::Range(lo, hi) => rng.gen_range(lo..=hi),
        }
    }
}

/// Where the noiseless channels for a dataset come from.
#[derive(Debug, Clone, Copy)]
pub enum ChannelSource<'a> {
    /// Fresh Saleh-Valenzuela draws.
    Simulated {
        geometry: ArrayGeometry,
        num_paths: usize,
    },
    /// Existing samples, cycled in order.
    Samples(&'a [ChannelSample]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    pub y: Vec<Vec<C64>>,
    /// Noiseless beamspace labels.
    pub truth: Vec<Vec<C64>>,
    pub snr_db: Vec<f64>,
}

impl MeasurementBatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Copies out the samples at `idx`.
    pub fn select(&self, idx: &[usize]) -> MeasurementBatch {
        MeasurementBatch {
            y: idx.iter().map(|&i| self.y[i].clone()).collect(),
            truth: idx.iter().map(|&i| self.truth[i].clone()).collect(),
            snr_db: idx.iter().map(|&i| self.snr_db[i]).collect(),
        }
    }
}

/// Measures `count` channels from `source`. Sample `i` uses the child stream
/// `seed.child(i)`, so the batch does not depend on the worker count.
pub fn build_dataset(
    source: ChannelSource<'_>,
    sys: &SensingSystem,
    policy: SnrPolicy,
    count: usize,
    seed: Seed,
) -> Result<MeasurementBatch> {
    if count == 0 {
        return Err(Error::invalid("dataset count must be at least 1"));
    }
    if let SnrPolicy::Range(lo, hi) = policy {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("bad SNR range [{lo}, {hi}]")));
        }
    }
    let lens = match source {
        ChannelSource::Samples(s) if s.is_empty() => {
            return Err(Error::invalid("channel source is empty"))
        }
        ChannelSource::Samples(s) => {
            if s.iter().any(|c| c.beamspace.len() != sys.n) {
                return Err(Error::invalid("channel length does not match the sensing system"));
            }
            None
        }
        ChannelSource::Simulated { geometry, .. } => {
            if geometry.antennas() != sys.n {
                return Err(Error::invalid("geometry size does not match the sensing system"));
            }
            Some(lens_matrix(&geometry)?)
        }
    };
    let rows: Vec<(Vec<C64>, Vec<C64>, f64)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.child(i as u64).rng();
            let truth = match (&source, &lens) {
                (ChannelSource::Samples(s), _) => s[i % s.len()].beamspace.clone(),
                (ChannelSource::Simulated { geometry, num_paths }, Some(lens)) => {
                    sample_sv_channel_with_lens(geometry, lens, *num_paths, &mut rng)?.beamspace
                }
                _ => unreachable!(),
            };
            let snr = policy.draw(&mut rng);
            let y = measure(sys, &truth, snr, &mut rng)?;
            Ok((y, truth, snr))
        })
        .collect::<Result<_>>()?;
    let mut batch = MeasurementBatch {
        y: Vec::with_capacity(count),
        truth: Vec::with_capacity(count),
        snr_db: Vec::with_capacity(count),
    };
    for (y, t, s) in rows {
        batch.y.push(y);
        batch.truth.push(t);
        batch.snr_db.push(s);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;

    #[test]
    fn sensing_entries_have_fixed_magnitude() {
        let sys = gen_sensing(256, 128, &mut Seed(1).rng()).unwrap();
        let mag = 1.0 / 128f64.sqrt();
        assert!((mag - 0.088388).abs() < 1e-6);
        assert!(sys.a.as_slice().iter().all(|v| v.abs() == mag));
        assert!(SensingSystem::from_matrix(sys.a.clone()).is_ok());
    }

    #[test]
    fn sensing_is_reproducible_and_validated() {
        let a = gen_sensing(4, 2, &mut Seed(9).rng()).unwrap();
        let b = gen_sensing(4, 2, &mut Seed(9).rng()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(gen_sensing(4, 5, &mut Seed(9).rng()), Err(Error::InvalidArgument(_))));
        assert!(gen_sensing(4, 0, &mut Seed(9).rng()).is_err());
    }

    #[test]
    fn column_inner_products_are_near_orthonormal() {
        let (n, m) = (16, 8);
        let mut off = 0.0;
        let mut diag = 0.0;
        let mut count = 0.0;
        for s in 0..1000 {
            let sys = gen_sensing(n, m, &mut Seed(s).rng()).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let ip: f64 = (0..m).map(|r| sys.a.get(r, i) * sys.a.get(r, j)).sum();
                    if i == j {
                        diag += ip;
                    } else {
                        off += ip;
                        count += 1.0;
                    }
                }
            }
        }
        assert!((diag / (1000.0 * n as f64) - 1.0).abs() < 1e-12);
        assert!((off / count).abs() <= 0.05);
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let sys = gen_sensing(8, 4, &mut Seed(2).rng()).unwrap();
        let h: Vec<C64> = (0..8).map(|i| C64::new(i as f64, -1.0)).collect();
        let y = measure(&sys, &h, f64::INFINITY, &mut Seed(3).rng()).unwrap();
        assert_eq!(y, sys.a.mul_vec(&h, &NoTally));
        assert!(measure(&sys, &h[..7], 10.0, &mut Seed(3).rng()).is_err());
    }

    #[test]
    fn measurement_is_reproducible() {
        let sys = gen_sensing(8, 4, &mut Seed(2).rng()).unwrap();
        let h = vec![C64::new(1.0, 0.5); 8];
        let a = measure(&sys, &h, 5.0, &mut Seed(4).rng()).unwrap();
        let b = measure(&sys, &h, 5.0, &mut Seed(4).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_power_matches_snr() {
        let sys = gen_sensing(32, 16, &mut Seed(5).rng()).unwrap();
        let zero = vec![C64::new(0.0, 0.0); 32];
        let mut rng = Seed(6).rng();
        let snr = 3.0;
        let draws = 10_000;
        let mut total = 0.0;
        for _ in 0..draws {
            total += norm_sqr(&measure(&sys, &zero, snr, &mut rng).unwrap());
        }
        let per_entry = total / (draws * 16) as f64;
        // each row of A has N entries of magnitude 1/√M
        let row_norm2 = 32.0 / 16.0;
        let var = noise_var_from_snr_db(snr) * row_norm2;
        assert!((per_entry / var - 1.0).abs() <= 0.05, "{per_entry} vs {var}");
    }

    #[test]
    fn dataset_policies() {
        let sys = gen_sensing(16, 8, &mut Seed(1).rng()).unwrap();
        let src = ChannelSource::Simulated {
            geometry: ArrayGeometry::ula(16),
            num_paths: 3,
        };
        let single = build_dataset(src, &sys, SnrPolicy::Single(5.0), 20, Seed(2)).unwrap();
        assert!(single.snr_db.iter().all(|&s| s == 5.0));
        assert_eq!(single.len(), 20);

        let ranged = build_dataset(src, &sys, SnrPolicy::Range(0.0, 10.0), 10_000, Seed(3)).unwrap();
        let mean = ranged.snr_db.iter().sum::<f64>() / 10_000.0;
        assert!((mean - 5.0).abs() <= 0.2, "{mean}");
        assert!(ranged.snr_db.iter().all(|&s| (0.0..=10.0).contains(&s)));

        let again = build_dataset(src, &sys, SnrPolicy::Range(0.0, 10.0), 10_000, Seed(3)).unwrap();
        assert_eq!(ranged, again);

        assert!(build_dataset(ChannelSource::Samples(&[]), &sys, SnrPolicy::Single(0.0), 1, Seed(0)).is_err());
        assert!(build_dataset(src, &sys, SnrPolicy::Single(0.0), 0, Seed(0)).is_err());
    }
}
