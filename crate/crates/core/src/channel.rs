//! Saleh-Valenzuela channels for lens-array base stations.
//!
//! Spatial channels are sums of array steering vectors; the lens array applies a
//! spatial-DFT matrix `U` that maps them to the (approximately sparse) beamspace.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayShape {
    Ula { n: usize },
    /// `n1` azimuth elements by `n2` elevation elements; `n2` is the fast index.
    Upa { n1: usize, n2: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub shape: ArrayShape,
    /// Element spacing in wavelengths (`d/λ`).
    pub spacing_over_lambda: f64,
}

impl ArrayGeometry {
    pub fn ula(n: usize) -> Self {
        Self {
            shape: ArrayShape::Ula { n },
            spacing_over_lambda: 0.5,
        }
    }

    pub fn upa(n1: usize, n2: usize) -> Self {
        Self {
            shape: ArrayShape::Upa { n1, n2 },
            spacing_over_lambda: 0.5,
        }
    }

    pub fn with_spacing(mut self, spacing_over_lambda: f64) -> Self {
        self.spacing_over_lambda = spacing_over_lambda;
        self
    }

    pub fn antennas(&self) -> usize {
        match self.shape {
            ArrayShape::Ula { n } => n,
            ArrayShape::Upa { n1, n2 } => n1 * n2,
        }
    }

    pub fn is_ula(&self) -> bool {
        matches!(self.shape, ArrayShape::Ula { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok_dims = match self.shape {
            ArrayShape::Ula { n } => n >= 1,
            ArrayShape::Upa { n1, n2 } => n1 >= 1 && n2 >= 1,
        };
        if !ok_dims {
            return Err(Error::invalid(format!("array needs at least one element: {:?}", self.shape)));
        }
        if !(self.spacing_over_lambda > 0.0 && self.spacing_over_lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "spacing_over_lambda must be positive, got {}",
                self.spacing_over_lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: C64,
    pub azimuth_rad: f64,
    /// Ignored for ULAs.
    pub elevation_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub spatial: Vec<C64>,
    pub beamspace: Vec<C64>,
    pub paths: Vec<PathParams>,
    pub geometry: ArrayGeometry,
}

/// `exp(-j 2π ψ i) / √len` for `i = 0..len`.
fn phase_ramp(psi: f64, len: usize, scale: f64) -> impl Iterator<Item = C64> {
    (0..len).map(move |i| C64::from_polar(scale, -2.0 * PI * psi * i as f64))
}

pub fn steering_ula(geometry: &ArrayGeometry, theta_rad: f64) -> Result<Vec<C64>> {
    geometry.validate()?;
    let ArrayShape::Ula { n } = geometry.shape else {
        return Err(Error::invalid("steering_ula needs a ULA geometry"));
    };
    let psi = geometry.spacing_over_lambda * theta_rad.sin();
    Ok(phase_ramp(psi, n, 1.0 / (n as f64).sqrt()).collect())
}

pub fn steering_upa(geometry: &ArrayGeometry, azi_rad: f64, ele_rad: f64) -> Result<Vec<C64>> {
    geometry.validate()?;
    let ArrayShape::Upa { n1, n2 } = geometry.shape else {
        return Err(Error::invalid("steering_upa needs a UPA geometry"));
    };
    let d = geometry.spacing_over_lambda;
    let psi_azi = d * azi_rad.sin() * ele_rad.sin();
    let psi_ele = d * ele_rad.cos();
    let scale = 1.0 / ((n1 * n2) as f64).sqrt();
    let outer: Vec<C64> = phase_ramp(psi_azi, n1, 1.0).collect();
    let inner: Vec<C64> = phase_ramp(psi_ele, n2, 1.0).collect();
    Ok(outer
        .iter()
        .flat_map(|o| inner.iter().map(move |i| o * i * scale))
        .collect())
}

/// Steering vector for a path, dispatching on the geometry.
pub fn steering(geometry: &ArrayGeometry, path: &PathParams) -> Result<Vec<C64>> {
    match geometry.shape {
        ArrayShape::Ula { .. } => steering_ula(geometry, path.azimuth_rad),
        ArrayShape::Upa { .. } => steering_upa(geometry, path.azimuth_rad, path.elevation_rad),
    }
}

/// Predefined lens directions `(n - (N+1)/2) / N`, `n = 1..=N`.
pub fn lens_grid(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (1..=n).map(|k| (k as f64 - (nf + 1.0) / 2.0) / nf).collect()
}

/// The lens array's spatial-DFT matrix. Row `k` is the conjugated steering
/// vector for grid direction `k`; for a UPA the elevation index is fast.
pub fn lens_matrix(geometry: &ArrayGeometry) -> Result<ComplexMatrix> {
    geometry.validate()?;
    let rows: Vec<Vec<C64>> = match geometry.shape {
        ArrayShape::Ula { n } => {
            let scale = 1.0 / (n as f64).sqrt();
            lens_grid(n)
                .into_iter()
                .map(|psi| phase_ramp(psi, n, scale).map(|z| z.conj()).collect())
                .collect()
        }
        ArrayShape::Upa { n1, n2 } => {
            let scale = 1.0 / ((n1 * n2) as f64).sqrt();
            let g1 = lens_grid(n1);
            let g2 = lens_grid(n2);
            let mut rows = Vec::with_capacity(n1 * n2);
            for &pa in &g1 {
                let outer: Vec<C64> = phase_ramp(pa, n1, 1.0).collect();
                for &pe in &g2 {
                    let inner: Vec<C64> = phase_ramp(pe, n2, 1.0).collect();
                    rows.push(
                        outer
                            .iter()
                            .flat_map(|o| inner.iter().map(move |i| (o * i * scale).conj()))
                            .collect(),
                    );
                }
            }
            rows
        }
    };
    let n = geometry.antennas();
    Ok(ComplexMatrix::from_row_major(n, n, rows.into_iter().flatten().collect()))
}

fn standard_complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform on the open interval (-π/2, π/2).
fn open_half_circle_angle(rng: &mut impl Rng) -> f64 {
    loop {
        let a = rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
        if a > -FRAC_PI_2 {
            return a;
        }
    }
}

/// `√(N/L) Σ_l β_l a(path_l)`.
pub fn spatial_from_paths(geometry: &ArrayGeometry, paths: &[PathParams]) -> Result<Vec<C64>> {
    if paths.is_empty() {
        return Err(Error::invalid("need at least one path"));
    }
    let n = geometry.antennas();
    let scale = (n as f64 / paths.len() as f64).sqrt();
    let mut h = vec![C64::new(0.0, 0.0); n];
    for p in paths {
        for (hi, ai) in h.iter_mut().zip(steering(geometry, p)?) {
            *hi += p.gain * ai * scale;
        }
    }
    Ok(h)
}

/// Builds a sample from a spatial channel, computing its beamspace image.
pub fn sample_from_spatial(
    geometry: &ArrayGeometry,
    lens: &ComplexMatrix,
    spatial: Vec<C64>,
    paths: Vec<PathParams>,
) -> ChannelSample {
    let beamspace = lens.mul_vec(&spatial, &crate::linalg::NoTally);
    ChannelSample {
        spatial,
        beamspace,
        paths,
        geometry: *geometry,
    }
}

/// Draws one channel with `num_paths` paths: `β ~ CN(0,1)`, angles uniform on (-π/2, π/2).
pub fn sample_sv_channel(
    geometry: &ArrayGeometry,
    num_paths: usize,
    rng: &mut impl Rng,
) -> Result<ChannelSample> {
    let lens = lens_matrix(geometry)?;
    sample_sv_channel_with_lens(geometry, &lens, num_paths, rng)
}

/// As [`sample_sv_channel`] with a precomputed lens matrix.
pub fn sample_sv_channel_with_lens(
    geometry: &ArrayGeometry,
    lens: &ComplexMatrix,
    num_paths: usize,
    rng: &mut impl Rng,
) -> Result<ChannelSample> {
    geometry.validate()?;
    if num_paths == 0 {
        return Err(Error::invalid("num_paths must be at least 1"));
    }
    let paths: Vec<PathParams> = (0..num_paths)
        .map(|_| {
            let gain = standard_complex_normal(rng);
            let azimuth_rad = open_half_circle_angle(rng);
            let elevation_rad = if geometry.is_ula() {
                0.0
            } else {
                open_half_circle_angle(rng)
            };
            PathParams {
                gain,
                azimuth_rad,
                elevation_rad,
            }
        })
        .collect();
    let spatial = spatial_from_paths(geometry, &paths)?;
    Ok(sample_from_spatial(geometry, lens, spatial, paths))
}

/// Dirichlet kernel `(1/N) Σ_{i<N} exp(j2π x i)`, equal to 1 at `x = 0`.
pub fn dirichlet_sinc(x: f64, n: usize) -> C64 {
    let nf = n as f64;
    let den = nf * (PI * x).sin();
    if den.abs() < 1e-300 || x.fract() == 0.0 {
        // the kernel is 1 at every integer x
        return C64::new(1.0, 0.0);
    }
    let mag = (nf * PI * x).sin() / den;
    C64::from_polar(mag, PI * x * (nf - 1.0))
}

/// Beamspace entry `n` (0-based) of a ULA channel evaluated in closed form from its paths.
pub fn beamspace_element_closed_form(
    geometry: &ArrayGeometry,
    paths: &[PathParams],
    n: usize,
) -> Result<C64> {
    geometry.validate()?;
    let ArrayShape::Ula { n: size } = geometry.shape else {
        return Err(Error::invalid("closed-form beamspace element is ULA-only"));
    };
    if (geometry.spacing_over_lambda - 0.5).abs() > 1e-15 {
        return Err(Error::invalid("closed-form beamspace element assumes half-wavelength spacing"));
    }
    if n >= size {
        return Err(Error::invalid(format!("index {n} out of range for N = {size}")));
    }
    if paths.is_empty() {
        return Err(Error::invalid("need at least one path"));
    }
    let grid = (n as f64 + 1.0 - (size as f64 + 1.0) / 2.0) / size as f64;
    let scale = (size as f64 / paths.len() as f64).sqrt();
    Ok(paths
        .iter()
        .map(|p| {
            let psi = geometry.spacing_over_lambda * p.azimuth_rad.sin();
            p.gain * dirichlet_sinc(grid - psi, size)
        })
        .sum::<C64>()
        * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use crate::rng::Seed;

    fn unitarity_error(u: &ComplexMatrix) -> f64 {
        u.matmul(&u.adjoint()).max_abs_diff(&ComplexMatrix::identity(u.rows()))
    }

    #[test]
    fn ula_steering_broadside_is_flat() {
        let a = steering_ula(&ArrayGeometry::ula(4), 0.0).unwrap();
        for v in &a {
            assert!((v - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ula_steering_phase_step() {
        let a = steering_ula(&ArrayGeometry::ula(8), PI / 6.0).unwrap();
        assert!((a[1].arg() + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn steering_rejects_wrong_geometry() {
        assert!(matches!(
            steering_ula(&ArrayGeometry::upa(2, 2), 0.1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            steering_upa(&ArrayGeometry::ula(4), 0.1, 0.2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn upa_steering_flat_case() {
        let a = steering_upa(&ArrayGeometry::upa(2, 2), 0.0, FRAC_PI_2).unwrap();
        for v in &a {
            assert!((v - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn upa_steering_matches_double_loop() {
        let mut rng = Seed(11).rng();
        let g = ArrayGeometry::upa(3, 5);
        for _ in 0..20 {
            let azi = rng.gen_range(-1.5..1.5);
            let ele = rng.gen_range(-1.5..1.5);
            let a = steering_upa(&g, azi, ele).unwrap();
            let s = 1.0 / 15f64.sqrt();
            for i1 in 0..3 {
                for i2 in 0..5 {
                    let phase = -PI * (azi.sin() * ele.sin() * i1 as f64 + ele.cos() * i2 as f64);
                    let want = C64::from_polar(s, phase);
                    assert!((a[i1 * 5 + i2] - want).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lens_grid_small() {
        assert_eq!(lens_grid(4), vec![-0.375, -0.125, 0.125, 0.375]);
    }

    #[test]
    fn lens_matrices_are_unitary() {
        for n in [4, 16, 64] {
            assert!(unitarity_error(&lens_matrix(&ArrayGeometry::ula(n)).unwrap()) <= 1e-12);
        }
        assert!(unitarity_error(&lens_matrix(&ArrayGeometry::upa(4, 4)).unwrap()) <= 1e-12);
        assert!(unitarity_error(&lens_matrix(&ArrayGeometry::upa(2, 3)).unwrap()) <= 1e-12);
    }

    #[test]
    fn single_fixed_path_is_scaled_steering() {
        let g = ArrayGeometry::ula(16);
        let p = PathParams {
            gain: C64::new(1.0, 0.0),
            azimuth_rad: 0.3,
            elevation_rad: 0.0,
        };
        let h = spatial_from_paths(&g, &[p]).unwrap();
        let a = steering_ula(&g, 0.3).unwrap();
        for (x, y) in h.iter().zip(&a) {
            assert!((x - y * 4.0).norm() < 1e-14);
        }
    }

    #[test]
    fn sample_preserves_norm() {
        let mut rng = Seed(3).rng();
        for g in [ArrayGeometry::ula(32), ArrayGeometry::upa(4, 8)] {
            for _ in 0..10 {
                let s = sample_sv_channel(&g, 3, &mut rng).unwrap();
                let a = norm_sqr(&s.spatial).sqrt();
                let b = norm_sqr(&s.beamspace).sqrt();
                assert!((a - b).abs() <= 1e-10);
                for p in &s.paths {
                    assert!(p.azimuth_rad.abs() < FRAC_PI_2);
                }
            }
        }
        assert!(sample_sv_channel(&ArrayGeometry::ula(4), 0, &mut rng).is_err());
    }

    #[test]
    fn closed_form_on_grid_cases() {
        let n = 16;
        let g = ArrayGeometry::ula(n);
        let grid = lens_grid(n);
        // path exactly on grid direction 5
        let theta = (grid[5] / 0.5).asin();
        let beta = C64::new(0.7, -0.2);
        let p = [PathParams {
            gain: beta,
            azimuth_rad: theta,
            elevation_rad: 0.0,
        }];
        let on = beamspace_element_closed_form(&g, &p, 5).unwrap();
        assert!((on - beta * 4.0).norm() < 1e-12);
        let off = beamspace_element_closed_form(&g, &p, 9).unwrap();
        assert!(off.norm() < 1e-12);
        assert!(beamspace_element_closed_form(&ArrayGeometry::upa(4, 4), &p, 0).is_err());
    }

    #[test]
    fn closed_form_matches_matrix_multiply() {
        let mut rng = Seed(5).rng();
        let g = ArrayGeometry::ula(64);
        let lens = lens_matrix(&g).unwrap();
        for _ in 0..5 {
            let s = sample_sv_channel_with_lens(&g, &lens, 3, &mut rng).unwrap();
            for n in 0..64 {
                let cf = beamspace_element_closed_form(&g, &s.paths, n).unwrap();
                assert!((cf - s.beamspace[n]).norm() <= 1e-9);
            }
        }
    }
}
