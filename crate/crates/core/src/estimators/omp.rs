use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{zeros, NoTally, Tally, C64};
use crate::measurement::SensingSystem;

/// Orthogonal matching pursuit with exactly `sparsity` atoms.
pub fn omp_estimate(sys: &SensingSystem, y: &[C64], sparsity: usize) -> Result<Vec<C64>> {
    omp_estimate_counted(sys, y, sparsity, &NoTally)
}

pub fn omp_estimate_counted(
    sys: &SensingSystem,
    y: &[C64],
    sparsity: usize,
    tally: &impl Tally,
) -> Result<Vec<C64>> {
    let (n, m) = (sys.n, sys.m);
    if y.len() != m {
        return Err(Error::invalid(format!("measurement length {} != M = {}", y.len(), m)));
    }
    if sparsity == 0 || sparsity > m {
        return Err(Error::invalid(format!("sparsity must be in 1..={m}, got {sparsity}")));
    }
    let a = &sys.a;
    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut selected = vec![false; n];
    let mut estimate = zeros(n);

    for _ in 0..sparsity {
        let corr = a.tr_mul_vec(&residual, tally);
        let best = corr
            .iter()
            .enumerate()
            .filter(|(j, _)| !selected[*j])
            .max_by(|p, q| p.1.norm_sqr().total_cmp(&q.1.norm_sqr()))
            .map(|(j, _)| j)
            .expect("sparsity <= M <= N leaves a free column");
        selected[best] = true;
        support.push(best);

        let coef = least_squares_on_support(sys, &support, y, tally);
        estimate.iter_mut().for_each(|e| *e = C64::new(0.0, 0.0));
        for (&j, &x) in support.iter().zip(&coef) {
            estimate[j] = x;
        }
        let fitted = a.mul_vec(&estimate, tally);
        residual.iter_mut().zip(y.iter().zip(&fitted)).for_each(|(r, (yi, fi))| *r = yi - fi);
    }
    Ok(estimate)
}

/// `x = (A_Sᵀ A_S)⁻¹ A_Sᵀ y` through the explicit pseudo-inverse.
fn least_squares_on_support(sys: &SensingSystem, support: &[usize], y: &[C64], tally: &impl Tally) -> Vec<C64> {
    let k = support.len();
    let m = sys.m;
    // Gram matrix
    let mut gram = vec![0.0; k * k];
    for (p, &cp) in support.iter().enumerate() {
        for (q, &cq) in support.iter().enumerate() {
            gram[p * k + q] = (0..m).map(|r| sys.a.get(r, cp) * sys.a.get(r, cq)).sum();
        }
    }
    tally.add((k * k * m) as u64);

    let pinv: Vec<f64> = match invert_spd(&gram, k, tally) {
        Some(inv) => {
            // (AᵀA)⁻¹ Aᵀ, k x M
            let mut p = vec![0.0; k * m];
            for i in 0..k {
                for r in 0..m {
                    p[i * m + r] = (0..k).map(|j| inv[i * k + j] * sys.a.get(r, support[j])).sum();
                }
            }
            tally.add((k * k * m) as u64);
            p
        }
        None => {
            log::warn!("OMP: support Gram matrix is singular at size {k}; using the SVD pseudo-inverse");
            let sub = DMatrix::from_fn(m, k, |r, j| sys.a.get(r, support[j]));
            let p = sub
                .pseudo_inverse(1e-12)
                .expect("non-negative epsilon is accepted");
            tally.add((k * k * m) as u64);
            (0..k).flat_map(|i| (0..m).map(move |r| (i, r))).map(|(i, r)| p[(i, r)]).collect()
        }
    };
    let coef = (0..k)
        .map(|i| (0..m).map(|r| y[r] * pinv[i * m + r]).sum())
        .collect();
    tally.add((k * m) as u64);
    coef
}

/// Gauss-Jordan inverse with partial pivoting; `None` when (numerically) singular.
fn invert_spd(a: &[f64], k: usize, tally: &impl Tally) -> Option<Vec<f64>> {
    let scale = (0..k).map(|i| a[i * k + i].abs()).fold(0.0, f64::max);
    let mut work = a.to_vec();
    let mut inv = vec![0.0; k * k];
    for i in 0..k {
        inv[i * k + i] = 1.0;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| work[p * k + col].abs().total_cmp(&work[q * k + col].abs()))?;
        if work[piv * k + col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        if piv != col {
            for c in 0..k {
                work.swap(piv * k + c, col * k + c);
                inv.swap(piv * k + c, col * k + c);
            }
        }
        let d = 1.0 / work[col * k + col];
        for c in 0..k {
            work[col * k + c] *= d;
            inv[col * k + c] *= d;
        }
        for row in 0..k {
            if row == col {
                continue;
            }
            let f = work[row * k + col];
            if f != 0.0 {
                for c in 0..k {
                    work[row * k + c] -= f * work[col * k + c];
                    inv[row * k + c] -= f * inv[col * k + c];
                }
            }
        }
    }
    tally.add((k * k * k) as u64);
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use crate::measurement::gen_sensing;
    use crate::rng::Seed;

    #[test]
    fn one_sparse_exact_recovery() {
        let sys = gen_sensing(64, 32, &mut Seed(8).rng()).unwrap();
        let mut h = zeros(64);
        h[17] = C64::new(-1.25, 0.5);
        let y = sys.a.mul_vec(&h, &NoTally);
        let est = omp_estimate(&sys, &y, 1).unwrap();
        assert!(est.iter().zip(&h).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn full_support_residual_is_orthogonal() {
        let sys = gen_sensing(24, 12, &mut Seed(9).rng()).unwrap();
        let y: Vec<C64> = (0..12).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let est = omp_estimate(&sys, &y, 12).unwrap();
        let fitted = sys.a.mul_vec(&est, &NoTally);
        let res: Vec<C64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        // M independent columns span C^M, so the LS residual vanishes
        assert!(norm_sqr(&res) < 1e-20 * norm_sqr(&y));
        assert_eq!(est.iter().filter(|v| v.norm() > 0.0).count(), 12);
    }

    #[test]
    fn rejects_bad_sparsity() {
        let sys = gen_sensing(16, 8, &mut Seed(1).rng()).unwrap();
        assert!(omp_estimate(&sys, &zeros(8), 0).is_err());
        assert!(omp_estimate(&sys, &zeros(8), 9).is_err());
        assert!(omp_estimate(&sys, &zeros(7), 2).is_err());
    }

    #[test]
    fn inverse_is_correct() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert_spd(&a, 3, &NoTally).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(invert_spd(&[1.0, 1.0, 1.0, 1.0], 2, &NoTally).is_none());
    }
}
