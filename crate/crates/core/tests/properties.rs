use beamscope::channel::{lens_matrix, sample_sv_channel, steering_ula, steering_upa, ArrayGeometry};
use beamscope::estimators::{amp_estimate, omp_estimate, AmpConfig, LayerParams, NetworkKind, UnfoldedNetwork};
use beamscope::eval::nmse;
use beamscope::linalg::{norm_sqr, NoTally};
use beamscope::measurement::{gen_sensing, measure};
use beamscope::rng::Seed;
use beamscope::shrinkage::{gm_shrinkage, soft_threshold, GmParams, Shrinker};
use beamscope::training::{adam_step, gather_params, scatter_params, AdamState, TrainMask};
use beamscope::C64;
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn gm(nc: usize) -> impl Strategy<Value = GmParams> {
    (
        prop::collection::vec(-2.0..2.0f64, nc),
        prop::collection::vec(c64(), nc),
        prop::collection::vec(-2.0..2.0f64, nc),
    )
        .prop_map(|(weights_raw, means, log_vars)| GmParams {
            weights_raw,
            means,
            log_vars,
        })
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn soft_threshold_is_phase_equivariant(r in c64(), phi in -3.2..3.2f64, lambda in 0.0..3.0f64, s in 0.01..4.0f64) {
        let rot = C64::from_polar(1.0, phi);
        let a = soft_threshold(rot * r, lambda, s).unwrap();
        let b = rot * soft_threshold(r, lambda, s).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn gm_shrinkage_is_shift_covariant(theta in gm(3), r in c64(), shift in c64(), s in 0.05..5.0f64) {
        let mut moved = theta.clone();
        moved.means.iter_mut().for_each(|m| *m += shift);
        let a = gm_shrinkage(r + shift, &moved, s).unwrap();
        let b = gm_shrinkage(r, &theta, s).unwrap() + shift;
        prop_assert!(close(a, b, 1e-9), "{a} vs {b}");
    }

    #[test]
    fn gm_shrinkage_noise_limits(theta in gm(4), r in c64()) {
        let near = gm_shrinkage(r, &theta, 1e-8).unwrap();
        prop_assert!((near - r).norm() <= 1e-3 * r.norm().max(1e-3), "{near} vs {r}");
        let p = theta.weights();
        let prior_mean: C64 = p.iter().zip(&theta.means).map(|(w, m)| m * w).sum();
        let far = gm_shrinkage(r, &theta, 1e8).unwrap();
        prop_assert!((far - prior_mean).norm() <= 1e-3);
    }

    #[test]
    fn noiseless_measurement_is_linear(seed in any::<u64>(), alpha in c64()) {
        let mut rng = Seed(seed).rng();
        let sys = gen_sensing(16, 8, &mut rng).unwrap();
        let h1: Vec<C64> = (0..16).map(|i| C64::new(i as f64, -0.5 * i as f64)).collect();
        let h2 = sample_sv_channel(&ArrayGeometry::ula(16), 2, &mut rng).unwrap().beamspace;
        let mix: Vec<C64> = h1.iter().zip(&h2).map(|(a, b)| alpha * a + b).collect();
        let lhs = measure(&sys, &mix, f64::INFINITY, &mut rng).unwrap();
        let y1 = measure(&sys, &h1, f64::INFINITY, &mut rng).unwrap();
        let y2 = measure(&sys, &h2, f64::INFINITY, &mut rng).unwrap();
        for ((l, a), b) in lhs.iter().zip(&y1).zip(&y2) {
            prop_assert!(close(*l, alpha * a + b, 1e-12));
        }
    }

    #[test]
    fn steering_vectors_have_unit_norm(theta in -1.57..1.57f64, ele in -1.57..1.57f64, n in 1usize..64) {
        let a = steering_ula(&ArrayGeometry::ula(n), theta).unwrap();
        prop_assert!((norm_sqr(&a).sqrt() - 1.0).abs() <= 1e-14);
        let b = steering_upa(&ArrayGeometry::upa(n % 7 + 1, n % 5 + 1), theta, ele).unwrap();
        prop_assert!((norm_sqr(&b).sqrt() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn nmse_is_unitarily_invariant(seed in any::<u64>()) {
        let g = ArrayGeometry::ula(16);
        let u = lens_matrix(&g).unwrap();
        let mut rng = Seed(seed).rng();
        let truth: Vec<Vec<C64>> = (0..3).map(|_| sample_sv_channel(&g, 3, &mut rng).unwrap().spatial).collect();
        let est: Vec<Vec<C64>> = truth
            .iter()
            .enumerate()
            .map(|(k, t)| t.iter().map(|x| x * C64::new(0.8, 0.1 * k as f64)).collect())
            .collect();
        let rot = |v: &Vec<Vec<C64>>| v.iter().map(|x| u.mul_vec(x, &NoTally)).collect::<Vec<_>>();
        let a = nmse(&est, &truth).unwrap();
        let b = nmse(&rot(&est), &rot(&truth)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
    }

    #[test]
    fn nmse_is_energy_weighted_mean(seed in any::<u64>(), d in 1usize..6) {
        let g = ArrayGeometry::ula(8);
        let mut rng = Seed(seed).rng();
        let truth: Vec<Vec<C64>> = (0..d).map(|_| sample_sv_channel(&g, 2, &mut rng).unwrap().beamspace).collect();
        let est: Vec<Vec<C64>> = truth
            .iter()
            .enumerate()
            .map(|(k, t)| t.iter().map(|x| x * (1.0 - 0.3 * k as f64) + C64::new(0.1, 0.0)).collect())
            .collect();
        let energy: Vec<f64> = truth.iter().map(|t| norm_sqr(t)).collect();
        let per: Vec<f64> = est
            .iter()
            .zip(&truth)
            .map(|(e, t)| nmse(std::slice::from_ref(e), std::slice::from_ref(t)).unwrap())
            .collect();
        let weighted = per.iter().zip(&energy).map(|(p, e)| p * e).sum::<f64>() / energy.iter().sum::<f64>();
        let batch = nmse(&est, &truth).unwrap();
        prop_assert!((batch - weighted).abs() <= 1e-12 * batch.max(1e-12));
    }

    #[test]
    fn adam_keeps_mixture_constraints(steps in 1usize..40, seed in any::<u64>(), lr in 1e-3..0.5f64) {
        use rand::Rng;
        let mut rng = Seed(seed).rng();
        let sys = gen_sensing(4, 2, &mut rng).unwrap();
        let mut net = UnfoldedNetwork {
            kind: NetworkKind::GmLamp,
            layers: vec![LayerParams { b: sys.a.transpose_complex(), shrink: Shrinker::Gm(GmParams::spike_init(4, 6.0)) }],
        };
        let mask = TrainMask { b: vec![false], shrink: vec![true] };
        let mut params = gather_params(&net, &mask);
        let mut state = AdamState::new(params.len());
        for _ in 0..steps {
            let grads: Vec<f64> = (0..params.len()).map(|_| rng.gen_range(-50.0..50.0)).collect();
            adam_step(&mut params, &grads, &mut state, lr);
            scatter_params(&mut net, &mask, &params);
            let Shrinker::Gm(g) = &net.layers[0].shrink else { unreachable!() };
            prop_assert!((g.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(g.weights().iter().all(|&p| p > 0.0));
            prop_assert!(g.variances().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn amp_is_phase_equivariant_without_threshold(seed in any::<u64>(), phi in -3.2..3.2f64) {
        let mut rng = Seed(seed).rng();
        let sys = gen_sensing(32, 16, &mut rng).unwrap();
        let h = sample_sv_channel(&ArrayGeometry::ula(32), 3, &mut rng).unwrap().beamspace;
        let y = measure(&sys, &h, 10.0, &mut rng).unwrap();
        let rot = C64::from_polar(1.0, phi);
        let yr: Vec<C64> = y.iter().map(|v| v * rot).collect();
        let cfg = AmpConfig { iterations: 5, lambda: 0.0 };
        let (a, trace) = amp_estimate(&sys, &yr, &cfg).unwrap();
        prop_assert!(trace.layers.iter().all(|l| l.onsager_c.norm() == 0.0));
        let (b, _) = amp_estimate(&sys, &y, &cfg).unwrap();
        for (x, z) in a.iter().zip(&b) {
            prop_assert!(close(*x, z * rot, 1e-9));
        }
    }

    #[test]
    fn amp_estimates_are_sparse_and_vanish_for_large_lambda(seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let sys = gen_sensing(32, 16, &mut rng).unwrap();
        let h = sample_sv_channel(&ArrayGeometry::ula(32), 3, &mut rng).unwrap().beamspace;
        let y = measure(&sys, &h, 10.0, &mut rng).unwrap();
        let (_, trace) = amp_estimate(&sys, &y, &AmpConfig { iterations: 4, lambda: 1.1402 }).unwrap();
        for l in &trace.layers {
            prop_assert!(l.estimate.iter().all(|x| *x == C64::new(0.0, 0.0) || x.norm() > 0.0));
        }
        let (big, _) = amp_estimate(&sys, &y, &AmpConfig { iterations: 4, lambda: 1e6 }).unwrap();
        prop_assert!(big.iter().all(|x| *x == C64::new(0.0, 0.0)));
    }

    #[test]
    fn omp_support_and_normal_equations(seed in any::<u64>(), s in 1usize..12) {
        let mut rng = Seed(seed).rng();
        let sys = gen_sensing(32, 16, &mut rng).unwrap();
        let h = sample_sv_channel(&ArrayGeometry::ula(32), 3, &mut rng).unwrap().beamspace;
        let y = measure(&sys, &h, 15.0, &mut rng).unwrap();
        let est = omp_estimate(&sys, &y, s).unwrap();
        let support: Vec<usize> = (0..32).filter(|&j| est[j] != C64::new(0.0, 0.0)).collect();
        prop_assert_eq!(support.len(), s);
        // A_Sᵀ (y − A x) = 0 on the support
        let ax = sys.a.mul_vec(&est, &NoTally);
        let resid: Vec<C64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let corr = sys.a.tr_mul_vec(&resid, &NoTally);
        let scale = norm_sqr(&y).sqrt();
        for &j in &support {
            prop_assert!(corr[j].norm() <= 1e-8 * scale, "{}", corr[j].norm());
        }
    }
}

#[test]
fn beamspace_transform_preserves_norm() {
    let mut rng = Seed(9).rng();
    for g in [ArrayGeometry::ula(64), ArrayGeometry::upa(4, 8)] {
        for _ in 0..50 {
            let s = sample_sv_channel(&g, 3, &mut rng).unwrap();
            let (a, b) = (norm_sqr(&s.spatial).sqrt(), norm_sqr(&s.beamspace).sqrt());
            assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }
}
